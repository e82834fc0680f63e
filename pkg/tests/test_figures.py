"""Figure rendering from synthetic run CSVs."""

import subprocess
import sys

from tfplearn.figures import (
    plot_eps_study,
    plot_errors,
    plot_h_study,
    plot_loss,
    plot_profile,
    render_run,
)


def _write(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _loss_csv(path):
    rows = [(s, 3e-3 * 0.9995**s, 0.1 / (1 + s)) for s in range(1, 40)]
    return _write(path, ("step", "lr", "loss"), rows)


def _profile_csv(path):
    rows = [(i / 20, i / 20, i / 20 + 0.01, i / 20 - 0.01) for i in range(21)]
    return _write(path, ("x", "reference", "network", "oracle"), rows)


def _errors_csv(path):
    rows = [("1d-smooth", i, 10 ** (-3 - 0.1 * i), 10 ** (-2.5 - 0.1 * i)) for i in range(8)]
    return _write(path, ("benchmark", "sample", "rel_l2", "rel_linf"), rows)


def test_plot_loss(tmp_path):
    csv_path = _loss_csv(tmp_path / "run-train-loss.csv")
    out = plot_loss(csv_path)
    assert out == tmp_path / "run-train-loss.png"
    assert out.stat().st_size > 0


def test_plot_loss_custom_target(tmp_path):
    csv_path = _loss_csv(tmp_path / "run-train-loss.csv")
    target = tmp_path / "elsewhere.png"
    assert plot_loss(csv_path, target) == target
    assert target.exists()


def test_plot_profile(tmp_path):
    csv_path = _profile_csv(tmp_path / "run-eval-profile.csv")
    out = plot_profile(csv_path)
    assert out.exists() and out.suffix == ".png"


def test_plot_errors(tmp_path):
    csv_path = _errors_csv(tmp_path / "run-eval-errors.csv")
    out = plot_errors(csv_path)
    assert out.exists() and out.stat().st_size > 0


def test_plot_h_study(tmp_path):
    rows = [(m, 1.0 / m, 2.0 / m**2) for m in (8, 16, 32, 64)]
    csv_path = _write(
        tmp_path / "run-h-study.csv", ("cells", "h", "median_broken_error"), rows
    )
    assert plot_h_study(csv_path).exists()


def test_plot_eps_study(tmp_path):
    rows = [(e, 1024, 3e-4) for e in (1e-2, 1e-3, 1e-4)]
    csv_path = _write(
        tmp_path / "run-eps-study.csv",
        ("epsilon", "reference_resolution", "median_rel_eps_error"),
        rows,
    )
    assert plot_eps_study(csv_path).exists()


def test_render_run_sweeps_and_filters(tmp_path):
    _loss_csv(tmp_path / "alpha-train-loss.csv")
    _profile_csv(tmp_path / "alpha-eval-profile.csv")
    _errors_csv(tmp_path / "alpha-eval-errors.csv")
    _loss_csv(tmp_path / "beta-train-loss.csv")
    _write(tmp_path / "alpha-notes.csv", ("a", "b"), [(1, 2)])

    produced = render_run(tmp_path)
    names = sorted(p.name for p in produced)
    assert names == [
        "alpha-eval-errors.png",
        "alpha-eval-profile.png",
        "alpha-train-loss.png",
        "beta-train-loss.png",
    ]

    only_alpha = render_run(tmp_path, tag="alpha")
    assert all(p.name.startswith("alpha-") for p in only_alpha)
    assert len(only_alpha) == 3

    assert render_run(tmp_path / "missing" if False else tmp_path, tag="gamma") == []


def test_core_library_never_imports_matplotlib():
    code = (
        "import sys\n"
        "import tfplearn.drivers, tfplearn.cli, tfplearn.config, tfplearn.reference\n"
        "sys.exit(1 if 'matplotlib' in sys.modules else 0)\n"
    )
    proc = subprocess.run([sys.executable, "-c", code], timeout=120)
    assert proc.returncode == 0
