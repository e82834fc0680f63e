"""Command line behavior: flag plumbing, exit codes, report rendering.

All tests drive ``main`` in process to keep the file fast; one subprocess
check confirms the installed entry point resolves.
"""

import json
import os
import subprocess

import pytest

from tfplearn.cli import main
from tfplearn.drivers import artifact_path, gen_data, run_eval, run_train

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _base_args(tmp_path, *extra):
    return [
        "--benchmark",
        "1d-smooth",
        "--preset",
        "custom",
        "--train",
        "3",
        "--test",
        "2",
        "--steps",
        "3",
        "--hidden",
        "8,8",
        "--seed",
        "5",
        "--out-dir",
        str(tmp_path),
        *extra,
    ]


def test_full_flow_exit_codes(tmp_path, capsys):
    assert main(["gen-data", *_base_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "gen-data"
    assert summary["n_train"] == 3

    assert main(["train", *_base_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "train"
    assert summary["steps"] == 3

    assert main(["eval", *_base_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert "median_ratio_vs_oracle" in summary

    assert main(["oracle", *_base_args(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rel_l2"]["median"] < 1e-2


def test_missing_benchmark_is_config_error(tmp_path, capsys):
    assert main(["gen-data", "--out-dir", str(tmp_path)]) == 2
    assert "benchmark" in capsys.readouterr().err


def test_unknown_benchmark_is_config_error(tmp_path, capsys):
    args = ["gen-data", "--benchmark", "3d-mystery", "--out-dir", str(tmp_path)]
    assert main(args) == 2
    assert "3d-mystery" in capsys.readouterr().err


def test_zero_train_count_is_config_error(tmp_path, capsys):
    args = _base_args(tmp_path)
    args[args.index("--train") + 1] = "0"
    assert main(["gen-data", *args]) == 2
    capsys.readouterr()


def test_train_without_dataset_is_config_error(tmp_path, capsys):
    assert main(["train", *_base_args(tmp_path)]) == 2
    assert "gen-data" in capsys.readouterr().err


def test_mesh_mismatch_maps_to_config_exit(tmp_path, capsys):
    assert main(["gen-data", *_base_args(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["oracle", *_base_args(tmp_path, "--divisions", "16")]) == 2
    assert "mesh" in capsys.readouterr().err


def test_unresolved_layer_maps_to_numeric_exit(tmp_path, capsys):
    args = [
        "reference",
        "--benchmark",
        "1d-singular",
        "--preset",
        "custom",
        "--train",
        "1",
        "--test",
        "1",
        "--steps",
        "1",
        "--epsilon",
        "1e-9",
        "--out-dir",
        str(tmp_path),
    ]
    assert main(args) == 3
    assert capsys.readouterr().err.startswith("numeric failure")


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(
        json.dumps(
            {
                "benchmark": "1d-smooth",
                "preset": "custom",
                "n_train": 3,
                "n_test": 2,
                "train_steps": 4,
                "out_dir": str(tmp_path),
            }
        )
    )
    args = ["gen-data", "--config", str(cfg_file), "--test", "1", "--seed", "9"]
    assert main(args) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_train"] == 3  # from the file
    assert summary["n_test"] == 1  # flag wins


def test_bad_divisions_flag_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--benchmark", "1d-smooth", "--divisions", "x"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_threads_env_variable(tmp_path, monkeypatch, capsys):
    for var in _THREAD_VARS:
        monkeypatch.setenv(var, "unset-sentinel")
    monkeypatch.setenv("TFPLEARN_THREADS", "3")
    assert main(["report", "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    assert os.environ["OMP_NUM_THREADS"] == "3"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "3"


def test_threads_flag_beats_env(tmp_path, monkeypatch, capsys):
    for var in _THREAD_VARS:
        monkeypatch.setenv(var, "unset-sentinel")
    monkeypatch.setenv("TFPLEARN_THREADS", "3")
    args = _base_args(tmp_path, "--threads", "2")
    assert main(["gen-data", *args]) == 0
    capsys.readouterr()
    assert os.environ["OMP_NUM_THREADS"] == "2"


def test_unreadable_threads_env_is_ignored(tmp_path, monkeypatch, capsys):
    for var in _THREAD_VARS:
        monkeypatch.setenv(var, "untouched")
    monkeypatch.setenv("TFPLEARN_THREADS", "soup")
    assert main(["report", "--out-dir", str(tmp_path)]) == 0
    err = capsys.readouterr().err
    assert "TFPLEARN_THREADS" in err
    assert os.environ["OMP_NUM_THREADS"] == "untouched"


def test_deterministic_forces_single_thread(tmp_path, monkeypatch, capsys):
    for var in _THREAD_VARS:
        monkeypatch.setenv(var, "unset-sentinel")
    monkeypatch.delenv("TFPLEARN_THREADS", raising=False)
    args = _base_args(tmp_path, "--deterministic")
    assert main(["gen-data", *args]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert "elapsed_seconds" not in summary
    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_report_renders_figures(small_config, tmp_path, capsys):
    cfg = small_config()
    gen_data(cfg)
    run_train(cfg)
    run_eval(cfg)

    rc = main(["report", "--out-dir", str(tmp_path), "--benchmark", "1d-smooth"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    produced = summary["figures"]
    assert len(produced) >= 4
    for p in produced:
        assert p.endswith(".png") and os.path.exists(p)
    assert artifact_path(cfg, "train-loss.png").exists()
    assert artifact_path(cfg, "eval-profile.png").exists()


def test_installed_entry_point():
    proc = subprocess.run(
        ["tfplearn", "--help"], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
    assert "convergence" in proc.stdout
