"""End-to-end runs: data generation, training, evaluation, studies.

Every driver takes a RunConfig, writes its artifacts under the config's
output directory, and returns a summary dict.  Artifacts per benchmark
tag: dataset containers, a checkpoint, error tables as CSV, plot-ready
CSV files, a manifest with every resolved knob, and a summary JSON.
Summaries stay free of wall-clock times when the determinism flag is on
so that repeat runs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import DatasetContainer, canonical_json
from .errors import ConfigError, MeshMismatch, NumericError, TrainingDiverged
from .grf import FieldSampler, GrfSpec
from .loss import ResidualSystem, ResidualWeights
from .metrics import (
    broken_error_norm,
    error_report,
    loglog_slope,
    relative_epsilon_error,
    relative_errors,
)
from .network import (
    AdamW,
    CnnSpec,
    OutputRescaling,
    backward,
    fit_rescaling,
    forward,
    init_network,
    load_checkpoint,
    mlp_spec,
    save_checkpoint,
)
from .reconstruct import SolutionSpace
from .reference import OracleSolver, pick_resolution, solve_reference_batch

# seed stream tags, one per independent random use
_STREAM_TRAIN = 0
_STREAM_TEST = 1
_STREAM_INIT = 2
_STREAM_BATCH = 3
_STREAM_HSTUDY = 4
_STREAM_EPS = 5

_H_DIVISIONS = (8, 16, 32, 64)
_EPS_SWEEP = (1e-2, 1e-3, 1e-4)


# ---------------------------------------------------------------------------
# shared plumbing


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def artifact_path(cfg: RunConfig, suffix: str) -> Path:
    return _out_dir(cfg) / f"{cfg.tag()}-{suffix}"


def dataset_path(cfg: RunConfig, split: str) -> Path:
    return artifact_path(cfg, f"{split}.bin")


def _write_json(path: Path, obj: dict) -> None:
    path.write_bytes(canonical_json(obj) + b"\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _finish(cfg: RunConfig, command: str, summary: dict, started: float) -> dict:
    summary = dict(summary)
    summary["command"] = command
    summary["benchmark"] = cfg.problem().name
    if not cfg.deterministic:
        summary["elapsed_seconds"] = round(time.perf_counter() - started, 3)
    _write_json(artifact_path(cfg, f"{command}-manifest.json"), cfg.manifest())
    _write_json(artifact_path(cfg, f"{command}-summary.json"), summary)
    return summary


def _build_system(cfg: RunConfig, problem=None, mesh=None) -> ResidualSystem:
    problem = problem if problem is not None else cfg.problem()
    mesh = mesh if mesh is not None else cfg.mesh()
    space = SolutionSpace(problem, mesh)
    weights = ResidualWeights(
        continuity=cfg.weight_continuity,
        jump=cfg.weight_jump,
        boundary=cfg.weight_boundary,
    )
    return ResidualSystem(
        space,
        points_per_edge=cfg.points_per_edge,
        weights=weights,
        normalization=cfg.normalization,
    )


def _stream(cfg: RunConfig, tag: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, tag])


def grid_axes(problem, test_grid):
    if problem.dimension == 1:
        lo, hi = problem.domain
        return (np.linspace(lo, hi, int(test_grid[0])),)
    (x0, x1), (y0, y1) = problem.domain
    ny, nx = (int(test_grid[0]), int(test_grid[1]))
    return np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)


def evaluate_on_grid(solution, test_grid) -> np.ndarray:
    """Solution values on the display grid, lower side at seams; 2D rows
    run along y to match the reference layout."""
    axes = grid_axes(solution.space.problem, test_grid)
    if len(axes) == 1:
        return solution.evaluate(axes[0])
    xs, ys = axes
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return solution.evaluate(pts).reshape(len(ys), len(xs))


def _restricted_reference(ref, test_grid) -> np.ndarray:
    return ref.restrict(int(test_grid[0]) - 1).values


def _sampler_from_container(container: DatasetContainer) -> FieldSampler:
    g = container.grf
    spec = GrfSpec(
        sensors=np.asarray(g["sensors"], dtype=float),
        length_scale=float(g["length_scale"]),
        jitter=float(g["jitter"]),
    )
    return FieldSampler(spec)


def _check_container(cfg: RunConfig, container: DatasetContainer, split: str) -> None:
    problem = cfg.problem()
    if container.benchmark != problem.name:
        raise MeshMismatch(
            f"{split} dataset was generated for {container.benchmark!r}, "
            f"config asks for {problem.name!r}"
        )
    if tuple(container.divisions) != cfg.resolved_divisions():
        raise MeshMismatch(
            f"{split} dataset mesh {tuple(container.divisions)} does not match "
            f"config mesh {cfg.resolved_divisions()}"
        )
    if tuple(container.test_grid) != cfg.resolved_test_grid():
        raise MeshMismatch(
            f"{split} dataset test grid {tuple(container.test_grid)} does not "
            f"match config grid {cfg.resolved_test_grid()}"
        )


def _load_split(cfg: RunConfig, split: str) -> DatasetContainer:
    path = dataset_path(cfg, split)
    if not path.exists():
        raise ConfigError(f"no {split} dataset at {path}; run gen-data first")
    container = DatasetContainer.load(path)
    _check_container(cfg, container, split)
    return container


def _oracle_coefficients(system: ResidualSystem, rhs_all: np.ndarray) -> np.ndarray:
    oracle = OracleSolver(system)
    return np.stack([oracle.solve_rhs(rhs) for rhs in rhs_all])


def _rhs_for_samples(system, sampler, f_values: np.ndarray) -> np.ndarray:
    ext = sampler.extension_matrix(system.source_nodes)
    return system.rhs_from_values(f_values @ ext.T)


def _solutions_on_grid(system, sampler, f_values, coeffs, test_grid) -> np.ndarray:
    space = system.space
    out = []
    for values, c in zip(f_values, coeffs):
        field = sampler.interpolant(values)
        out.append(evaluate_on_grid(space.solution(c, field), test_grid))
    return np.stack(out)


# ---------------------------------------------------------------------------
# data generation


def gen_data(cfg: RunConfig) -> dict:
    """Sample sources, solve references for the test split, fit oracle
    coefficients for the train split, and write both containers."""
    started = time.perf_counter()
    problem = cfg.problem()
    mesh = cfg.mesh()
    grf_spec = cfg.grf_spec()
    sampler = FieldSampler(grf_spec)
    n_train = cfg.resolved_n_train()
    test_grid = cfg.resolved_test_grid()

    f_train = sampler.sample(_stream(cfg, _STREAM_TRAIN), n_train)
    f_test = sampler.sample(_stream(cfg, _STREAM_TEST), cfg.n_test)

    system = _build_system(cfg, problem, mesh)
    rhs_train = _rhs_for_samples(system, sampler, f_train)
    oracle_train = _oracle_coefficients(system, rhs_train)

    resolution = cfg.reference_resolution or pick_resolution(problem)
    fields = [sampler.interpolant(v) for v in f_test]
    refs = solve_reference_batch(problem, fields, resolution)
    ref_values = np.stack([_restricted_reference(r, test_grid) for r in refs])

    common = dict(
        benchmark=problem.name,
        seed=cfg.seed,
        divisions=cfg.resolved_divisions(),
        test_grid=test_grid,
        grf=grf_spec.header_dict(),
        epsilon=cfg.epsilon,
    )
    train_path = dataset_path(cfg, "train")
    DatasetContainer(
        split="train", f_values=f_train, oracle_coeffs=oracle_train, **common
    ).save(train_path)
    test_path = dataset_path(cfg, "test")
    DatasetContainer(
        split="test",
        f_values=f_test,
        references=ref_values,
        reference_resolution=resolution,
        **common,
    ).save(test_path)

    summary = {
        "train_file": train_path.name,
        "test_file": test_path.name,
        "n_train": n_train,
        "n_test": cfg.n_test,
        "reference_resolution": resolution,
        "train_sha256": _sha256(train_path),
        "test_sha256": _sha256(test_path),
    }
    return _finish(cfg, "gen-data", summary, started)


# ---------------------------------------------------------------------------
# oracle evaluation


def run_oracle(cfg: RunConfig) -> dict:
    """Exact least-squares coefficients on the test split, with error
    tables against the stored references."""
    started = time.perf_counter()
    container = _load_split(cfg, "test")
    refs = container.require_references()
    sampler = _sampler_from_container(container)
    system = _build_system(cfg)
    test_grid = cfg.resolved_test_grid()

    rhs_all = _rhs_for_samples(system, sampler, container.f_values)
    coeffs = _oracle_coefficients(system, rhs_all)
    preds = _solutions_on_grid(system, sampler, container.f_values, coeffs, test_grid)

    report = error_report(cfg.problem().name, list(preds), list(refs))
    _write_csv(
        artifact_path(cfg, "oracle-errors.csv"),
        ("benchmark", "sample", "rel_l2", "rel_linf"),
        report.csv_rows(),
    )
    _write_profile(cfg, "oracle-profile.csv", test_grid, refs[0], oracle=preds[0])

    summary = dict(report.summary())
    summary["n_samples"] = container.n_samples
    return _finish(cfg, "oracle", summary, started)


def _write_profile(cfg: RunConfig, name: str, test_grid, reference, **methods) -> None:
    """Plot-ready slice of the first test sample: the full line in 1D, the
    midline row in 2D."""
    axes = grid_axes(cfg.problem(), test_grid)
    if len(axes) == 1:
        xs = axes[0]
        ref_line = reference
        lines = {k: v for k, v in methods.items()}
    else:
        xs = axes[0]
        mid = reference.shape[0] // 2
        ref_line = reference[mid]
        lines = {k: v[mid] for k, v in methods.items()}
    header = ["x", "reference", *lines.keys()]
    rows = [
        [f"{xs[i]:.17g}", f"{ref_line[i]:.17g}"]
        + [f"{line[i]:.17g}" for line in lines.values()]
        for i in range(len(xs))
    ]
    _write_csv(artifact_path(cfg, name), header, rows)


# ---------------------------------------------------------------------------
# training


def _network_for(cfg: RunConfig, system: ResidualSystem):
    problem = system.space.problem
    n_sensors = len(system.space.mesh.cell_centers())
    if problem.dimension == 1:
        return mlp_spec(n_sensors, system.space.n_coeffs, cfg.hidden), False
    divisions = cfg.resolved_divisions()
    if divisions != (16, 16):
        raise ConfigError(
            f"2D training is wired for the 16x16 mesh, got {divisions}"
        )
    return CnnSpec(), True


def run_train(cfg: RunConfig) -> dict:
    """Physics-loss training of the coefficient network on the train split."""
    started = time.perf_counter()
    container = _load_split(cfg, "train")
    sampler = _sampler_from_container(container)
    system = _build_system(cfg)
    spec, tanh_head = _network_for(cfg, system)
    if container.f_values.shape[1] != spec.n_in:
        raise MeshMismatch(
            f"dataset carries {container.f_values.shape[1]} sensors, the network "
            f"expects {spec.n_in}"
        )

    rescaling = fit_rescaling(container.require_oracle(), tanh_head)
    rhs_all = _rhs_for_samples(system, sampler, container.f_values)
    f_all = container.f_values
    n = container.n_samples
    batch = cfg.resolved_batch_size(n)
    steps = cfg.resolved_train_steps()

    state = init_network(spec, _stream(cfg, _STREAM_INIT))
    opt = AdamW(
        lr0=cfg.resolved_lr0(),
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        weight_decay=cfg.weight_decay,
        decay=cfg.lr_decay,
    )
    rng_batch = _stream(cfg, _STREAM_BATCH)

    order = np.arange(n)
    cursor = n  # force a fresh permutation on first use
    history = []
    for step in range(1, steps + 1):
        if batch >= n:
            idx = slice(None)
        else:
            if cursor + batch > n:
                order = rng_batch.permutation(n)
                cursor = 0
            idx = order[cursor : cursor + batch]
            cursor += batch
        x = f_all[idx]
        rhs = rhs_all[idx]
        lr_used = opt.lr
        z, cache = forward(state, x)
        coeffs = rescaling.apply(z)
        sample_losses = system.loss_batch(coeffs, rhs)
        loss = float(np.mean(sample_losses))
        if not np.isfinite(loss):
            _dump_divergence(cfg, step, x, coeffs, sample_losses)
            raise TrainingDiverged(
                f"non-finite loss at step {step}; offending batch written to "
                f"{artifact_path(cfg, 'diverged.bin')}"
            )
        grad_c = system.gradient_batch(coeffs, rhs) / x.shape[0]
        grads = backward(state, cache, rescaling.chain_gradient(grad_c))
        opt.step(state, grads)
        history.append((step, lr_used, loss))

    _write_csv(
        artifact_path(cfg, "train-loss.csv"),
        ("step", "lr", "loss"),
        [(s, f"{lr:.17g}", f"{l:.17g}") for s, lr, l in history],
    )
    ckpt_path = artifact_path(cfg, "model.bin")
    save_checkpoint(
        ckpt_path,
        state,
        opt,
        rescaling,
        rng_batch,
        extra={
            "benchmark": container.benchmark,
            "divisions": list(container.divisions),
            "steps": steps,
            "batch_size": batch,
            "final_loss": history[-1][2],
        },
    )

    tail = [l for _, _, l in history[-50:]]
    summary = {
        "checkpoint": ckpt_path.name,
        "steps": steps,
        "batch_size": batch,
        "n_train": n,
        "first_loss": history[0][2],
        "final_loss": history[-1][2],
        "tail_mean_loss": float(np.mean(tail)),
        "n_parameters": state.n_parameters(),
    }
    return _finish(cfg, "train", summary, started)


def _dump_divergence(cfg, step, x, coeffs, sample_losses) -> None:
    from .dataset import write_blocks

    write_blocks(
        artifact_path(cfg, "diverged.bin"),
        {"kind": "divergence-dump", "step": int(step)},
        [
            ("f_batch", np.asarray(x, dtype=float)),
            ("coeffs", np.asarray(coeffs, dtype=float)),
            ("sample_losses", np.asarray(sample_losses, dtype=float)),
        ],
    )


# ---------------------------------------------------------------------------
# evaluation


def run_eval(cfg: RunConfig) -> dict:
    """Trained-network errors on the test split, next to the same-run
    oracle errors for the ratio check."""
    started = time.perf_counter()
    container = _load_split(cfg, "test")
    refs = container.require_references()
    sampler = _sampler_from_container(container)
    system = _build_system(cfg)
    test_grid = cfg.resolved_test_grid()

    ckpt_path = artifact_path(cfg, "model.bin")
    if not ckpt_path.exists():
        raise ConfigError(f"no checkpoint at {ckpt_path}; run train first")
    state, _, rescaling, _, header = load_checkpoint(ckpt_path)
    trained_for = header.get("extra", {}).get("benchmark")
    if trained_for is not None and trained_for != container.benchmark:
        raise MeshMismatch(
            f"checkpoint was trained on {trained_for!r}, dataset is "
            f"{container.benchmark!r}"
        )

    state.eval()
    z, _ = forward(state, container.f_values)
    net_coeffs = rescaling.apply(z)
    net_preds = _solutions_on_grid(
        system, sampler, container.f_values, net_coeffs, test_grid
    )

    rhs_all = _rhs_for_samples(system, sampler, container.f_values)
    oracle_coeffs = _oracle_coefficients(system, rhs_all)
    oracle_preds = _solutions_on_grid(
        system, sampler, container.f_values, oracle_coeffs, test_grid
    )

    name = cfg.problem().name
    net_report = error_report(name, list(net_preds), list(refs))
    oracle_report = error_report(name, list(oracle_preds), list(refs))
    _write_csv(
        artifact_path(cfg, "eval-errors.csv"),
        ("benchmark", "sample", "rel_l2", "rel_linf"),
        net_report.csv_rows(),
    )
    _write_csv(
        artifact_path(cfg, "eval-oracle-errors.csv"),
        ("benchmark", "sample", "rel_l2", "rel_linf"),
        oracle_report.csv_rows(),
    )
    _write_profile(
        cfg,
        "eval-profile.csv",
        test_grid,
        refs[0],
        network=net_preds[0],
        oracle=oracle_preds[0],
    )

    net_summary = net_report.summary()
    oracle_summary = oracle_report.summary()
    net_med = net_summary["rel_l2"]["median"]
    oracle_med = oracle_summary["rel_l2"]["median"]
    summary = {
        "network": net_summary,
        "oracle": oracle_summary,
        "median_ratio_vs_oracle": net_med / oracle_med if oracle_med > 0 else float("inf"),
        "n_samples": container.n_samples,
    }
    return _finish(cfg, "eval", summary, started)


# ---------------------------------------------------------------------------
# convergence studies


def run_convergence(cfg: RunConfig, study: str = "h") -> dict:
    if study == "h":
        return _h_study(cfg)
    if study == "eps":
        return _eps_study(cfg)
    raise ConfigError(f"unknown study {study!r}; choose 'h' or 'eps'")


def _h_study(cfg: RunConfig) -> dict:
    """Oracle broken-norm error against the mesh size, with the fitted
    log-log slope."""
    started = time.perf_counter()
    problem = cfg.problem()
    if problem.dimension != 1:
        raise ConfigError("the h study runs on 1D benchmarks")
    from .geometry import build_mesh

    grf_spec = cfg.grf_spec()
    sampler = FieldSampler(grf_spec)
    f_samples = sampler.sample(_stream(cfg, _STREAM_HSTUDY), cfg.n_test)
    fields = [sampler.interpolant(v) for v in f_samples]
    # the reference must out-resolve the finest rung of the ladder by a
    # wide margin, or its own error saturates the last point and drags
    # the fitted slope down
    floor = 16 * max(_H_DIVISIONS)
    resolution = cfg.reference_resolution or max(floor, pick_resolution(problem))
    refs = solve_reference_batch(problem, fields, resolution)

    rows = []
    medians = []
    hs = []
    for m in _H_DIVISIONS:
        mesh = build_mesh(problem.domain, m, problem.interface)
        system = _build_system(cfg, problem, mesh)
        oracle = OracleSolver(system)
        errs = []
        for field, ref in zip(fields, refs):
            rhs = system.rhs(field)
            c = oracle.solve_rhs(rhs)
            solution = system.space.solution(c, field)
            errs.append(broken_error_norm(solution, ref, order=2))
        med = float(np.median(errs))
        h = 1.0 / m
        rows.append((m, f"{h:.17g}", f"{med:.17g}"))
        medians.append(med)
        hs.append(h)
    slope = loglog_slope(np.asarray(hs), np.asarray(medians))
    _write_csv(
        artifact_path(cfg, "h-study.csv"), ("cells", "h", "median_broken_error"), rows
    )
    summary = {
        "divisions": list(_H_DIVISIONS),
        "median_errors": medians,
        "slope": slope,
        "n_samples": cfg.n_test,
        "reference_resolution": resolution,
    }
    return _finish(cfg, "convergence-h", summary, started)


def _eps_study(cfg: RunConfig) -> dict:
    """Relative eps-norm oracle error across the singular family; the
    max/min ratio is the uniformity measure."""
    started = time.perf_counter()
    if cfg.benchmark != "1d-singular":
        raise ConfigError("the eps study runs on the 1d-singular family")
    rows = []
    medians = []
    resolutions = []
    for eps in _EPS_SWEEP:
        ecfg = cfg.replace(epsilon=eps, reference_resolution=None)
        problem = ecfg.problem()
        sampler = FieldSampler(ecfg.grf_spec())
        f_samples = sampler.sample(_stream(cfg, _STREAM_EPS), cfg.n_test)
        fields = [sampler.interpolant(v) for v in f_samples]
        resolution = pick_resolution(problem)
        refs = solve_reference_batch(problem, fields, resolution)
        system = _build_system(ecfg, problem)
        oracle = OracleSolver(system)
        errs = []
        for field, ref in zip(fields, refs):
            c = oracle.solve_rhs(system.rhs(field))
            solution = system.space.solution(c, field)
            errs.append(relative_epsilon_error(solution, ref, eps))
        errs = np.asarray(errs)
        if not np.all(np.isfinite(errs)):
            raise NumericError(f"non-finite eps-norm error at eps={eps:g}")
        med = float(np.median(errs))
        rows.append((f"{eps:g}", resolution, f"{med:.17g}"))
        medians.append(med)
        resolutions.append(resolution)
    ratio = max(medians) / min(medians)
    _write_csv(
        artifact_path(cfg, "eps-study.csv"),
        ("epsilon", "reference_resolution", "median_rel_eps_error"),
        rows,
    )
    summary = {
        "epsilons": [float(e) for e in _EPS_SWEEP],
        "median_errors": medians,
        "max_over_min": ratio,
        "resolutions": resolutions,
        "n_samples": cfg.n_test,
    }
    return _finish(cfg, "convergence-eps", summary, started)


# ---------------------------------------------------------------------------
# reference diagnostics


def run_reference(cfg: RunConfig) -> dict:
    """Solve the test-split references, report the change under one
    resolution doubling, and write the test container."""
    started = time.perf_counter()
    problem = cfg.problem()
    grf_spec = cfg.grf_spec()
    sampler = FieldSampler(grf_spec)
    test_grid = cfg.resolved_test_grid()
    f_test = sampler.sample(_stream(cfg, _STREAM_TEST), cfg.n_test)
    fields = [sampler.interpolant(v) for v in f_test]

    resolution = cfg.reference_resolution or pick_resolution(problem)
    refs = solve_reference_batch(problem, fields, resolution)
    refs_fine = solve_reference_batch(problem, fields, resolution * 2)

    drifts = []
    for coarse, fine in zip(refs, refs_fine):
        a = _restricted_reference(coarse, test_grid)
        b = _restricted_reference(fine, test_grid)
        l2, _ = relative_errors(a, b)
        drifts.append(l2)

    ref_values = np.stack([_restricted_reference(r, test_grid) for r in refs])
    test_path = dataset_path(cfg, "test")
    DatasetContainer(
        benchmark=problem.name,
        split="test",
        seed=cfg.seed,
        divisions=cfg.resolved_divisions(),
        test_grid=test_grid,
        grf=grf_spec.header_dict(),
        f_values=f_test,
        references=ref_values,
        reference_resolution=resolution,
        epsilon=cfg.epsilon,
    ).save(test_path)

    summary = {
        "test_file": test_path.name,
        "reference_resolution": resolution,
        "doubling_drift_median": float(np.median(drifts)),
        "doubling_drift_max": float(np.max(drifts)),
        "n_samples": cfg.n_test,
    }
    return _finish(cfg, "reference", summary, started)
