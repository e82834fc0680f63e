"""Command line front end.

Subcommands mirror the experiment drivers: ``gen-data``, ``train``,
``eval``, ``oracle``, ``convergence``, ``reference``, plus ``report``
for figure rendering.  Flags mirror RunConfig fields; a JSON config
file can seed the run with flags overriding it.  Thread count comes
from ``--threads`` or the ``TFPLEARN_THREADS`` environment variable and
is applied before numpy loads, because BLAS libraries read their
environment only once.  Exit codes: 0 success, 2 configuration or data
format problem, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

# CLI destinations that map straight onto RunConfig fields
_CONFIG_FIELDS = (
    "benchmark",
    "preset",
    "seed",
    "n_train",
    "n_test",
    "train_steps",
    "batch_size",
    "divisions",
    "test_grid",
    "length_scale",
    "jitter",
    "epsilon",
    "lr0",
    "beta1",
    "beta2",
    "weight_decay",
    "lr_decay",
    "hidden",
    "weight_continuity",
    "weight_jump",
    "weight_boundary",
    "normalization",
    "points_per_edge",
    "reference_resolution",
    "weighted_flux",
    "out_dir",
    "threads",
    "deterministic",
)


def _int_tuple(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--benchmark", help="benchmark name, e.g. 1d-smooth")
    p.add_argument("--preset", choices=("desk", "paper", "custom"))
    p.add_argument("--seed", type=int)
    p.add_argument("--train", dest="n_train", type=int, help="training sample count")
    p.add_argument("--test", dest="n_test", type=int, help="test sample count")
    p.add_argument("--steps", dest="train_steps", type=int, help="training step count")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--divisions", type=_int_tuple, help="mesh cells, e.g. 32 or 16,16")
    p.add_argument("--test-grid", dest="test_grid", type=_int_tuple)
    p.add_argument("--length-scale", dest="length_scale", type=float)
    p.add_argument("--jitter", type=float)
    p.add_argument("--epsilon", type=float, help="diffusion size for the singular family")
    p.add_argument("--lr0", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--lr-decay", dest="lr_decay", type=float)
    p.add_argument("--hidden", type=_int_tuple, help="MLP hidden sizes, e.g. 64,64,64,64")
    p.add_argument("--weight-continuity", dest="weight_continuity", type=float)
    p.add_argument("--weight-jump", dest="weight_jump", type=float)
    p.add_argument("--weight-boundary", dest="weight_boundary", type=float)
    p.add_argument("--normalization", choices=("sum", "mean"))
    p.add_argument("--points-per-edge", dest="points_per_edge", type=int)
    p.add_argument("--reference-resolution", dest="reference_resolution", type=int)
    p.add_argument(
        "--weighted-flux",
        dest="weighted_flux",
        action="store_const",
        const=True,
        help="use the diffusion-weighted flux jump convention",
    )
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--threads", type=int, help="BLAS thread count")
    p.add_argument(
        "--deterministic",
        action="store_const",
        const=True,
        help="single thread, no timings in summaries",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfplearn",
        description="Tailored local bases and coefficient networks for "
        "elliptic interface problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("gen-data", "sample sources and solve references"),
        ("train", "train the coefficient network on the physics loss"),
        ("eval", "evaluate a trained checkpoint against references"),
        ("oracle", "evaluate exact least-squares coefficients"),
        ("convergence", "mesh or epsilon study with fitted slope"),
        ("reference", "solve references and report doubling drift"),
    )
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        if name == "convergence":
            p.add_argument("--study", choices=("h", "eps"), default="h")
    rp = sub.add_parser("report", help="render figures from run CSV files")
    rp.add_argument("--out-dir", dest="out_dir", default="runs")
    rp.add_argument("--benchmark", help="only this benchmark's files")
    return parser


def _resolve_threads(args) -> int | None:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("TFPLEARN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"ignoring unreadable TFPLEARN_THREADS={env!r}", file=sys.stderr)
    if getattr(args, "deterministic", None):
        return 1
    return None


def _apply_threads(n: int) -> None:
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _build_config(args):
    from .config import RunConfig
    from .errors import ConfigError

    base = {}
    if args.config:
        from .config import RunConfig as RC

        base = RC.from_json(args.config).manifest()
        # manifest carries resolved extras; keep only real fields
        import dataclasses

        names = {f.name for f in dataclasses.fields(RC)}
        base = {k: v for k, v in base.items() if k in names}
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    if "benchmark" not in base or base["benchmark"] is None:
        raise ConfigError("a benchmark name is required (--benchmark or --config)")
    return RunConfig.from_dict(base)


def _dispatch(args) -> dict:
    if args.command == "report":
        from .figures import render_run

        tag = None
        if args.benchmark:
            from .config import RunConfig

            tag = RunConfig(benchmark=args.benchmark).tag()
        produced = render_run(args.out_dir, tag)
        return {"command": "report", "figures": [str(p) for p in produced]}

    cfg = _build_config(args)
    from . import drivers

    if args.command == "gen-data":
        return drivers.gen_data(cfg)
    if args.command == "train":
        return drivers.run_train(cfg)
    if args.command == "eval":
        return drivers.run_eval(cfg)
    if args.command == "oracle":
        return drivers.run_oracle(cfg)
    if args.command == "convergence":
        return drivers.run_convergence(cfg, study=args.study)
    if args.command == "reference":
        return drivers.run_reference(cfg)
    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = _resolve_threads(args)
    if threads is not None:
        _apply_threads(threads)

    from .errors import (
        ConfigError,
        DataFormatError,
        GeometryError,
        NumericError,
        ShapeMismatch,
    )

    try:
        summary = _dispatch(args)
    except (ConfigError, DataFormatError, GeometryError, ShapeMismatch) as err:
        # mesh and shape contract violations reachable from here are all
        # bad inputs (mismatched dataset, interface off the grid), so they
        # share the configuration exit code
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
