"""Figure rendering from the delimited run outputs.

This is the only module that touches matplotlib.  Each function reads a
CSV written by the drivers and saves one PNG next to it; ``render_run``
sweeps a run directory and renders whatever it finds for a benchmark
tag.  The core library never imports this module.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _read_columns(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {}
    for j, name in enumerate(header):
        raw = [row[j] for row in rows]
        try:
            cols[name] = np.asarray([float(v) for v in raw])
        except ValueError:
            cols[name] = raw
    return cols


def _save(fig, out_path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_loss(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = _read_columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(cols["step"], cols["loss"], lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.set_title(csv_path.stem)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, out_path)


def plot_profile(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = _read_columns(csv_path)
    xs = cols.pop("x")
    fig, ax = plt.subplots(figsize=(6, 4))
    ref = cols.pop("reference")
    ax.plot(xs, ref, "k-", lw=1.5, label="reference")
    styles = ["--", "-.", ":"]
    for i, (name, values) in enumerate(cols.items()):
        ax.plot(xs, values, styles[i % len(styles)], lw=1.2, label=name)
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title(csv_path.stem)
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, out_path)


def plot_errors(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = _read_columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(cols["sample"], cols["rel_l2"], "o", ms=4, label="relative L2")
    ax.semilogy(cols["sample"], cols["rel_linf"], "s", ms=4, label="relative Linf")
    ax.set_xlabel("sample")
    ax.set_ylabel("relative error")
    ax.set_title(csv_path.stem)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, out_path)


def plot_h_study(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = _read_columns(csv_path)
    hs = cols["h"]
    errs = cols["median_broken_error"]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(hs, errs, "o-", label=f"measured (slope {slope:.2f})")
    guide = errs[0] * (hs / hs[0]) ** 2
    ax.loglog(hs, guide, "k--", lw=1, label="h^2 guide")
    ax.set_xlabel("h")
    ax.set_ylabel("median broken-norm error")
    ax.set_title(csv_path.stem)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, out_path)


def plot_eps_study(csv_path, out_path=None) -> Path:
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = _read_columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(cols["epsilon"], cols["median_rel_eps_error"], "o-")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("median relative eps-norm error")
    ax.set_ylim(bottom=0)
    ax.set_title(csv_path.stem)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, out_path)


_RENDERERS = {
    "train-loss.csv": plot_loss,
    "oracle-profile.csv": plot_profile,
    "eval-profile.csv": plot_profile,
    "oracle-errors.csv": plot_errors,
    "eval-errors.csv": plot_errors,
    "eval-oracle-errors.csv": plot_errors,
    "h-study.csv": plot_h_study,
    "eps-study.csv": plot_eps_study,
}


def render_run(out_dir, tag: str | None = None) -> list:
    """Render figures for every recognized CSV in a run directory; with a
    tag, only that benchmark's files."""
    out_dir = Path(out_dir)
    produced = []
    for path in sorted(out_dir.glob("*.csv")):
        if tag is not None and not path.name.startswith(f"{tag}-"):
            continue
        for suffix, renderer in _RENDERERS.items():
            if path.name.endswith(suffix):
                produced.append(renderer(path))
                break
    return produced
