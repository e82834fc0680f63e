"""End-to-end checks of the command drivers on tiny configurations.

Everything here runs the real pipeline (sampling, references, oracle,
training, evaluation) but with a handful of samples and steps so the whole
file stays in the seconds range.
"""

import csv
import dataclasses
import json
import shutil
import warnings

import numpy as np
import pytest

from tfplearn.config import RunConfig
from tfplearn.dataset import DatasetContainer, read_blocks
from tfplearn.drivers import (
    artifact_path,
    dataset_path,
    gen_data,
    run_convergence,
    run_eval,
    run_oracle,
    run_reference,
    run_train,
)
from tfplearn.errors import ConfigError, MeshMismatch, TrainingDiverged


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_gen_data_artifacts(small_config):
    cfg = small_config()
    summary = gen_data(cfg)

    assert summary["command"] == "gen-data"
    assert summary["benchmark"] == "1d-smooth"
    assert summary["n_train"] == 4 and summary["n_test"] == 2
    assert summary["reference_resolution"] == 256
    assert len(summary["train_sha256"]) == 64
    assert "elapsed_seconds" in summary

    train = DatasetContainer.load(dataset_path(cfg, "train"))
    assert train.split == "train"
    assert train.f_values.shape == (4, 32)
    assert train.require_oracle().shape == (4, 64)
    assert train.references is None

    test = DatasetContainer.load(dataset_path(cfg, "test"))
    assert test.split == "test"
    assert test.f_values.shape == (2, 32)
    assert test.require_references().shape == (2, 257)
    assert test.reference_resolution == 256
    assert test.benchmark == "1d-smooth"

    manifest = json.loads(
        artifact_path(cfg, "gen-data-manifest.json").read_text()
    )
    assert manifest["benchmark"] == "1d-smooth"
    assert manifest["resolved_divisions"] == [32]
    on_disk = json.loads(artifact_path(cfg, "gen-data-summary.json").read_text())
    assert on_disk["train_sha256"] == summary["train_sha256"]


def test_gen_data_deterministic_bitwise(small_config, tmp_path):
    cfg_a = small_config(deterministic=True, out_dir=str(tmp_path / "a"))
    cfg_b = small_config(deterministic=True, out_dir=str(tmp_path / "b"))
    summary_a = gen_data(cfg_a)
    summary_b = gen_data(cfg_b)

    assert "elapsed_seconds" not in summary_a
    for split in ("train", "test"):
        assert (
            dataset_path(cfg_a, split).read_bytes()
            == dataset_path(cfg_b, split).read_bytes()
        )
    assert (
        artifact_path(cfg_a, "gen-data-summary.json").read_bytes()
        == artifact_path(cfg_b, "gen-data-summary.json").read_bytes()
    )
    assert summary_a == summary_b


def test_manifest_reproduces_dataset(small_config, tmp_path):
    """The run manifest holds every knob needed to regenerate the data."""
    cfg = small_config(deterministic=True, out_dir=str(tmp_path / "orig"))
    gen_data(cfg)
    manifest = json.loads(artifact_path(cfg, "gen-data-manifest.json").read_text())

    fields = {f.name for f in dataclasses.fields(RunConfig)}
    replay = {k: v for k, v in manifest.items() if k in fields}
    replay["out_dir"] = str(tmp_path / "replay")
    cfg2 = RunConfig.from_dict(replay)
    gen_data(cfg2)

    assert (
        dataset_path(cfg, "train").read_bytes()
        == dataset_path(cfg2, "train").read_bytes()
    )


def test_oracle_run(small_config):
    cfg = small_config()
    gen_data(cfg)
    summary = run_oracle(cfg)

    assert summary["command"] == "oracle"
    assert summary["n_samples"] == 2
    assert summary["rel_l2"]["median"] < 1e-2
    assert summary["rel_l2"]["max"] < 1e-1

    header, rows = _read_csv(artifact_path(cfg, "oracle-errors.csv"))
    assert header == ["benchmark", "sample", "rel_l2", "rel_linf"]
    assert len(rows) == 2
    header, rows = _read_csv(artifact_path(cfg, "oracle-profile.csv"))
    assert header == ["x", "reference", "oracle"]
    assert len(rows) == 257


def test_train_then_eval(small_config):
    cfg = small_config()
    gen_data(cfg)
    t_summary = run_train(cfg)

    assert t_summary["command"] == "train"
    assert t_summary["steps"] == 5
    assert t_summary["batch_size"] == 4
    assert t_summary["n_train"] == 4
    assert np.isfinite(t_summary["first_loss"])
    assert np.isfinite(t_summary["final_loss"])
    assert t_summary["n_parameters"] > 0
    assert artifact_path(cfg, "model.bin").exists()

    header, rows = _read_csv(artifact_path(cfg, "train-loss.csv"))
    assert header == ["step", "lr", "loss"]
    assert len(rows) == 5
    assert [int(r[0]) for r in rows] == [1, 2, 3, 4, 5]
    # the logged rate is the one the step actually used, so the first row
    # shows the undecayed base rate
    assert float(rows[0][1]) == cfg.resolved_lr0()

    e_summary = run_eval(cfg)
    assert e_summary["n_samples"] == 2
    assert e_summary["oracle"]["rel_l2"]["median"] < 1e-2
    net_med = e_summary["network"]["rel_l2"]["median"]
    assert np.isfinite(net_med) and net_med > 0
    ratio = e_summary["median_ratio_vs_oracle"]
    assert ratio == pytest.approx(net_med / e_summary["oracle"]["rel_l2"]["median"])
    # five steps of training cannot beat the exact least-squares solve
    assert ratio > 1

    header, rows = _read_csv(artifact_path(cfg, "eval-errors.csv"))
    assert header == ["benchmark", "sample", "rel_l2", "rel_linf"]
    assert len(rows) == 2
    header, _ = _read_csv(artifact_path(cfg, "eval-oracle-errors.csv"))
    assert header == ["benchmark", "sample", "rel_l2", "rel_linf"]
    header, rows = _read_csv(artifact_path(cfg, "eval-profile.csv"))
    assert header == ["x", "reference", "network", "oracle"]
    assert len(rows) == 257
    xs = np.array([float(r[0]) for r in rows])
    assert xs[0] == 0.0 and xs[-1] == 1.0


def test_missing_dataset_and_checkpoint(small_config):
    cfg = small_config()
    with pytest.raises(ConfigError):
        run_train(cfg)
    with pytest.raises(ConfigError):
        run_oracle(cfg)
    gen_data(cfg)
    with pytest.raises(ConfigError):
        run_eval(cfg)


def test_container_mismatch_guards(small_config):
    cfg = small_config()
    gen_data(cfg)
    with pytest.raises(MeshMismatch):
        run_train(cfg.replace(divisions=(16,)))
    with pytest.raises(MeshMismatch):
        run_oracle(cfg.replace(test_grid=(129,)))


def test_benchmark_mismatch_guard(small_config):
    cfg = small_config()
    gen_data(cfg)
    other = small_config(benchmark="1d-singular")
    # masquerade the smooth dataset under the singular tag
    shutil.copy(dataset_path(cfg, "train"), dataset_path(other, "train"))
    with pytest.raises(MeshMismatch):
        run_train(other)


def test_checkpoint_benchmark_guard(small_config):
    cfg = small_config()
    gen_data(cfg)
    run_train(cfg)
    other = small_config(benchmark="1d-singular")
    gen_data(other)
    shutil.copy(
        artifact_path(cfg, "model.bin"), artifact_path(other, "model.bin")
    )
    with pytest.raises(MeshMismatch):
        run_eval(other)


def test_sensor_count_guard(small_config):
    cfg = small_config()
    gen_data(cfg)
    train = DatasetContainer.load(dataset_path(cfg, "train"))
    doctored = dataclasses.replace(train, f_values=train.f_values[:, :20])
    doctored.save(dataset_path(cfg, "train"))
    with pytest.raises(MeshMismatch):
        run_train(cfg)


def test_divergence_dump(small_config):
    cfg = small_config(lr0=1e200)
    gen_data(cfg)
    # the absurd rate overflows on purpose; keep the warning noise local
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(TrainingDiverged):
            run_train(cfg)

    dump = artifact_path(cfg, "diverged.bin")
    assert dump.exists()
    header, blocks = read_blocks(dump)
    assert header["kind"] == "divergence-dump"
    assert header["step"] >= 1
    assert blocks["f_batch"].shape == (4, 32)
    assert blocks["coeffs"].shape == (4, 64)
    assert blocks["sample_losses"].shape == (4,)
    assert not artifact_path(cfg, "model.bin").exists()


def test_single_sample_overfit(small_config):
    """With one training sample the output rescaling already pins the
    prediction at that sample's oracle coefficients, so the loss sits at
    the oracle floor (rounding noise) after a short run."""
    cfg = small_config(n_train=1, train_steps=50)
    gen_data(cfg)
    summary = run_train(cfg)
    assert summary["final_loss"] >= 0
    assert summary["final_loss"] < 1e-18


def test_convergence_guards(small_config):
    with pytest.raises(ConfigError):
        run_convergence(small_config(benchmark="2d-interface"), "h")
    with pytest.raises(ConfigError):
        run_convergence(small_config(), "eps")
    with pytest.raises(ConfigError):
        run_convergence(small_config(), "banana")


def test_run_reference_then_oracle(small_config):
    cfg = small_config()
    summary = run_reference(cfg)

    assert summary["reference_resolution"] == 256
    assert summary["doubling_drift_max"] < 1e-3
    assert summary["doubling_drift_median"] <= summary["doubling_drift_max"]

    test = DatasetContainer.load(dataset_path(cfg, "test"))
    assert test.require_references().shape == (2, 257)

    # the written container feeds evaluation directly, no gen-data needed
    oracle_summary = run_oracle(cfg)
    assert oracle_summary["rel_l2"]["median"] < 1e-2


def test_2d_pipeline(small_config):
    cfg = small_config(benchmark="2d-interface", train_steps=2)
    gen_data(cfg)

    train = DatasetContainer.load(dataset_path(cfg, "train"))
    assert train.f_values.shape == (4, 256)
    assert train.require_oracle().shape == (4, 1024)
    test = DatasetContainer.load(dataset_path(cfg, "test"))
    assert test.require_references().shape == (2, 129, 129)

    t_summary = run_train(cfg)
    assert t_summary["batch_size"] == 4
    assert np.isfinite(t_summary["final_loss"])

    e_summary = run_eval(cfg)
    # a transposed grid layout anywhere in the chain would blow this up
    assert e_summary["oracle"]["rel_l2"]["median"] < 5e-2
    assert np.isfinite(e_summary["network"]["rel_l2"]["median"])

    header, rows = _read_csv(artifact_path(cfg, "eval-profile.csv"))
    assert header == ["x", "reference", "network", "oracle"]
    assert len(rows) == 129


def test_2d_training_needs_standard_mesh(small_config):
    cfg = small_config(benchmark="2d-interface", divisions=(8, 8), train_steps=1)
    gen_data(cfg)
    with pytest.raises(ConfigError):
        run_train(cfg)
