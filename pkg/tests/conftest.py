"""Shared fixtures: small configurations that keep driver tests fast."""

import numpy as np
import pytest

from tfplearn.config import RunConfig


@pytest.fixture
def small_config(tmp_path):
    """Factory for tiny custom-preset configs writing under tmp_path."""

    def make(benchmark="1d-smooth", **overrides):
        kw = dict(
            benchmark=benchmark,
            preset="custom",
            seed=11,
            n_train=4,
            n_test=2,
            train_steps=5,
            hidden=(8, 8),
            out_dir=str(tmp_path),
        )
        if benchmark.startswith("2d"):
            kw["reference_resolution"] = 128
        kw.update(overrides)
        return RunConfig(**kw)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
