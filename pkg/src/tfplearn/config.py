"""Run configuration: every knob in one place, resolved and recorded.

A RunConfig can be built from keyword arguments, a dict (unknown keys
are rejected so typos fail loudly), or a JSON file.  Fields left at None
resolve to benchmark-dependent defaults; ``manifest()`` returns the
fully resolved picture that drivers write next to their outputs.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import build_mesh
from .grf import GrfSpec
from .problems import benchmark, singular_family

PRESETS = {
    "desk": {"n_train": 200, "train_steps": 2000},
    "paper": {"n_train": 1000, "train_steps": 20000},
}

_LENGTH_SCALES = {1: 0.2, 2: 0.25}
_DIVISIONS = {1: (32,), 2: (16, 16)}
_TEST_GRIDS = {1: (257,), 2: (129, 129)}
_BATCH_2D = 64


@dataclass(frozen=True)
class RunConfig:
    benchmark: str
    preset: str = "desk"
    seed: int = 0
    n_train: int | None = None
    n_test: int = 20
    train_steps: int | None = None
    batch_size: int | None = None
    divisions: tuple | None = None
    test_grid: tuple | None = None
    length_scale: float | None = None
    jitter: float = 1e-10
    epsilon: float | None = None
    lr0: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    lr_decay: float = 0.9995
    hidden: tuple = (64, 64, 64, 64)
    weight_continuity: float = 1.0
    weight_jump: float = 1.0
    weight_boundary: float = 1.0
    normalization: str = "sum"
    points_per_edge: int = 1
    reference_resolution: int | None = None
    weighted_flux: bool | None = None
    out_dir: str = "runs"
    threads: int | None = None
    deterministic: bool = False

    def __post_init__(self):
        if self.preset not in (*PRESETS, "custom"):
            raise ConfigError(
                f"unknown preset {self.preset!r}; choose from "
                f"{sorted((*PRESETS, 'custom'))}"
            )
        if self.preset == "custom" and (self.n_train is None or self.train_steps is None):
            raise ConfigError("the custom preset needs explicit n_train and train_steps")
        for name in ("n_train", "train_steps"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.n_test <= 0:
            raise ConfigError(f"n_test must be positive, got {self.n_test}")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.normalization not in ("sum", "mean"):
            raise ConfigError(f"normalization must be 'sum' or 'mean'")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.lr0 is not None and self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        for name in ("weight_decay", "jitter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("beta1", "beta2", "lr_decay"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if self.points_per_edge < 1:
            raise ConfigError("points_per_edge must be at least 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        # fail early on unknown benchmark names
        self.problem()

    # -- resolution -------------------------------------------------------

    def problem(self):
        p = benchmark(self.benchmark)
        if self.epsilon is not None:
            if self.benchmark != "1d-singular":
                raise ConfigError("epsilon only applies to the 1d-singular family")
            p = singular_family(self.epsilon)
        if self.weighted_flux is not None and self.weighted_flux != p.weighted_flux:
            p = dataclasses.replace(p, weighted_flux=self.weighted_flux)
        return p

    @property
    def dimension(self) -> int:
        return self.problem().dimension

    def resolved_n_train(self) -> int:
        if self.n_train is not None:
            return self.n_train
        return PRESETS[self.preset]["n_train"]

    def resolved_train_steps(self) -> int:
        if self.train_steps is not None:
            return self.train_steps
        return PRESETS[self.preset]["train_steps"]

    def resolved_divisions(self) -> tuple:
        return tuple(self.divisions) if self.divisions else _DIVISIONS[self.dimension]

    def resolved_test_grid(self) -> tuple:
        return tuple(self.test_grid) if self.test_grid else _TEST_GRIDS[self.dimension]

    def resolved_length_scale(self) -> float:
        if self.length_scale is not None:
            return self.length_scale
        return _LENGTH_SCALES[self.dimension]

    def resolved_lr0(self) -> float:
        """Initial learning rate, tuned per architecture when not given.

        The fully connected 1d nets tolerate a much larger rate than the
        batch-normalized 2d encoder-decoder, which plateaus early above
        roughly 1e-3.
        """
        if self.lr0 is not None:
            return self.lr0
        return 3e-3 if self.dimension == 1 else 1e-3

    def resolved_batch_size(self, n_samples: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n_samples)
        if self.dimension == 2:
            return min(_BATCH_2D, n_samples)
        return n_samples

    def mesh(self):
        p = self.problem()
        div = self.resolved_divisions()
        resolution = div[0] if p.dimension == 1 else div
        return build_mesh(p.domain, resolution, p.interface)

    def grf_spec(self) -> GrfSpec:
        sensors = self.mesh().cell_centers()
        return GrfSpec(
            sensors=sensors,
            length_scale=self.resolved_length_scale(),
            jitter=self.jitter,
        )

    def tag(self) -> str:
        """Filesystem-safe name for output files."""
        return re.sub(r"[^A-Za-z0-9._-]+", "-", self.problem().name).strip("-")

    # -- construction and reporting ---------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        for key in ("divisions", "test_grid", "hidden"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(d, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def manifest(self) -> dict:
        """Every knob, fully resolved."""
        raw = dataclasses.asdict(self)
        for key in ("divisions", "test_grid", "hidden"):
            if raw[key] is not None:
                raw[key] = list(raw[key])
        raw.update(
            problem_name=self.problem().name,
            dimension=self.dimension,
            resolved_n_train=self.resolved_n_train(),
            resolved_train_steps=self.resolved_train_steps(),
            resolved_divisions=list(self.resolved_divisions()),
            resolved_test_grid=list(self.resolved_test_grid()),
            resolved_length_scale=self.resolved_length_scale(),
            resolved_lr0=self.resolved_lr0(),
        )
        return raw
