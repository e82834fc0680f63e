"""Gaussian random source fields and their continuous extension.

Sources are drawn from a zero-mean Gaussian with squared-exponential
kernel k(x1, x2) = exp(-|x1 - x2|^2 / (2 l^2)) at a fixed sensor set and
extended to the whole domain as the kriging (posterior mean) interpolant
of the sensor values.  That extension is the definition of the continuous
sample: every consumer (residual assembly, reference solver, metrics)
evaluates the same function, so none of them disagrees about what f is.

The covariance carries a small diagonal jitter.  Factorization escalates
the jitter tenfold, up to 1e-6, if the matrix is not numerically positive
definite; the value actually used is recorded for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DuplicateSensors, FactorizationFailure

_JITTER_MAX = 1e-6


@dataclass(frozen=True)
class GrfSpec:
    """Kernel length scale, sensor locations, and base jitter."""

    sensors: np.ndarray
    length_scale: float
    jitter: float = 1e-10

    def __post_init__(self):
        object.__setattr__(
            self, "sensors", np.asarray(self.sensors, dtype=float)
        )
        if self.length_scale <= 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")
        flat = self.sensors if self.sensors.ndim == 1 else self.sensors
        if len(np.unique(flat, axis=0)) != len(flat):
            raise DuplicateSensors("sensor locations must be distinct")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def header_dict(self) -> dict:
        """JSON-ready form for dataset headers."""
        return {
            "length_scale": self.length_scale,
            "jitter": self.jitter,
            "sensors": np.asarray(self.sensors).tolist(),
        }


def _kernel_matrix(x, y, length_scale: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    d2 = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * length_scale**2))


def build_covariance(spec: GrfSpec) -> np.ndarray:
    """Sensor covariance K[i, j] = k(x_i, x_j) + jitter on the diagonal."""
    K = _kernel_matrix(spec.sensors, spec.sensors, spec.length_scale)
    return K + spec.jitter * np.eye(spec.n_sensors)


class FieldSampler:
    """Factorized sensor covariance; draws samples and builds interpolants."""

    def __init__(self, spec: GrfSpec):
        self.spec = spec
        K_raw = _kernel_matrix(spec.sensors, spec.sensors, spec.length_scale)
        j = max(spec.jitter, 1e-300)
        last_error = None
        while j <= _JITTER_MAX:
            try:
                self._cho = cho_factor(
                    K_raw + j * np.eye(len(K_raw)), lower=True, check_finite=False
                )
                self.jitter_used = j
                break
            except np.linalg.LinAlgError as err:
                last_error = err
                j *= 10.0
        else:
            raise FactorizationFailure(
                f"covariance not positive definite up to jitter {_JITTER_MAX}"
            ) from last_error
        self._L = np.tril(self._cho[0])

    @property
    def sensors(self) -> np.ndarray:
        return self.spec.sensors

    @property
    def n_sensors(self) -> int:
        return self.spec.n_sensors

    def sample(self, rng: np.random.Generator, n_samples: int) -> np.ndarray:
        """Sensor values of ``n_samples`` draws; shape (n_samples, m)."""
        z = rng.standard_normal((int(n_samples), self.n_sensors))
        return z @ self._L.T

    def interpolant(self, values) -> "SampledField":
        return SampledField(self, np.asarray(values, dtype=float))

    def extension_matrix(self, points) -> np.ndarray:
        """Kriging weight rows: field values at ``points`` are
        ``E @ sensor_values``.  Lets a whole batch of samples be pushed to a
        fixed point set with one matrix product."""
        k = _kernel_matrix(np.asarray(points, dtype=float), self.sensors,
                          self.spec.length_scale)
        return cho_solve(self._cho, k.T, check_finite=False).T


def sample_field(sampler: FieldSampler, rng: np.random.Generator) -> np.ndarray:
    """One draw of sensor values."""
    return sampler.sample(rng, 1)[0]


class SampledField:
    """Kriging extension of one source draw; callable on points."""

    def __init__(self, sampler: FieldSampler, values: np.ndarray):
        if values.shape != (sampler.n_sensors,):
            raise ValueError(
                f"expected {sampler.n_sensors} sensor values, got {values.shape}"
            )
        self.sampler = sampler
        self.values = values
        self.alpha = cho_solve(sampler._cho, values, check_finite=False)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        sensors = self.sampler.sensors
        scalar = pts.ndim == 0 or (sensors.ndim == 2 and pts.ndim == 1)
        if scalar:
            pts = pts[None] if pts.ndim == 1 else np.atleast_1d(pts)
        k = _kernel_matrix(pts, sensors, self.sampler.spec.length_scale)
        out = k @ self.alpha
        return float(out[0]) if scalar else out

    def on_grid(self, xs, ys=None) -> np.ndarray:
        """Values on a tensor grid.

        1D: values at ``xs``.  2D: array of shape (len(ys), len(xs)) with
        rows indexed by y; when the sensors themselves form an x-fastest
        tensor grid the kernel factorizes and the evaluation runs as two
        small matrix products instead of one large one.
        """
        if ys is None:
            return self(np.asarray(xs, dtype=float))
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        sensors = self.sampler.sensors
        ls = self.sampler.spec.length_scale
        sx = np.unique(sensors[:, 0])
        sy = np.unique(sensors[:, 1])
        if len(sx) * len(sy) == len(sensors) and _is_tensor_grid(sensors, sx, sy):
            kx = _kernel_matrix(xs, sx, ls)
            ky = _kernel_matrix(ys, sy, ls)
            A = self.alpha.reshape(len(sy), len(sx))
            return ky @ A @ kx.T
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        return self(pts).reshape(len(ys), len(xs))


def _is_tensor_grid(sensors: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> bool:
    expect = np.column_stack([np.tile(sx, len(sy)), np.repeat(sy, len(sx))])
    return sensors.shape == expect.shape and np.allclose(sensors, expect)
