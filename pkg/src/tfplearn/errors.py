"""Exception types shared across the package.

Grouped into configuration errors (bad user input, exit code 2 from the
CLI), numeric failures (exit code 3), geometry/data contract violations,
and container format errors.  Keeping them in one module avoids circular
imports between the numeric core and the harness.
"""


class TfplearnError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TfplearnError):
    """Invalid run configuration (unknown key, out-of-range value, ...)."""


class UnknownBenchmark(ConfigError):
    """Benchmark name not in the registry."""


# ---------------------------------------------------------------------------
# geometry / evaluation contracts


class GeometryError(TfplearnError):
    pass


class InterfaceNotOnGrid(GeometryError):
    """An interface point or segment does not coincide with mesh breakpoints."""


class ZeroCells(GeometryError):
    """Mesh resolution would produce no cells."""


class OutOfDomain(GeometryError):
    """A query point lies outside the computational domain."""


class NotOnBoundary(GeometryError):
    """A point expected on the domain boundary is not on it."""


class SideRequired(GeometryError):
    """Evaluation at a shared cell boundary needs an explicit side."""


class MeshMismatch(GeometryError):
    """Coefficient field and mesh disagree on cell count or layout."""


class ShapeMismatch(TfplearnError):
    """Array shape does not match the declared contract."""


class DuplicateSensors(TfplearnError):
    """Sensor locations passed to the random field are not distinct."""


class ArgumentOutOfRange(TfplearnError):
    """Scalar argument outside the supported range."""


class UnsupportedOrder(TfplearnError):
    """Requested quadrature or derivative order is not available."""


class InsufficientDerivatives(TfplearnError):
    """A norm of order l was requested but fewer derivatives are available."""


# ---------------------------------------------------------------------------
# coefficient / numeric failures


class NumericError(TfplearnError):
    """Base class for failures of the numeric pipeline (CLI exit code 3)."""


class NonPositiveCoefficient(NumericError):
    """Diffusion coefficient a must be strictly positive."""


class NegativeCoefficient(NumericError):
    """Reaction coefficient c must be nonnegative on the cell."""


class DegenerateWronskian(NumericError):
    """Homogeneous solutions are numerically dependent on a cell."""


class SingularSystem(NumericError):
    """Linear system factorization found the matrix singular."""


class FactorizationFailure(NumericError):
    """Cholesky or LU factorization failed after all retries."""


class RankDeficient(NumericError):
    """Least-squares system is rank deficient even after regularization."""


class UnresolvedLayer(NumericError):
    """Reference resolution cap reached before boundary layers were resolved."""


class ZeroReference(NumericError):
    """Relative error is undefined because the reference norm vanishes."""


class TrainingDiverged(NumericError):
    """Loss became non-finite during optimization."""


# ---------------------------------------------------------------------------
# containers / persistence


class DataFormatError(TfplearnError):
    pass


class VersionMismatch(DataFormatError):
    """Container or checkpoint format version is not supported."""


class MissingReference(DataFormatError):
    """Dataset lacks the reference solutions required by the operation."""


class StaleCache(DataFormatError):
    """A cached factorization no longer matches its source objects."""
