"""Tailored local bases and coefficient networks for elliptic interface
problems: benchmarks, solvers, metrics, training, and experiment drivers.

Attributes are loaded lazily so that importing the package stays cheap
and the CLI can pin thread environment variables before numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    # problems and geometry
    "ProblemSpec": "problems",
    "PiecewiseFunction": "problems",
    "benchmark": "problems",
    "singular_family": "problems",
    "BENCHMARKS": "problems",
    "Mesh": "geometry",
    "build_mesh": "geometry",
    "classify_points": "geometry",
    # fields
    "GrfSpec": "grf",
    "FieldSampler": "grf",
    "SampledField": "grf",
    # local solution machinery
    "build_basis_1d": "basis",
    "build_basis_2d": "basis",
    "SolutionSpace": "reconstruct",
    "PiecewiseSolution": "reconstruct",
    "local_ode_residual": "reconstruct",
    "ResidualSystem": "loss",
    "ResidualWeights": "loss",
    "DataTerm": "loss",
    # reference and oracle
    "solve_reference": "reference",
    "solve_reference_batch": "reference",
    "reference_operator": "reference",
    "pick_resolution": "reference",
    "OracleSolver": "reference",
    "fit_oracle_coefficients": "reference",
    # metrics
    "relative_errors": "metrics",
    "error_report": "metrics",
    "ErrorReport": "metrics",
    "broken_norm": "metrics",
    "broken_error_norm": "metrics",
    "relative_epsilon_error": "metrics",
    "loglog_slope": "metrics",
    # networks and training
    "MlpSpec": "network",
    "CnnSpec": "network",
    "mlp_spec": "network",
    "init_network": "network",
    "forward": "network",
    "backward": "network",
    "AdamW": "network",
    "OutputRescaling": "network",
    "fit_rescaling": "network",
    "save_checkpoint": "network",
    "load_checkpoint": "network",
    # harness
    "RunConfig": "config",
    "DatasetContainer": "dataset",
    "gen_data": "drivers",
    "run_train": "drivers",
    "run_eval": "drivers",
    "run_oracle": "drivers",
    "run_convergence": "drivers",
    "run_reference": "drivers",
    # errors
    "TfplearnError": "errors",
    "ConfigError": "errors",
    "NumericError": "errors",
    "DataFormatError": "errors",
}


def __getattr__(name):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
