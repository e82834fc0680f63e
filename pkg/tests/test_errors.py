"""Exception taxonomy: every failure mode maps to one of three trunk types."""

import pytest

from tfplearn import errors


def test_trunk_hierarchy():
    assert issubclass(errors.ConfigError, errors.TfplearnError)
    assert issubclass(errors.NumericError, errors.TfplearnError)
    assert issubclass(errors.DataFormatError, errors.TfplearnError)


def test_config_branch():
    # anything a user can fix by editing flags or files
    assert issubclass(errors.UnknownBenchmark, errors.ConfigError)


def test_numeric_branch():
    for name in (
        "NonPositiveCoefficient",
        "NegativeCoefficient",
        "DegenerateWronskian",
        "SingularSystem",
        "FactorizationFailure",
        "RankDeficient",
        "UnresolvedLayer",
        "ZeroReference",
        "TrainingDiverged",
    ):
        assert issubclass(getattr(errors, name), errors.NumericError)


def test_data_format_branch():
    for name in ("VersionMismatch", "MissingReference", "StaleCache"):
        assert issubclass(getattr(errors, name), errors.DataFormatError)


def test_geometry_errors_are_package_errors():
    for name in (
        "GeometryError",
        "InterfaceNotOnGrid",
        "ZeroCells",
        "OutOfDomain",
        "NotOnBoundary",
        "SideRequired",
        "MeshMismatch",
    ):
        assert issubclass(getattr(errors, name), errors.TfplearnError)


def test_errors_carry_messages():
    with pytest.raises(errors.ConfigError, match="nope"):
        raise errors.UnknownBenchmark("nope")
