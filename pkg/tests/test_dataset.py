"""Container format: byte determinism, version gate, corruption guards."""

import struct

import numpy as np
import pytest

from tfplearn.dataset import (
    FORMAT_VERSION,
    MAGIC,
    DatasetContainer,
    canonical_json,
    read_blocks,
    write_blocks,
)
from tfplearn.errors import DataFormatError, MissingReference, VersionMismatch


def _container(with_refs=True, with_oracle=False):
    rng = np.random.default_rng(42)
    refs = rng.standard_normal((3, 9)) if with_refs else None
    oracle = rng.standard_normal((3, 8)) if with_oracle else None
    return DatasetContainer(
        benchmark="1d-smooth",
        split="test",
        seed=7,
        divisions=(4,),
        test_grid=(9,),
        grf={"length_scale": 0.2, "n_sensors": 5},
        f_values=rng.standard_normal((3, 5)),
        references=refs,
        oracle_coeffs=oracle,
        reference_resolution=256,
    )


def test_canonical_json_is_order_free():
    a = canonical_json({"b": 1, "a": [1, 2]})
    b = canonical_json({"a": [1, 2], "b": 1})
    assert a == b == b'{"a":[1,2],"b":1}'


def test_round_trip_preserves_everything(tmp_path):
    c = _container(with_refs=True, with_oracle=True)
    path = tmp_path / "data.bin"
    c.save(path)
    back = DatasetContainer.load(path)
    assert back.benchmark == c.benchmark
    assert back.split == c.split
    assert back.seed == c.seed
    assert back.divisions == c.divisions
    assert back.test_grid == c.test_grid
    assert back.grf == c.grf
    assert back.reference_resolution == 256
    assert back.epsilon is None
    assert np.array_equal(back.f_values, c.f_values)
    assert np.array_equal(back.references, c.references)
    assert np.array_equal(back.oracle_coeffs, c.oracle_coeffs)
    assert back.n_samples == 3


def test_write_read_write_is_byte_identical(tmp_path):
    c = _container()
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    c.save(p1)
    DatasetContainer.load(p1).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_optional_arrays_raise_when_absent(tmp_path):
    c = _container(with_refs=False, with_oracle=False)
    path = tmp_path / "bare.bin"
    c.save(path)
    back = DatasetContainer.load(path)
    assert back.references is None
    with pytest.raises(MissingReference):
        back.require_references()
    with pytest.raises(MissingReference):
        back.require_oracle()
    assert np.array_equal(back.f_values, c.f_values)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(DataFormatError):
        read_blocks(path)


def test_version_gate(tmp_path):
    path = tmp_path / "v.bin"
    payload = canonical_json(
        {"format_version": FORMAT_VERSION + 1, "header": {}, "arrays": []}
    )
    path.write_bytes(MAGIC + struct.pack("<Q", len(payload)) + payload)
    with pytest.raises(VersionMismatch):
        read_blocks(path)


def test_truncated_payload_rejected(tmp_path):
    c = _container()
    path = tmp_path / "t.bin"
    c.save(path)
    full = path.read_bytes()
    path.write_bytes(full[:-4])
    with pytest.raises(DataFormatError):
        DatasetContainer.load(path)


def test_garbage_header_rejected(tmp_path):
    path = tmp_path / "g.bin"
    junk = b"\xff\xfe{{{"
    path.write_bytes(MAGIC + struct.pack("<Q", len(junk)) + junk)
    with pytest.raises(DataFormatError):
        read_blocks(path)


def test_wrong_kind_rejected(tmp_path):
    path = tmp_path / "k.bin"
    write_blocks(path, {"kind": "checkpoint"}, [("f_values", np.zeros(2))])
    header, arrays = read_blocks(path)
    assert header["kind"] == "checkpoint"
    with pytest.raises(DataFormatError):
        DatasetContainer.load(path)


def test_missing_source_block_rejected(tmp_path):
    path = tmp_path / "m.bin"
    write_blocks(path, {"kind": "dataset"}, [("other", np.zeros(2))])
    with pytest.raises(DataFormatError):
        DatasetContainer.load(path)


def test_arrays_keep_shape_and_order(tmp_path):
    path = tmp_path / "shapes.bin"
    a = np.arange(6, dtype=float).reshape(2, 3)
    b = np.arange(4, dtype=float)
    write_blocks(path, {"kind": "raw"}, [("a", a), ("b", b)])
    _, arrays = read_blocks(path)
    assert list(arrays) == ["a", "b"]
    assert arrays["a"].shape == (2, 3)
    assert np.array_equal(arrays["a"], a)
    assert np.array_equal(arrays["b"], b)
