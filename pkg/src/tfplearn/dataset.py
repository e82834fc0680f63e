"""Binary containers for source samples, references, and checkpoints.

One file format serves every artifact: an eight-byte magic string, the
header length as a little-endian unsigned 64-bit integer, a canonical
JSON header (sorted keys, no whitespace), then the arrays back to back
as little-endian float64 in row-major order.  Writing the same content
twice produces identical bytes, which the determinism check relies on.

Dataset files hold the sensor values of the sampled sources, then the
reference solutions when present, then the oracle coefficients when
present, in that order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, MissingReference, VersionMismatch

MAGIC = b"TFPLBIN1"
FORMAT_VERSION = 1


def canonical_json(obj) -> bytes:
    """Deterministic JSON bytes: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_blocks(path, header: dict, arrays) -> None:
    """Write a container: ``arrays`` is an ordered list of (name, array)."""
    meta = []
    blobs = []
    for name, arr in arrays:
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        meta.append({"name": str(name), "shape": list(a.shape)})
        blobs.append(a.tobytes())
    envelope = {"format_version": FORMAT_VERSION, "header": header, "arrays": meta}
    payload = canonical_json(envelope)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def read_blocks(path):
    """Read a container back as (header dict, ordered name -> array dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise DataFormatError(f"{path}: not a container file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            envelope = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise DataFormatError(f"{path}: unreadable header") from err
        version = envelope.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionMismatch(
                f"{path}: format version {version}, expected {FORMAT_VERSION}"
            )
        arrays = {}
        for meta in envelope["arrays"]:
            shape = tuple(int(s) for s in meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataFormatError(f"{path}: truncated array {meta['name']!r}")
            arrays[meta["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return envelope["header"], arrays


@dataclass
class DatasetContainer:
    """Sampled sources plus optional references and oracle coefficients."""

    benchmark: str
    split: str
    seed: int
    divisions: tuple
    test_grid: tuple
    grf: dict
    f_values: np.ndarray
    references: np.ndarray | None = None
    oracle_coeffs: np.ndarray | None = None
    reference_resolution: int | None = None
    epsilon: float | None = None

    @property
    def n_samples(self) -> int:
        return int(self.f_values.shape[0])

    def require_references(self) -> np.ndarray:
        if self.references is None:
            raise MissingReference(
                f"dataset {self.benchmark}/{self.split} carries no reference solutions"
            )
        return self.references

    def require_oracle(self) -> np.ndarray:
        if self.oracle_coeffs is None:
            raise MissingReference(
                f"dataset {self.benchmark}/{self.split} carries no oracle coefficients"
            )
        return self.oracle_coeffs

    def save(self, path) -> None:
        header = {
            "kind": "dataset",
            "benchmark": self.benchmark,
            "split": self.split,
            "seed": self.seed,
            "divisions": list(self.divisions),
            "test_grid": list(self.test_grid),
            "grf": self.grf,
            "reference_resolution": self.reference_resolution,
            "epsilon": self.epsilon,
        }
        arrays = [("f_values", self.f_values)]
        if self.references is not None:
            arrays.append(("references", self.references))
        if self.oracle_coeffs is not None:
            arrays.append(("oracle_coeffs", self.oracle_coeffs))
        write_blocks(path, header, arrays)

    @classmethod
    def load(cls, path) -> "DatasetContainer":
        header, arrays = read_blocks(path)
        if header.get("kind") != "dataset":
            raise DataFormatError(f"{path} is not a dataset container")
        if "f_values" not in arrays:
            raise DataFormatError(f"{path} carries no source samples")
        return cls(
            benchmark=header["benchmark"],
            split=header["split"],
            seed=int(header["seed"]),
            divisions=tuple(header["divisions"]),
            test_grid=tuple(header["test_grid"]),
            grf=header["grf"],
            f_values=arrays["f_values"],
            references=arrays.get("references"),
            oracle_coeffs=arrays.get("oracle_coeffs"),
            reference_resolution=header.get("reference_resolution"),
            epsilon=header.get("epsilon"),
        )
