"""Dense float32 tensors and the GTED binary file format.

GTED is the wire contract for feature replay and parameter loading:

    magic   4 bytes  ``b"GTED"``
    version 1 byte   ``0x01``
    ndim    1 byte   1..4
    dims    ndim * 4 bytes, each a little-endian uint32 (all >= 1)
    dtype   1 byte   ``0x01`` = float32
    data    prod(dims) * 4 bytes, little-endian float32, row-major
            (last axis fastest)

Files are byte-identical across platforms; reads reject anything that does
not match the layout above.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from nulltrack.errors import FormatError, ValidationError

MAGIC = b"GTED"
VERSION = 0x01
DTYPE_F32 = 0x01
MAX_NDIM = 4

# Guards header-driven allocation on read.
MAX_ELEMENTS = 2**31

FEATURE_KINDS = ("semantic", "geometric", "fused")


@dataclass(frozen=True)
class Tensor:
    """Immutable row-major float32 tensor with 1 to 4 axes."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim < 1 or arr.ndim > MAX_NDIM:
            raise ValidationError(f"tensor must have 1..{MAX_NDIM} axes, got {arr.ndim}")
        if any(d < 1 for d in arr.shape):
            raise ValidationError(f"tensor extents must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(
            self.values.view(np.uint32), other.values.view(np.uint32)
        )


@dataclass(frozen=True)
class FeatureMap:
    """A [C, H, W] activation grid tagged as semantic, geometric or fused."""

    tensor: Tensor
    kind: str

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if len(self.tensor.dims) != 3:
            raise ValidationError(f"feature map needs dims [C,H,W], got {self.tensor.dims}")

    @classmethod
    def from_array(cls, values, kind: str) -> "FeatureMap":
        return cls(Tensor(np.asarray(values)), kind)

    @property
    def array(self) -> np.ndarray:
        return self.tensor.values

    @property
    def channels(self) -> int:
        return self.tensor.dims[0]

    @property
    def height(self) -> int:
        return self.tensor.dims[1]

    @property
    def width(self) -> int:
        return self.tensor.dims[2]

    def columns(self) -> np.ndarray:
        """The [C, H*W] spatial-column view used by correlation analysis."""
        return self.array.reshape(self.channels, -1)


def tensor_write(t: Tensor, path) -> None:
    """Write *t* to *path* in the GTED format."""
    arr = t.values
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<B", DTYPE_F32)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"failed to write tensor to {path}: {exc}") from exc


def tensor_read(path) -> Tensor:
    """Read a GTED file back into a Tensor; inverse of :func:`tensor_write`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, ndim = blob[4], blob[5]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if not 1 <= ndim <= MAX_NDIM:
        raise FormatError(f"{path}: ndim {ndim} outside 1..{MAX_NDIM}")
    dims_end = 6 + 4 * ndim
    if len(blob) < dims_end + 1:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f"<{ndim}I", blob[6:dims_end])
    if any(d < 1 for d in dims):
        raise ValidationError(f"{path}: non-positive extent in {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > MAX_ELEMENTS:
        raise ValidationError(f"{path}: dims product {count} too large")
    dtype = blob[dims_end]
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype byte {dtype:#04x}")
    payload = blob[dims_end + 1 :]
    if len(payload) != 4 * count:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {4 * count} for dims {dims}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: payload contains non-finite values")
    return Tensor(values)


def write_named_tensors(directory, named: dict) -> None:
    """Dump ``{name: array}`` as ``<name>.gted`` files under *directory*."""
    os.makedirs(directory, exist_ok=True)
    for name, arr in named.items():
        tensor_write(Tensor(np.asarray(arr, dtype=np.float32)), os.path.join(directory, f"{name}.gted"))


def read_named_tensor(directory, name: str) -> np.ndarray:
    path = os.path.join(directory, f"{name}.gted")
    if not os.path.exists(path):
        raise FormatError(f"missing tensor file {path}")
    return tensor_read(path).values
