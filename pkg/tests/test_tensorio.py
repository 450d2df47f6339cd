import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays, array_shapes

from nulltrack.errors import FormatError, ValidationError
from nulltrack.tensorio import (
    FeatureMap,
    Tensor,
    read_named_tensor,
    tensor_read,
    tensor_write,
    write_named_tensors,
)


def roundtrip(t, tmp_path):
    path = tmp_path / "t.gted"
    tensor_write(t, path)
    return tensor_read(path)


def test_zero_scalar_file_layout(tmp_path):
    path = tmp_path / "z.gted"
    tensor_write(Tensor(np.zeros(1, dtype=np.float32)), path)
    blob = path.read_bytes()
    # magic + version + ndim + one u32 dim + dtype + one f32 payload
    assert len(blob) == 4 + 1 + 1 + 4 + 1 + 4 == 15
    assert blob[:4] == b"GTED"
    assert blob[4] == 0x01
    assert blob[5] == 1
    assert struct.unpack("<I", blob[6:10]) == (1,)
    assert blob[10] == 0x01
    assert blob[11:] == b"\x00\x00\x00\x00"


def test_header_layout_3d(tmp_path):
    path = tmp_path / "t.gted"
    tensor_write(Tensor(np.zeros((16, 18, 18), dtype=np.float32)), path)
    blob = path.read_bytes()
    assert blob[:4] == b"GTED"
    assert blob[5] == 3
    assert struct.unpack("<3I", blob[6:18]) == (16, 18, 18)
    assert blob[18] == 0x01
    assert len(blob) == 19 + 4 * 16 * 18 * 18


def test_roundtrip_2x2(tmp_path):
    t = Tensor(np.array([[1, 2], [3, 4]], dtype=np.float32))
    back = roundtrip(t, tmp_path)
    assert back == t
    assert back.dims == (2, 2)


def test_roundtrip_seeded_bit_exact(tmp_path):
    rng = np.random.default_rng(42)
    t = Tensor(rng.normal(size=(3, 4, 4)).astype(np.float32))
    back = roundtrip(t, tmp_path)
    assert np.array_equal(back.values.view(np.uint32), t.values.view(np.uint32))
    assert float(np.linalg.norm(back.values - t.values)) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    arrays(
        np.float32,
        array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5),
        elements=st.floats(-1e6, 1e6, width=32),
    )
)
def test_roundtrip_property(tmp_path_factory, values):
    tmp = tmp_path_factory.mktemp("rt")
    t = Tensor(values)
    back = roundtrip(t, tmp)
    assert back == t


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.gted"
    path.write_bytes(b"XXXX" + bytes([1, 1]) + struct.pack("<I", 1) + bytes([1]) + b"\x00" * 4)
    with pytest.raises(FormatError):
        tensor_read(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.gted"
    header = b"GTED" + bytes([1, 2]) + struct.pack("<2I", 2, 2) + bytes([1])
    path.write_bytes(header + b"\x00" * 12)  # 3 floats instead of 4
    with pytest.raises(FormatError):
        tensor_read(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "long.gted"
    header = b"GTED" + bytes([1, 1]) + struct.pack("<I", 1) + bytes([1])
    path.write_bytes(header + b"\x00" * 8)
    with pytest.raises(FormatError):
        tensor_read(path)


def test_bad_version_and_dtype(tmp_path):
    base = bytes([1]) + struct.pack("<I", 1)
    path = tmp_path / "v.gted"
    path.write_bytes(b"GTED" + bytes([2]) + base + bytes([1]) + b"\x00" * 4)
    with pytest.raises(FormatError):
        tensor_read(path)
    path.write_bytes(b"GTED" + bytes([1]) + base + bytes([7]) + b"\x00" * 4)
    with pytest.raises(FormatError):
        tensor_read(path)


def test_dims_product_overflow(tmp_path):
    path = tmp_path / "big.gted"
    path.write_bytes(b"GTED" + bytes([1, 2]) + struct.pack("<2I", 2**20, 2**20) + bytes([1]))
    with pytest.raises(ValidationError):
        tensor_read(path)


def test_constructor_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(ValidationError):
        Tensor(np.array([np.nan], dtype=np.float32))
    with pytest.raises(ValidationError):
        Tensor(np.array([np.inf], dtype=np.float32))
    with pytest.raises(ValidationError):
        Tensor(np.zeros((1, 1, 1, 1, 1), dtype=np.float32))
    with pytest.raises(ValidationError):
        Tensor(np.float32(3.0))  # zero-dim


def test_tensor_is_immutable():
    t = Tensor(np.zeros(3, dtype=np.float32))
    with pytest.raises(ValueError):
        t.values[0] = 1.0


def test_feature_map_kinds_and_shape():
    fm = FeatureMap.from_array(np.zeros((2, 3, 4), dtype=np.float32), "semantic")
    assert (fm.channels, fm.height, fm.width) == (2, 3, 4)
    assert fm.columns().shape == (2, 12)
    with pytest.raises(ValidationError):
        FeatureMap.from_array(np.zeros((2, 3, 4)), "spectral")
    with pytest.raises(ValidationError):
        FeatureMap.from_array(np.zeros((2, 3)), "semantic")


def test_named_tensor_helpers(tmp_path):
    write_named_tensors(tmp_path, {"a": np.arange(4.0).reshape(2, 2)})
    out = read_named_tensor(tmp_path, "a")
    assert out.shape == (2, 2)
    with pytest.raises(FormatError):
        read_named_tensor(tmp_path, "missing")
