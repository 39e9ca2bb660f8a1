import struct

import numpy as np
import pytest

from kernel_series import (ArgumentError, DataError, FormatError, Tensor3, Tensor4, import_raw, load_tensor,
                           save_tensor)
from kernel_series.tensor_core import decode_tensor, encode_tensor


def _header(rank, width, extents, reserved=0):
    return b'FKT1' + struct.pack('<BBH', rank, width, reserved) + struct.pack(f'<{len(extents)}Q', *extents)


def test_single_zero_value():
    t = decode_tensor(_header(4, 8, (1, 1, 1, 1)) + struct.pack('<d', 0.0))
    assert isinstance(t, Tensor4)
    assert t.shape == (1, 1, 1, 1)
    assert t.data[0, 0, 0, 0] == 0.0


def test_ones_layout():
    blob = encode_tensor(Tensor4(np.ones((1, 1, 3, 3))))
    assert blob[:4] == b'FKT1'
    assert blob[4] == 4 and blob[5] == 8 and blob[6:8] == b'\0\0'
    assert struct.unpack_from('<4Q', blob, 8) == (1, 1, 3, 3)
    assert len(blob) == 8 + 32 + 9 * 8


def test_round_trip_64bit_is_exact(tmp_path, rng):
    t = Tensor4(rng.standard_normal((3, 2, 5, 5)) * 1e3)
    path = tmp_path / 't.fkt'
    save_tensor(t, path)
    loaded = load_tensor(path)
    assert loaded.shape == t.shape
    assert np.array_equal(loaded.data, t.data)


def test_round_trip_rank3(tmp_path, rng):
    t = Tensor3(rng.standard_normal((2, 4, 3)))
    save_tensor(t, tmp_path / 'x.fkt')
    loaded = load_tensor(tmp_path / 'x.fkt')
    assert isinstance(loaded, Tensor3)
    assert np.array_equal(loaded.data, t.data)


def test_32bit_rounds_to_nearest_single(tmp_path):
    save_tensor(Tensor4(np.full((1, 1, 1, 1), 0.1)), tmp_path / 'p.fkt', precision=32)
    value = load_tensor(tmp_path / 'p.fkt').data[0, 0, 0, 0]
    assert value == float(np.float32(0.1))
    assert value != 0.1


def test_well_formed_file_survives_load_save(tmp_path, rng):
    blob = _header(3, 4, (2, 2, 2)) + rng.standard_normal(8).astype('<f4').tobytes()
    t = decode_tensor(blob)
    assert encode_tensor(t, precision=32) == blob


def test_short_payload_is_rejected():
    # extents declare 9 values, payload carries 8
    blob = _header(4, 8, (1, 1, 3, 3)) + np.zeros(8).tobytes()
    with pytest.raises(FormatError):
        decode_tensor(blob)


def test_long_payload_is_rejected():
    blob = _header(4, 8, (1, 1, 1, 1)) + np.zeros(2).tobytes()
    with pytest.raises(FormatError):
        decode_tensor(blob)


@pytest.mark.parametrize("blob", [
    b'FKT',
    b'XXXX' + bytes(4),
    _header(2, 8, (1, 1)),
    _header(4, 2, (1, 1, 1, 1)),
    _header(4, 8, (1, 1, 1, 1), reserved=1) + bytes(8),
    _header(4, 8, (1, 0, 1, 1)),
    b'FKT1' + struct.pack('<BBH', 4, 8, 0) + bytes(10),
])
def test_malformed_headers(blob):
    with pytest.raises(FormatError):
        decode_tensor(blob)


def test_non_finite_payload():
    blob = _header(4, 8, (1, 1, 1, 2)) + struct.pack('<2d', 1.0, float('nan'))
    with pytest.raises(DataError):
        decode_tensor(blob)


def test_non_finite_construction():
    with pytest.raises(DataError):
        Tensor4(np.array([[[[np.inf]]]]))


def test_tensors_are_read_only(rng):
    t = Tensor4(rng.standard_normal((1, 1, 2, 2)))
    with pytest.raises(ValueError):
        t.data[0, 0, 0, 0] = 1.0


def test_32bit_overflow(tmp_path):
    with pytest.raises(DataError):
        save_tensor(Tensor4(np.full((1, 1, 1, 1), 1e300)), tmp_path / 'big.fkt', precision=32)


def test_bad_precision(tmp_path):
    with pytest.raises(ArgumentError):
        save_tensor(Tensor4(np.zeros((1, 1, 1, 1))), tmp_path / 'z.fkt', precision=16)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_tensor(tmp_path / 'absent.fkt')


def test_import_raw(tmp_path, rng):
    values = rng.standard_normal(2 * 3 * 3 * 3).astype('<f4')
    raw = tmp_path / 'w.raw'
    raw.write_bytes(values.tobytes())
    t = import_raw(raw, (2, 3, 3, 3))
    assert t.shape == (2, 3, 3, 3)
    assert np.array_equal(t.data.ravel(), values.astype(np.float64))


def test_import_raw_length_mismatch(tmp_path):
    raw = tmp_path / 'w.raw'
    raw.write_bytes(np.zeros(5, dtype='<f4').tobytes())
    with pytest.raises(FormatError):
        import_raw(raw, (1, 1, 2, 3))


def test_import_raw_bad_extents(tmp_path):
    raw = tmp_path / 'w.raw'
    raw.write_bytes(bytes(4))
    with pytest.raises(ArgumentError):
        import_raw(raw, (1, 1))
