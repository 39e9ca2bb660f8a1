"""Dense tensor files.

FKT1 layout, all integers little-endian::

    bytes 0-3   magic b'FKT1'
    byte  4     rank (3 or 4)
    byte  5     element width in bytes (4 or 8)
    bytes 6-7   reserved, zero
    rank x u64  extents
    payload     IEEE-754 values, row-major, no padding
"""
import logging
import math
import struct
from typing import Sequence, Union

import numpy as np

from ._errors import ArgumentError, DataError, FormatError
from .data_types import Tensor3, Tensor4
from .utilities import read_bytes, write_bytes_atomic

logger = logging.getLogger('kernel_series')

MAGIC = b'FKT1'
_HEADER = struct.Struct('<4sBBH')
_DTYPES = {4: np.dtype('<f4'), 8: np.dtype('<f8')}

AnyTensor = Union[Tensor4, Tensor3]


def _wrap(data: np.ndarray) -> AnyTensor:
    if data.ndim == 4:
        return Tensor4(data)
    return Tensor3(data)


def decode_tensor(blob: bytes) -> AnyTensor:
    """Parse an FKT1 byte string.

    :raises FormatError: on a bad header or a payload whose length disagrees with the extents.
    :raises DataError: when the payload holds NaN or Inf.
    """
    if len(blob) < _HEADER.size:
        raise FormatError(f"file too short for an FKT1 header ({len(blob)} bytes)")
    magic, rank, width, reserved = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if rank not in (3, 4):
        raise FormatError(f"unsupported rank {rank}")
    if width not in _DTYPES:
        raise FormatError(f"unsupported element width {width}")
    if reserved != 0:
        raise FormatError("reserved header bytes are not zero")

    offset = _HEADER.size
    if len(blob) < offset + 8 * rank:
        raise FormatError("file ends inside the extent table")
    extents = struct.unpack_from(f'<{rank}Q', blob, offset)
    offset += 8 * rank
    if any(e == 0 for e in extents):
        raise FormatError(f"zero extent in {extents}")

    count = math.prod(extents)
    payload = len(blob) - offset
    if payload != count * width:
        raise FormatError(f"payload holds {payload} bytes but extents {extents} need {count * width}")

    values = np.frombuffer(blob, dtype=_DTYPES[width], count=count, offset=offset)
    if not np.all(np.isfinite(values)):
        raise DataError("payload contains non-finite values")
    return _wrap(values.astype(np.float64).reshape(extents))


def encode_tensor(t: AnyTensor, precision: int = 64) -> bytes:
    """Serialize ``t`` to FKT1 bytes with 32- or 64-bit elements.

    :raises DataError: when a value overflows the 32-bit range.
    """
    if precision not in (32, 64):
        raise ArgumentError(f"precision must be 32 or 64, got {precision}")
    width = precision // 8
    dtype = _DTYPES[width]
    with np.errstate(over='ignore'):
        values = t.data.astype(dtype)
    if not np.all(np.isfinite(values)):
        raise DataError("values overflow 32-bit storage")
    header = _HEADER.pack(MAGIC, len(t.shape), width, 0)
    extents = struct.pack(f'<{len(t.shape)}Q', *t.shape)
    return header + extents + values.tobytes(order='C')


def load_tensor(path) -> AnyTensor:
    """
    Load an FKT1 file. 32-bit payloads are widened to float64 losslessly.
    :param path: The file to read.
    :return: A :class:`Tensor4` or :class:`Tensor3` depending on the stored rank.
    """
    t = decode_tensor(read_bytes(path))
    logger.debug("Loaded %s from %s", t, path)
    return t


def save_tensor(t: AnyTensor, path, precision: int = 64) -> None:
    write_bytes_atomic(path, encode_tensor(t, precision))
    logger.info("Wrote %s to %s at %d-bit", t, path, precision)


def import_raw(path, extents: Sequence[int]) -> AnyTensor:
    """
    Read a bare little-endian float32 payload exported from a training framework.
    :param path: The raw file.
    :param extents: 3 or 4 positive extents, row-major.
    :return: The tensor, widened to float64.
    """
    extents = tuple(int(e) for e in extents)
    if len(extents) not in (3, 4) or any(e < 1 for e in extents):
        raise ArgumentError(f"raw import needs 3 or 4 positive extents, got {extents}")
    blob = read_bytes(path)
    count = math.prod(extents)
    if len(blob) != 4 * count:
        raise FormatError(f"raw payload holds {len(blob)} bytes but extents {extents} need {4 * count}")
    values = np.frombuffer(blob, dtype='<f4')
    if not np.all(np.isfinite(values)):
        raise DataError("raw payload contains non-finite values")
    return _wrap(values.astype(np.float64).reshape(extents))
