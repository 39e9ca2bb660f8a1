"""Compressed layers: coefficients plus metadata, dense reconstruction and parameter accounting.

FKC1 layout, all integers little-endian::

    magic b'FKC1' | u8 basis | u64 c_out, c_in, k, n | u8 has_bias
    | f64 coefficients (c_out·c_in·n², row-major) | f64 bias (c_out, if present)
    | u64 filter count | f64 per-filter MSE
"""
import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._errors import ArgumentError, FormatError
from .basis import axis_matrix
from .data_types import (BasisKind, CoeffTensor, FilterErrors, FitConfig, FitReport, ParamCounts,
                         Tensor4)
from .fitter import fit
from .utilities import read_bytes, write_bytes_atomic

logger = logging.getLogger('kernel_series')

MAGIC = b'FKC1'
_HEAD = struct.Struct("<B4QB")
_COUNT = struct.Struct('<Q')


@dataclass
class CompressedLayer:
    """
    :class:`CompressedLayer <CompressedLayer>` one convolution's kernels stored as series coefficients.
    """

    kind: BasisKind
    k: int
    "Side length of the dense kernels the coefficients stand for."

    coeffs: CoeffTensor

    fit: FitReport

    bias: Optional[np.ndarray] = None
    "Per-output-channel bias, carried uncompressed."

    def __post_init__(self):
        if self.coeffs.n > self.k:
            raise ArgumentError(f"harmonic count {self.coeffs.n} exceeds kernel size {self.k}")
        if self.bias is not None:
            self.bias = np.array(self.bias, dtype=np.float64)
            if self.bias.shape != (self.c_out,):
                raise ArgumentError(f"bias must have shape ({self.c_out},), got {self.bias.shape}")
            self.bias.setflags(write=False)
        if np.shape(self.fit.mse) != (self.c_out, self.c_in):
            raise ArgumentError("fit report does not match the coefficient extents")

    @property
    def c_out(self) -> int:
        return self.coeffs.c_out

    @property
    def c_in(self) -> int:
        return self.coeffs.c_in

    @property
    def n(self) -> int:
        return self.coeffs.n


def compress_layer(kernels: Tensor4, kind: BasisKind, n: int, config: FitConfig = FitConfig(),
                   bias=None) -> CompressedLayer:
    """Fit ``kernels`` and wrap the coefficients with their metadata."""
    k = kernels.k
    if k == 1:
        logger.warning("Pointwise (1x1) kernels keep one scalar per filter; series compression saves nothing")
    elif k == 2:
        logger.warning("2x2 kernels cannot be meaningfully compressed with a series")
    coeffs, report = fit(kernels, kind, n, config)
    return CompressedLayer(kind=kind, k=k, coeffs=coeffs, fit=report, bias=bias)


def reconstruct(layer: CompressedLayer) -> Tensor4:
    """Dense (c_out, c_in, K, K) kernels with entry [o, i, a, b] = ŵ_oi(x_a, y_b)."""
    b = axis_matrix(layer.kind, layer.k, layer.n)
    return Tensor4(np.einsum('ai,ocij,bj->ocab', b, layer.coeffs.data, b))


def reconstruction_error(original: Tensor4, layer: CompressedLayer) -> FilterErrors:
    """
    Per-filter error of the reconstruction on the grid samples.
    :return: Arrays shaped (c_out, c_in) under the keys mse, l2 and max_abs.
    """
    expected = (layer.c_out, layer.c_in, layer.k, layer.k)
    if original.shape != expected:
        raise ArgumentError(f"original kernels have shape {original.shape}, layer describes {expected}")
    residual = (original.data - reconstruct(layer).data).reshape(layer.c_out, layer.c_in, -1)
    squared = np.sum(residual ** 2, axis=-1)
    return {
        "mse": squared / residual.shape[-1],
        "l2": np.sqrt(squared),
        "max_abs": np.max(np.abs(residual), axis=-1),
    }


def layer_param_counts(layer: CompressedLayer) -> ParamCounts:
    """
    Dense and compressed parameter counts; the bias is counted on both sides.
    """
    bias = layer.c_out if layer.bias is not None else 0
    filters = layer.c_out * layer.c_in
    original = filters * layer.k * layer.k + bias
    compressed = filters * layer.n * layer.n + bias
    return {
        "original": original,
        "compressed": compressed,
        "reduction_pct": 100.0 * (1.0 - compressed / original),
        "retained_pct": 100.0 * compressed / original,
    }


def encode_compressed(layer: CompressedLayer) -> bytes:
    has_bias = layer.bias is not None
    parts = [
        MAGIC + _HEAD.pack(layer.kind.code, layer.c_out, layer.c_in, layer.k, layer.n, int(has_bias)),
        layer.coeffs.data.astype('<f8').tobytes(order='C'),
    ]
    if has_bias:
        parts.append(layer.bias.astype('<f8').tobytes())
    parts.append(_COUNT.pack(layer.c_out * layer.c_in))
    parts.append(np.asarray(layer.fit.mse, dtype='<f8').tobytes(order='C'))
    return b''.join(parts)


class Cursor:
    """Sequential reader over a byte string that raises FormatError on truncation."""

    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.offset = offset

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise FormatError(f"file truncated at byte {len(self.blob)}, needed {end}")
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def expect(self, magic: bytes) -> None:
        found = self.blob[self.offset:self.offset + len(magic)]
        if found != magic:
            raise FormatError(f"bad magic {found!r}, expected {magic!r}")
        self.offset += len(magic)

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype='<f8').astype(np.float64)

    def finish(self) -> None:
        if self.offset != len(self.blob):
            raise FormatError(f"{len(self.blob) - self.offset} unexpected trailing bytes")


def decode_compressed(blob: bytes) -> CompressedLayer:
    cursor = Cursor(blob)
    cursor.expect(MAGIC)
    code, c_out, c_in, k, n, has_bias = _HEAD.unpack(cursor.take(_HEAD.size))
    kind = kind_from_code(code)
    check_extents(c_out, c_in, k, n, has_bias)
    coeffs = cursor.floats(c_out * c_in * n * n).reshape(c_out, c_in, n, n)
    bias = cursor.floats(c_out) if has_bias else None
    mse = read_mse_block(cursor, c_out, c_in)
    cursor.finish()
    return CompressedLayer(kind=kind, k=k, coeffs=CoeffTensor(coeffs),
                           fit=FitReport(method=None, mse=mse), bias=bias)


def kind_from_code(code: int) -> BasisKind:
    try:
        return BasisKind.from_code(code)
    except ValueError as e:
        raise FormatError(str(e)) from e


def check_extents(c_out: int, c_in: int, k: int, n: int, has_bias: int) -> None:
    if min(c_out, c_in, k, n) < 1:
        raise FormatError(f"extents must be positive, got {(c_out, c_in, k, n)}")
    if n > k:
        raise FormatError(f"stored harmonic count {n} exceeds kernel size {k}")
    if has_bias not in (0, 1):
        raise FormatError(f"bias flag must be 0 or 1, got {has_bias}")


def read_mse_block(cursor: Cursor, c_out: int, c_in: int) -> np.ndarray:
    (count,) = _COUNT.unpack(cursor.take(_COUNT.size))
    if count != c_out * c_in:
        raise FormatError(f"MSE block lists {count} filters, layer has {c_out * c_in}")
    return cursor.floats(count).reshape(c_out, c_in)


def save_compressed(layer: CompressedLayer, path) -> None:
    write_bytes_atomic(path, encode_compressed(layer))
    logger.info("Wrote compressed layer (%s, n=%d) to %s", layer.kind.value, layer.n, path)


def load_compressed(path) -> CompressedLayer:
    return decode_compressed(read_bytes(path))
