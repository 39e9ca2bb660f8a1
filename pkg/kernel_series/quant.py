"""Block floating point quantization with a block size of 1, and model-size arithmetic.

Every scalar v becomes sign, exponent e = clamp(⌊log2|v|⌋, -64, 63) and an m-bit mantissa
magnitude |q| with q = round(v / 2^(e-(m-1))), so it costs m + 8 bits.

FKQ1 layout, all integers little-endian::

    magic b'FKQ1' | u8 basis | u8 m | u64 c_out, c_in, k, n | u8 has_bias
    | packed coefficients | packed bias (if present) | u64 filter count | f64 per-filter MSE

A packed value is sign·2^(m+7) | (e+64)·2^m | |q| stored in ⌈(m+8)/8⌉ bytes.
"""
import logging
import struct
from typing import Tuple, TypedDict, Union

import numpy as np

from ._errors import ArgumentError, DataError, FormatError
from .data_types import BfpConfig, CoeffTensor, FitReport, Full32
from .kernel_model import (CompressedLayer, Cursor, check_extents, kind_from_code, read_mse_block)
from .utilities import read_bytes, write_bytes_atomic

logger = logging.getLogger('kernel_series')

MAGIC = b'FKQ1'
_HEAD = struct.Struct('<BB4QB')
_COUNT = struct.Struct('<Q')


class QuantStats(TypedDict):
    values: int
    encoded_bits: int
    saturated: int
    max_rel_error: float


def _fields(v: np.ndarray, config: BfpConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed mantissas q and exponents e with v ≈ q·2^(e-(m-1)), and where the exponent overflowed."""
    m = config.mantissa_bits
    _, exp = np.frexp(v)
    e = np.clip(exp.astype(np.int64) - 1, config.min_exponent, config.max_exponent)
    q = np.rint(np.ldexp(v, (m - 1) - e))

    # rounding up to 2^m moves the value to the next binade
    carry = np.abs(q) > config.max_mantissa
    e = np.where(carry, e + 1, e)
    saturated = e > config.max_exponent
    e = np.minimum(e, config.max_exponent)
    q = np.where(carry & ~saturated, np.rint(np.ldexp(v, (m - 1) - e)), q)
    q = np.clip(q, -config.max_mantissa, config.max_mantissa)

    zero = q == 0
    e = np.where(zero, config.min_exponent, e)
    return q.astype(np.int64), e, saturated


def _check_finite(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DataError("cannot quantize non-finite values")
    return v


def quantize_bfp(values, config: BfpConfig) -> Tuple[np.ndarray, int]:
    """
    Round every scalar to the nearest BFP value.
    :param values: Finite reals of any shape.
    :param config: The mantissa width.
    :return: The dequantized values (same shape) and the number of bits the encoding takes.
    """
    v = _check_finite(values)
    q, e, _ = _fields(v, config)
    deq = np.ldexp(q.astype(np.float64), e - (config.mantissa_bits - 1))
    return deq, int(v.size) * config.bits_per_value


def saturated_mask(values, config: BfpConfig) -> np.ndarray:
    """
    True where rounding overflows the top exponent, i.e. |v| >= max_magnitude + half a mantissa step.
    Values just above max_magnitude that still round down to it are not saturated. Infinities are.
    """
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    return ~finite | _fields(np.where(finite, v, 0.0), config)[2]


def ste_passthrough(upstream_grad, values, config: BfpConfig) -> np.ndarray:
    """
    Straight-through estimator: the quantizer is treated as the identity inside its range.
    :return: ``upstream_grad`` where the value is representable, 0 where it saturated.
    """
    grad = np.asarray(upstream_grad, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if grad.shape != v.shape:
        raise ArgumentError(f"gradient shape {grad.shape} does not match values shape {v.shape}")
    return np.where(saturated_mask(v, config), 0.0, grad)


def model_size_bytes(param_count: int, config: Union[BfpConfig, Full32]) -> int:
    """Storage for ``param_count`` parameters, partial bytes rounded up."""
    if param_count < 0:
        raise ArgumentError(f"parameter count must be non-negative, got {param_count}")
    return -(-param_count * config.bits_per_value // 8)


def _bytes_per_value(config: BfpConfig) -> int:
    return -(-config.bits_per_value // 8)


def encode_bfp(values, config: BfpConfig) -> bytes:
    v = _check_finite(values).ravel()
    m = config.mantissa_bits
    q, e, _ = _fields(v, config)
    sign = (q < 0).astype(np.uint64)
    packed = (sign << np.uint64(m + 7)) \
        | ((e - config.min_exponent).astype(np.uint64) << np.uint64(m)) \
        | np.abs(q).astype(np.uint64)
    width = _bytes_per_value(config)
    return packed.astype('<u8').view(np.uint8).reshape(-1, 8)[:, :width].tobytes()


def decode_bfp(blob: bytes, count: int, config: BfpConfig) -> np.ndarray:
    width = _bytes_per_value(config)
    if len(blob) != count * width:
        raise FormatError(f"packed block holds {len(blob)} bytes, {count} values need {count * width}")
    raw = np.zeros((count, 8), dtype=np.uint8)
    raw[:, :width] = np.frombuffer(blob, dtype=np.uint8).reshape(count, width)
    packed = raw.view('<u8').ravel()
    m = config.mantissa_bits
    magnitude = (packed & np.uint64((1 << m) - 1)).astype(np.int64)
    e = ((packed >> np.uint64(m)) & np.uint64(0x7F)).astype(np.int64) + config.min_exponent
    sign = ((packed >> np.uint64(m + 7)) & np.uint64(1)).astype(bool)
    q = np.where(sign, -magnitude, magnitude)
    return np.ldexp(q.astype(np.float64), e - (m - 1))


def quantize_layer(layer: CompressedLayer, config: BfpConfig) -> Tuple[CompressedLayer, QuantStats]:
    """Quantize a layer's coefficients and bias; the fit diagnostics are carried over."""
    parts = [layer.coeffs.data.ravel()]
    if layer.bias is not None:
        parts.append(layer.bias)
    values = np.concatenate(parts)
    deq, bits = quantize_bfp(values, config)

    nonzero = values != 0
    rel = np.abs(values[nonzero] - deq[nonzero]) / np.abs(values[nonzero])
    saturated = int(np.count_nonzero(saturated_mask(values, config)))
    if saturated:
        logger.warning("%d values saturated the %d-bit exponent", saturated, config.exponent_bits)

    n_coeffs = layer.coeffs.size
    quantized = CompressedLayer(
        kind=layer.kind, k=layer.k,
        coeffs=CoeffTensor(deq[:n_coeffs].reshape(layer.coeffs.shape)),
        fit=layer.fit,
        bias=deq[n_coeffs:] if layer.bias is not None else None,
    )
    stats: QuantStats = {
        "values": int(values.size),
        "encoded_bits": bits,
        "saturated": saturated,
        "max_rel_error": float(rel.max()) if rel.size else 0.0,
    }
    return quantized, stats


def encode_quantized(layer: CompressedLayer, config: BfpConfig) -> bytes:
    has_bias = layer.bias is not None
    parts = [
        MAGIC + _HEAD.pack(layer.kind.code, config.mantissa_bits, layer.c_out, layer.c_in,
                           layer.k, layer.n, int(has_bias)),
        encode_bfp(layer.coeffs.data, config),
    ]
    if has_bias:
        parts.append(encode_bfp(layer.bias, config))
    parts.append(_COUNT.pack(layer.c_out * layer.c_in))
    parts.append(np.asarray(layer.fit.mse, dtype='<f8').tobytes(order='C'))
    return b''.join(parts)


def decode_quantized(blob: bytes) -> Tuple[CompressedLayer, BfpConfig]:
    cursor = Cursor(blob)
    cursor.expect(MAGIC)
    code, m, c_out, c_in, k, n, has_bias = _HEAD.unpack(cursor.take(_HEAD.size))
    kind = kind_from_code(code)
    check_extents(c_out, c_in, k, n, has_bias)
    try:
        config = BfpConfig(mantissa_bits=m)
    except ArgumentError as e:
        raise FormatError(str(e)) from e
    width = _bytes_per_value(config)
    count = c_out * c_in * n * n
    coeffs = decode_bfp(cursor.take(count * width), count, config).reshape(c_out, c_in, n, n)
    bias = decode_bfp(cursor.take(c_out * width), c_out, config) if has_bias else None
    mse = read_mse_block(cursor, c_out, c_in)
    cursor.finish()
    layer = CompressedLayer(kind=kind, k=k, coeffs=CoeffTensor(coeffs),
                            fit=FitReport(method=None, mse=mse), bias=bias)
    return layer, config


def save_quantized(layer: CompressedLayer, config: BfpConfig, path) -> None:
    write_bytes_atomic(path, encode_quantized(layer, config))
    logger.info("Wrote %d-bit mantissa layer to %s", config.mantissa_bits, path)


def load_quantized(path) -> Tuple[CompressedLayer, BfpConfig]:
    return decode_quantized(read_bytes(path))
