import struct

import numpy as np
import pytest

from kernel_series import (ArgumentError, BasisKind, CoeffTensor, CompressedLayer, FitConfig, FitMethod, FitReport,
                           FormatError, Tensor4, compress_layer, layer_param_counts, load_compressed, reconstruct,
                           reconstruction_error, save_compressed)
from kernel_series.kernel_model import decode_compressed, encode_compressed

from conftest import random_kernels

LSQ = FitConfig(method=FitMethod.LEAST_SQUARES)


def _layer_from(coeffs, k, kind=BasisKind.COSINE, bias=None):
    coeffs = CoeffTensor(coeffs)
    return CompressedLayer(kind=kind, k=k, coeffs=coeffs,
                           fit=FitReport(method=None, mse=np.zeros((coeffs.c_out, coeffs.c_in))), bias=bias)


def test_full_order_keeps_parameter_count(rng):
    layer = compress_layer(random_kernels(rng, 4, 3, 3), BasisKind.COSINE, 3, LSQ)
    assert layer.fit.max_mse <= 1e-18
    counts = layer_param_counts(layer)
    assert counts["original"] == counts["compressed"] == 4 * 3 * 9
    assert counts["reduction_pct"] == 0.0


@pytest.mark.parametrize("k,n,expected", [(3, 2, 100 * (1 - 4 / 9)), (7, 4, 100 * (1 - 16 / 49)),
                                          (7, 5, 100 * (1 - 25 / 49)), (7, 6, 100 * (1 - 36 / 49))])
def test_reduction_arithmetic(k, n, expected):
    layer = _layer_from(np.zeros((1, 1, n, n)), k)
    counts = layer_param_counts(layer)
    assert counts["original"] == k * k
    assert counts["compressed"] == n * n
    assert counts["reduction_pct"] == pytest.approx(expected)
    assert counts["retained_pct"] == pytest.approx(100 - expected)


def test_rounded_percentages():
    assert round(layer_param_counts(_layer_from(np.zeros((1, 1, 2, 2)), 3))["reduction_pct"], 2) == 55.56
    assert [round(layer_param_counts(_layer_from(np.zeros((1, 1, n, n)), 7))["reduction_pct"], 1)
            for n in (4, 5, 6)] == [67.3, 49.0, 26.5]


def test_bias_counted_on_both_sides():
    layer = _layer_from(np.zeros((4, 2, 2, 2)), 3, bias=np.ones(4))
    counts = layer_param_counts(layer)
    assert counts["original"] == 4 * 2 * 9 + 4
    assert counts["compressed"] == 4 * 2 * 4 + 4


@pytest.mark.parametrize("k", range(2, 12))
def test_more_than_half_saved_below_inverse_sqrt2(k):
    for n in range(1, k + 1):
        if n / k < 1 / np.sqrt(2):
            assert layer_param_counts(_layer_from(np.zeros((1, 1, n, n)), k))["reduction_pct"] > 50


def test_zero_coefficients_reconstruct_to_zero():
    assert not np.any(reconstruct(_layer_from(np.zeros((2, 3, 2, 2)), 5)).data)


@pytest.mark.parametrize("kind", list(BasisKind))
def test_dc_only_reconstructs_constants(kind):
    coeffs = np.zeros((2, 1, 3, 3))
    coeffs[0, 0, 0, 0] = 1.5
    coeffs[1, 0, 0, 0] = -0.25
    dense = reconstruct(_layer_from(coeffs, 3, kind)).data
    np.testing.assert_allclose(dense[0, 0], np.full((3, 3), 1.5), atol=1e-15)
    np.testing.assert_allclose(dense[1, 0], np.full((3, 3), -0.25), atol=1e-15)


@pytest.mark.parametrize("kind", list(BasisKind))
@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_compress_then_reconstruct_is_identity(kind, k):
    rng = np.random.default_rng(k)
    kernels = random_kernels(rng, 6, 4, k)
    layer = compress_layer(kernels, kind, k, FitConfig(method=FitMethod.CLOSED_FORM_DCT))
    assert np.max(np.abs(reconstruct(layer).data - kernels.data)) <= 1e-9


@pytest.mark.parametrize("kind", list(BasisKind))
@pytest.mark.parametrize("seed", range(20))
def test_default_fit_is_exact_at_full_order(kind, seed):
    kernels = random_kernels(np.random.default_rng(seed), 3, 2, 7)
    layer = compress_layer(kernels, kind, 7)
    assert layer.fit.method == FitMethod.LEAST_SQUARES
    assert np.max(np.abs(reconstruct(layer).data - kernels.data)) <= 1e-9


def test_error_metrics_zero_for_identical(rng):
    kernels = random_kernels(rng, 2, 2, 3)
    layer = compress_layer(kernels, BasisKind.COSINE, 3, LSQ)
    errors = reconstruction_error(kernels, layer)
    for name in ("mse", "l2", "max_abs"):
        assert errors[name].shape == (2, 2)
        assert np.all(errors[name] <= 1e-9)


def test_error_metrics_ones_vs_zeros():
    errors = reconstruction_error(Tensor4(np.ones((1, 1, 3, 3))), _layer_from(np.zeros((1, 1, 2, 2)), 3))
    assert errors["mse"][0, 0] == pytest.approx(1.0)
    assert errors["l2"][0, 0] == pytest.approx(3.0)
    assert errors["max_abs"][0, 0] == pytest.approx(1.0)


def test_error_matches_fit_report(rng):
    kernels = random_kernels(rng, 3, 2, 3)
    layer = compress_layer(kernels, BasisKind.CHEBYSHEV, 2, LSQ)
    np.testing.assert_allclose(reconstruction_error(kernels, layer)["mse"], layer.fit.mse, rtol=0, atol=1e-12)


def test_error_shape_mismatch(rng):
    layer = _layer_from(np.zeros((1, 1, 2, 2)), 3)
    with pytest.raises(ArgumentError):
        reconstruction_error(random_kernels(rng, 2, 1, 3), layer)


def test_layer_invariants():
    with pytest.raises(ArgumentError):
        _layer_from(np.zeros((1, 1, 4, 4)), 3)
    with pytest.raises(ArgumentError):
        _layer_from(np.zeros((2, 1, 2, 2)), 3, bias=np.ones(3))


@pytest.mark.parametrize("k,message", [(1, "Pointwise"), (2, "2x2")])
def test_small_kernels_warn(rng, caplog, k, message):
    with caplog.at_level("WARNING", logger="kernel_series"):
        compress_layer(random_kernels(rng, 1, 1, k), BasisKind.COSINE, 1, LSQ)
    assert message in caplog.text


def test_file_round_trip(tmp_path, rng):
    layer = compress_layer(random_kernels(rng, 3, 2, 5), BasisKind.CHEBYSHEV, 3, LSQ, bias=rng.standard_normal(3))
    path = tmp_path / 'layer.fkc'
    save_compressed(layer, path)
    loaded = load_compressed(path)
    assert loaded.kind is BasisKind.CHEBYSHEV
    assert (loaded.c_out, loaded.c_in, loaded.k, loaded.n) == (3, 2, 5, 3)
    assert loaded.coeffs.data.tobytes() == layer.coeffs.data.tobytes()
    assert loaded.bias.tobytes() == layer.bias.tobytes()
    assert loaded.fit.mse.tobytes() == np.asarray(layer.fit.mse).tobytes()
    assert encode_compressed(loaded) == path.read_bytes()


def test_file_layout():
    coeffs = np.arange(4.0).reshape(1, 1, 2, 2)
    blob = encode_compressed(_layer_from(coeffs, 3, BasisKind.CHEBYSHEV))
    assert blob[:4] == b'FKC1'
    assert blob[4] == 1
    assert struct.unpack_from('<4Q', blob, 5) == (1, 1, 3, 2)
    assert blob[37] == 0
    assert struct.unpack_from('<4d', blob, 38) == (0.0, 1.0, 2.0, 3.0)
    assert struct.unpack_from('<Q', blob, 70) == (1,)
    assert len(blob) == 70 + 8 + 8


def _valid_blob():
    return encode_compressed(_layer_from(np.ones((2, 1, 2, 2)), 3, bias=np.zeros(2)))


@pytest.mark.parametrize("mangle", [
    lambda b: b[:-1],
    lambda b: b + b'\0',
    lambda b: b'FKC2' + b[4:],
    lambda b: b[:4] + b'\x07' + b[5:],
    lambda b: b[:37] + b'\x02' + b[38:],
    lambda b: b[:5] + struct.pack('<4Q', 2, 1, 2, 3) + b[37:],
    lambda b: b[:-8 * 2 - 8] + struct.pack('<Q', 3) + b[-8 * 2:],
    lambda b: b[:10],
])
def test_malformed_files(mangle):
    with pytest.raises(FormatError):
        decode_compressed(mangle(_valid_blob()))
