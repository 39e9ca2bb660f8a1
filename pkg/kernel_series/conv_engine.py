"""Reference convolution by direct looping.

Cross-correlation (no kernel flip) with zero padding. Every output element is the
row-major sum over its (c_in/groups)×K×K window, in the same order for the discrete
and the continuous forms.
"""
import numpy as np

from ._errors import ArgumentError
from .basis import eval_series, make_grid
from .data_types import ConvSpec, OutputError, Tensor3, Tensor4
from .kernel_model import CompressedLayer, reconstruct

# Floor of the relative error denominator.
_EPS = 1e-30


def _accumulate(x: np.ndarray, weights: np.ndarray, spec: ConvSpec) -> np.ndarray:
    c_in, height, width = x.shape
    c_out, c_in_group, k_h, k_w = weights.shape
    groups = spec.groups
    if c_in % groups or c_out % groups:
        raise ArgumentError(f"channels ({c_in} in, {c_out} out) are not divisible by groups={groups}")
    if c_in // groups != c_in_group:
        raise ArgumentError(f"kernels expect {c_in_group * groups} input channels, input has {c_in}")
    if k_h != k_w:
        raise ArgumentError(f"kernel is not square: {k_h}x{k_w}")
    pad = spec.resolve_padding(k_h)
    if height + 2 * pad < k_h or width + 2 * pad < k_w:
        raise ArgumentError(f"kernel {k_h}x{k_w} is larger than the padded input {height + 2 * pad}x{width + 2 * pad}")

    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out_h = (height + 2 * pad - k_h) // spec.stride + 1
    out_w = (width + 2 * pad - k_w) // spec.stride + 1
    out = np.zeros((c_out, out_h, out_w))
    per_group = c_out // groups
    s = spec.stride
    for o in range(c_out):
        g = o // per_group
        window_channels = xp[g * c_in_group:(g + 1) * c_in_group]
        kernel = weights[o]
        for r in range(out_h):
            for c in range(out_w):
                out[o, r, c] = np.sum(kernel * window_channels[:, r * s:r * s + k_h, c * s:c * s + k_w])
    return out


def conv2d(inputs: Tensor3, kernels: Tensor4, spec: ConvSpec = ConvSpec()) -> Tensor3:
    """
    Discrete convolution of a feature map with dense kernels.
    :param inputs: Feature map (c_in, H, W).
    :param kernels: Weights (c_out, c_in/groups, K, K).
    :param spec: Stride, padding and groups.
    :return: Output map (c_out, ⌊(H + 2p − K)/stride⌋ + 1, ...).
    """
    return Tensor3(_accumulate(inputs.data, kernels.data, spec))


def sample_kernels(layer: CompressedLayer) -> np.ndarray:
    """Evaluate every filter's series at the layer's sample grid points."""
    grid = make_grid(layer.kind, layer.k)
    points = grid.points
    xs, ys = points[..., 0], points[..., 1]
    out = np.empty((layer.c_out, layer.c_in, layer.k, layer.k))
    for o in range(layer.c_out):
        for i in range(layer.c_in):
            out[o, i] = eval_series(layer.kind, layer.coeffs.filter(o, i), (xs, ys))
    return out


def conv2d_continuous(inputs: Tensor3, layer: CompressedLayer, spec: ConvSpec = ConvSpec()) -> Tensor3:
    """Convolution with the kernel function ŵ sampled at the grid, without building a dense layer first."""
    return Tensor3(_accumulate(inputs.data, sample_kernels(layer), spec))


def output_error(reference: np.ndarray, approx: np.ndarray) -> OutputError:
    diff = reference - approx
    return {
        "rel_l2": float(np.linalg.norm(diff) / max(np.linalg.norm(reference), _EPS)),
        "max_abs": float(np.max(np.abs(diff))),
    }


def layer_output_error(inputs: Tensor3, original: Tensor4, layer: CompressedLayer,
                       spec: ConvSpec = ConvSpec()) -> OutputError:
    """
    Relative L2 and max absolute difference between the outputs of the dense and the compressed layer.
    """
    expected = (layer.c_out, layer.c_in, layer.k, layer.k)
    if original.shape != expected:
        raise ArgumentError(f"original kernels have shape {original.shape}, layer describes {expected}")
    y_orig = conv2d(inputs, original, spec).data
    y_comp = conv2d(inputs, reconstruct(layer), spec).data
    return output_error(y_orig, y_comp)
