"""2D cosine and Chebyshev bases.

Both bases are sampled on grids that are images of each other under x = cos(θ):
the cosine grid is the DCT-II half-sample grid (a + 0.5)·π/K and the Chebyshev grid
is the Chebyshev-Gauss node set cos((2a + 1)·π/(2K)). Since T_n(cos θ) = cos(nθ) the
two design matrices coincide entrywise.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from numpy.polynomial import chebyshev as C

from ._errors import ArgumentError
from .data_types import BasisKind


@dataclass(frozen=True)
class SampleGrid:
    """
    :class:`SampleGrid <SampleGrid>` the K×K points at which a kernel function is sampled.
    """

    kind: BasisKind
    k: int
    axis: np.ndarray
    "Per-axis coordinates x_0 .. x_{K-1}; point (a, b) is (axis[a], axis[b])."

    @property
    def points(self) -> np.ndarray:
        """Array shaped (K, K, 2) holding (x_a, y_b) at [a, b]."""
        xs, ys = np.meshgrid(self.axis, self.axis, indexing='ij')
        return np.stack([xs, ys], axis=-1)


def chebyshev_T(n: int, x):
    """
    Chebyshev polynomial of the first kind by the three-term recurrence.
    :param n: The order, n >= 0.
    :param x: A real or an array of reals.
    :return: T_n(x) with the shape of ``x``.
    """
    if n < 0:
        raise ArgumentError(f"Chebyshev order must be non-negative, got {n}")
    x = np.asarray(x, dtype=np.float64)
    t_prev = np.ones_like(x)
    if n == 0:
        result = t_prev
    else:
        t = x.copy()
        for _ in range(n - 1):
            t_prev, t = t, 2.0 * x * t - t_prev
        result = t
    return float(result) if result.ndim == 0 else result


def make_grid(kind: BasisKind, k: int) -> SampleGrid:
    if k < 1:
        raise ArgumentError(f"grid size must be at least 1, got {k}")
    a = np.arange(k, dtype=np.float64)
    if kind is BasisKind.COSINE:
        axis = (a + 0.5) * np.pi / k
    else:
        axis = np.cos((2.0 * a + 1.0) * np.pi / (2.0 * k))
    axis.setflags(write=False)
    return SampleGrid(kind=kind, k=k, axis=axis)


def _check_orders(k: int, n: int) -> None:
    if n < 1:
        raise ArgumentError(f"harmonic count must be at least 1, got {n}")
    if n > k:
        raise ArgumentError(f"harmonic count {n} exceeds kernel size {k}")


@lru_cache(maxsize=128)
def axis_matrix(kind: BasisKind, k: int, n: int) -> np.ndarray:
    """One-axis factor B of shape (K, N) with B[a, i] = φ_i(x_a)."""
    _check_orders(k, n)
    axis = make_grid(kind, k).axis
    if kind is BasisKind.COSINE:
        b = np.cos(np.outer(axis, np.arange(n, dtype=np.float64)))
    else:
        b = C.chebvander(axis, n - 1)
    b.setflags(write=False)
    return b


@lru_cache(maxsize=128)
def design_matrix(kind: BasisKind, k: int, n: int) -> np.ndarray:
    """
    Design matrix Φ of shape (K², N²).

    Row a·K + b is grid point (x_a, y_b); column i0·N + i1 is the product φ_i0(x)·φ_i1(y).
    Returned arrays are cached and read-only.
    """
    b = axis_matrix(kind, k, n)
    phi = np.kron(b, b)
    phi.setflags(write=False)
    return phi


def eval_series(kind: BasisKind, coeffs, point: Union[Tuple[float, float], np.ndarray]):
    """
    Evaluate ŵ(x, y) = Σ a[i0, i1]·φ_i0(x)·φ_i1(y) for one filter.
    :param kind: The basis family.
    :param coeffs: The filter's coefficients, shaped (n, n) or flat of length n².
    :param point: An (x, y) pair; x and y may also be equally shaped arrays.
    :return: A float, or an array shaped like x.
    """
    a = np.asarray(coeffs, dtype=np.float64)
    if a.ndim == 1:
        n = int(round(np.sqrt(a.size)))
        if n * n != a.size:
            raise ArgumentError(f"flat coefficient vector of length {a.size} is not a square count")
        a = a.reshape(n, n)
    x = np.asarray(point[0], dtype=np.float64)
    y = np.asarray(point[1], dtype=np.float64)
    if kind is BasisKind.CHEBYSHEV:
        value = C.chebval2d(x, y, a)
    else:
        idx = np.arange(a.shape[0], dtype=np.float64)
        cx = np.cos(x[..., None] * idx)
        cy = np.cos(y[..., None] * idx)
        value = np.einsum('...i,ij,...j->...', cx, a, cy)
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value
