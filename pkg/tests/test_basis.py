import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernel_series import ArgumentError, BasisKind, chebyshev_T, design_matrix, eval_series, make_grid
from kernel_series.basis import axis_matrix

KINDS = list(BasisKind)


def test_chebyshev_low_orders():
    assert chebyshev_T(0, 0.7) == 1.0
    assert chebyshev_T(2, 0.5) == pytest.approx(-0.5)
    assert chebyshev_T(1, -0.3) == pytest.approx(-0.3)


def test_chebyshev_matches_cosine_identity():
    assert chebyshev_T(5, math.cos(0.3)) == pytest.approx(math.cos(1.5), abs=1e-14)


def test_chebyshev_negative_order():
    with pytest.raises(ArgumentError):
        chebyshev_T(-1, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=2, max_value=40), st.floats(min_value=-1.0, max_value=1.0))
def test_chebyshev_bounded_on_interval(n, x):
    assert abs(chebyshev_T(n, x)) <= 1 + 1e-12


def test_chebyshev_vectorized():
    x = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(chebyshev_T(3, x), 4 * x ** 3 - 3 * x, atol=1e-14)


def test_cosine_grid_points():
    np.testing.assert_allclose(make_grid(BasisKind.COSINE, 1).points[0, 0], [math.pi / 2, math.pi / 2])
    np.testing.assert_allclose(make_grid(BasisKind.COSINE, 3).axis, [math.pi / 6, math.pi / 2, 5 * math.pi / 6])


def test_chebyshev_grid_points():
    axis = make_grid(BasisKind.CHEBYSHEV, 3).axis
    np.testing.assert_allclose(axis, [math.sqrt(3) / 2, 0.0, -math.sqrt(3) / 2], atol=1e-15)


@pytest.mark.parametrize("k", range(1, 12))
def test_grid_ranges(k):
    cos_axis = make_grid(BasisKind.COSINE, k).axis
    assert np.all((cos_axis > 0) & (cos_axis < math.pi))
    cheb_axis = make_grid(BasisKind.CHEBYSHEV, k).axis
    assert np.all((cheb_axis > -1) & (cheb_axis < 1))
    assert np.all(np.diff(cheb_axis) < 0)


def test_grid_points_layout():
    grid = make_grid(BasisKind.COSINE, 3)
    pts = grid.points
    assert pts.shape == (3, 3, 2)
    assert pts[0, 2, 0] == grid.axis[0]
    assert pts[0, 2, 1] == grid.axis[2]


def test_zero_grid():
    with pytest.raises(ArgumentError):
        make_grid(BasisKind.COSINE, 0)


def test_trivial_design_matrix():
    np.testing.assert_array_equal(design_matrix(BasisKind.COSINE, 1, 1), [[1.0]])


@pytest.mark.parametrize("kind", KINDS)
def test_design_matrix_entries(kind):
    k, n = 4, 3
    phi = design_matrix(kind, k, n)
    axis = make_grid(kind, k).axis
    assert phi.shape == (k * k, n * n)
    for a in range(k):
        for b in range(k):
            for i0 in range(n):
                for i1 in range(n):
                    if kind is BasisKind.COSINE:
                        expected = math.cos(i0 * axis[a]) * math.cos(i1 * axis[b])
                    else:
                        expected = chebyshev_T(i0, axis[a]) * chebyshev_T(i1, axis[b])
                    assert phi[a * k + b, i0 * n + i1] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("k", range(1, 8))
def test_bases_coincide_on_grid(k):
    for n in range(1, k + 1):
        np.testing.assert_allclose(design_matrix(BasisKind.CHEBYSHEV, k, n),
                                   design_matrix(BasisKind.COSINE, k, n), atol=1e-12)


@pytest.mark.parametrize("k", range(1, 12))
def test_square_design_matrix_is_orthogonal(k):
    phi = design_matrix(BasisKind.COSINE, k, k)
    gram = phi.T @ phi
    axis_norms = np.full(k, k / 2.0)
    axis_norms[0] = k
    expected = np.diag(np.kron(axis_norms, axis_norms))
    np.testing.assert_allclose(gram, expected, atol=1e-9)
    assert gram[0, 0] == pytest.approx(k * k)


@pytest.mark.parametrize("k,n", [(3, 0), (3, 4), (1, 2)])
def test_design_matrix_bad_orders(k, n):
    with pytest.raises(ArgumentError):
        design_matrix(BasisKind.COSINE, k, n)


def test_design_matrix_is_read_only():
    phi = design_matrix(BasisKind.CHEBYSHEV, 3, 2)
    with pytest.raises(ValueError):
        phi[0, 0] = 2.0
    with pytest.raises(ValueError):
        axis_matrix(BasisKind.CHEBYSHEV, 3, 2)[0, 0] = 2.0


@pytest.mark.parametrize("kind", KINDS)
def test_eval_series_simple_cases(kind):
    assert eval_series(kind, np.zeros((3, 3)), (0.4, 0.2)) == 0.0
    dc = np.zeros((3, 3))
    dc[0, 0] = 2.5
    assert eval_series(kind, dc, (0.4, -0.2)) == pytest.approx(2.5)


def test_eval_series_cosine_node():
    a = np.zeros((2, 2))
    a[1, 0] = 1.0
    assert eval_series(BasisKind.COSINE, a, (math.pi / 2, 0.7)) == pytest.approx(0.0, abs=1e-15)


def test_eval_series_flat_coefficients():
    a = np.arange(4.0)
    assert eval_series(BasisKind.CHEBYSHEV, a, (0.3, 0.1)) == \
        pytest.approx(eval_series(BasisKind.CHEBYSHEV, a.reshape(2, 2), (0.3, 0.1)))
    with pytest.raises(ArgumentError):
        eval_series(BasisKind.CHEBYSHEV, np.arange(3.0), (0.3, 0.1))


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(5))
def test_eval_series_matches_design_rows(kind, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 8))
    n = int(rng.integers(1, k + 1))
    coeffs = rng.standard_normal((n, n))
    phi = design_matrix(kind, k, n)
    axis = make_grid(kind, k).axis
    for a in range(k):
        for b in range(k):
            expected = phi[a * k + b] @ coeffs.ravel()
            assert eval_series(kind, coeffs, (axis[a], axis[b])) == pytest.approx(expected, abs=1e-12)
