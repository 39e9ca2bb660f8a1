"""Series coefficient fitting.

The loss of one filter is L(a) = (1/K²)·‖Φa − w‖² with Φ the design matrix, a convex
quadratic. Filters are independent, so every method works filter by filter.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft
import scipy.linalg

from ._errors import ArgumentError
from .basis import SampleGrid, design_matrix
from .data_types import BasisKind, CoeffTensor, FitConfig, FitMethod, FitReport, InitScheme, Tensor4

logger = logging.getLogger('kernel_series')

# Halving below this step means the safeguard cannot make progress.
_MIN_STEP = 1e-12


def init_chebyshev(kernels: Tensor4, n: int) -> CoeffTensor:
    """
    DC coefficient set to each filter's mean weight, every higher harmonic set to 0.
    :param kernels: The kernels being approximated.
    :param n: The harmonic count.
    :return: The initial coefficients.
    """
    if n < 1:
        raise ArgumentError(f"harmonic count must be at least 1, got {n}")
    coeffs = np.zeros((kernels.c_out, kernels.c_in, n, n))
    coeffs[:, :, 0, 0] = kernels.data.mean(axis=(2, 3))
    return CoeffTensor(coeffs)


def init_gaussian(c_out: int, c_in: int, k: int, n: int, seed: int) -> CoeffTensor:
    """
    Coefficients drawn i.i.d. from N(0, 1/(c_in·K²)).

    Filter (o, i) draws from its own stream seeded by (seed, o, i), so the result does
    not depend on how filters are scheduled.
    """
    if seed < 0:
        raise ArgumentError(f"seed must be non-negative, got {seed}")
    if n < 1:
        raise ArgumentError(f"harmonic count must be at least 1, got {n}")
    std = np.sqrt(1.0 / (c_in * k * k))
    coeffs = np.empty((c_out, c_in, n, n))
    for o in range(c_out):
        for i in range(c_in):
            rng = np.random.default_rng([seed, o, i])
            coeffs[o, i] = rng.normal(0.0, std, size=(n, n))
    return CoeffTensor(coeffs)


def _phi_for(grid: SampleGrid, n: int) -> np.ndarray:
    return design_matrix(grid.kind, grid.k, n)


def mse_loss(filter_weights, coeffs, grid: SampleGrid, kind: BasisKind) -> float:
    """Mean squared error between a K×K filter and its series over the grid samples."""
    if grid.kind is not kind:
        raise ArgumentError(f"grid was built for {grid.kind.value}, not {kind.value}")
    a = np.asarray(coeffs, dtype=np.float64)
    n = a.shape[0]
    residual = _phi_for(grid, n) @ a.ravel() - np.asarray(filter_weights, dtype=np.float64).ravel()
    return float(residual @ residual) / (grid.k * grid.k)


def mse_gradient(filter_weights, coeffs, grid: SampleGrid, kind: BasisKind) -> np.ndarray:
    """
    Exact gradient (2/K²)·Φᵀ(Φa − w), shaped like ``coeffs``.
    """
    if grid.kind is not kind:
        raise ArgumentError(f"grid was built for {grid.kind.value}, not {kind.value}")
    a = np.asarray(coeffs, dtype=np.float64)
    n = a.shape[0]
    phi = _phi_for(grid, n)
    residual = phi @ a.ravel() - np.asarray(filter_weights, dtype=np.float64).ravel()
    return ((2.0 / (grid.k * grid.k)) * (phi.T @ residual)).reshape(a.shape)


def gradient_descent(w: np.ndarray, phi: np.ndarray, a0: np.ndarray, config: FitConfig,
                     history: Optional[List[float]] = None) -> Tuple[np.ndarray, int]:
    """
    Fixed-step descent on one filter's loss, halving the step whenever it would raise the loss.
    :param w: Flat filter weights, length K².
    :param phi: Design matrix, shape (K², N²).
    :param a0: Flat starting coefficients, length N².
    :param config: Step, iteration cap and gradient tolerance.
    :param history: When given, receives the loss before the first step and after every accepted step.
    :return: The final flat coefficients and the number of iterations spent.
    """
    scale = 2.0 / w.size
    a = a0.astype(np.float64, copy=True)
    residual = phi @ a - w
    loss = float(residual @ residual) / w.size
    grad = scale * (phi.T @ residual)
    step = config.learning_rate
    if history is not None:
        history.append(loss)

    iterations = 0
    while iterations < config.max_iters and np.max(np.abs(grad)) >= config.grad_tol:
        iterations += 1
        candidate = a - step * grad
        cand_residual = phi @ candidate - w
        cand_loss = float(cand_residual @ cand_residual) / w.size
        if cand_loss > loss:
            step *= 0.5
            logger.debug("Loss rose to %.3e, halving step to %.3e", cand_loss, step)
            if step < _MIN_STEP:
                break
            continue
        a, residual, loss = candidate, cand_residual, cand_loss
        grad = scale * (phi.T @ residual)
        if history is not None:
            history.append(loss)
    return a, iterations


def _least_squares(w_cols: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Solve (ΦᵀΦ)a = Φᵀw for every column of ``w_cols``; raises LinAlgError if ΦᵀΦ is not SPD."""
    factor = scipy.linalg.cho_factor(phi.T @ phi)
    return scipy.linalg.cho_solve(factor, phi.T @ w_cols)


def _closed_form_dct(data: np.ndarray) -> np.ndarray:
    # scipy's unnormalized DCT-II is 2·Σ w_a cos(i x_a); dividing by the column norms
    # K (DC) and K/2 (others) per axis inverts Φ.
    k = data.shape[-1]
    y = scipy.fft.dctn(data, type=2, axes=(-2, -1))
    s = np.full(k, 1.0 / k)
    s[0] = 1.0 / (2.0 * k)
    return y * s[:, None] * s[None, :]


def _initial(kernels: Tensor4, kind: BasisKind, n: int, config: FitConfig) -> CoeffTensor:
    if config.init_for(kind) is InitScheme.CHEBYSHEV_MEAN_DC:
        return init_chebyshev(kernels, n)
    return init_gaussian(kernels.c_out, kernels.c_in, kernels.k, n, config.seed)


def _descend_all(kernels: Tensor4, kind: BasisKind, n: int, config: FitConfig,
                 phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    start = _initial(kernels, kind, n, config).data
    c_out, c_in = kernels.c_out, kernels.c_in
    flat_w = kernels.data.reshape(c_out * c_in, -1)
    flat_a0 = start.reshape(c_out * c_in, -1)

    def work(idx):
        return gradient_descent(flat_w[idx], phi, flat_a0[idx], config)

    indices = range(c_out * c_in)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(work, indices))
    else:
        results = [work(idx) for idx in indices]

    coeffs = np.stack([a for a, _ in results]).reshape(c_out, c_in, n, n)
    iterations = np.array([it for _, it in results], dtype=np.int64).reshape(c_out, c_in)
    return coeffs, iterations


def fit(kernels: Tensor4, kind: BasisKind, n: int, config: FitConfig = FitConfig()) -> Tuple[CoeffTensor, FitReport]:
    """
    Fit series coefficients to every filter of ``kernels``.
    :param kernels: Square kernels to approximate.
    :param kind: The basis family.
    :param n: Harmonics per axis, 1 <= n <= K.
    :param config: The method and its settings.
    :return: The coefficients and a report of the per-filter fit quality.
    """
    k = kernels.k
    if not 1 <= n <= k:
        raise ArgumentError(f"harmonic count must satisfy 1 <= n <= {k}, got {n}")
    method = config.method
    if method is FitMethod.CLOSED_FORM_DCT and n != k:
        raise ArgumentError(f"the closed-form DCT needs n == K ({k}), got n = {n}")

    phi = design_matrix(kind, k, n)
    c_out, c_in = kernels.c_out, kernels.c_in
    fell_back = False
    iterations = np.zeros((c_out, c_in), dtype=np.int64)
    logger.info("Fitting %d filters of %dx%d with %s, n=%d, method=%s",
                c_out * c_in, k, k, kind.value, n, method.value)

    if method is FitMethod.CLOSED_FORM_DCT:
        # identical design matrices, so the cosine transform serves both bases
        coeffs = _closed_form_dct(kernels.data)
    elif method is FitMethod.LEAST_SQUARES:
        try:
            solved = _least_squares(kernels.data.reshape(c_out * c_in, -1).T, phi)
            coeffs = solved.T.reshape(c_out, c_in, n, n)
        except np.linalg.LinAlgError:
            logger.warning("Normal equations could not be factored; falling back to gradient descent")
            fell_back = True
            coeffs, iterations = _descend_all(kernels, kind, n, config, phi)
    else:
        coeffs, iterations = _descend_all(kernels, kind, n, config, phi)

    residual = np.einsum('rc,ofc->ofr', phi, coeffs.reshape(c_out, c_in, n * n)) \
        - kernels.data.reshape(c_out, c_in, k * k)
    report = FitReport(
        method=method,
        mse=np.mean(residual ** 2, axis=-1),
        iterations=iterations,
        max_abs_residual=np.max(np.abs(residual), axis=-1),
        fell_back=fell_back,
    )
    logger.info("Fit done: mean MSE %.3e, max MSE %.3e", report.mean_mse, report.max_mse)
    return CoeffTensor(coeffs), report
