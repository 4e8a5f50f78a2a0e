"""Exact Gaussian-process regression on a low-dimensional feature subset.

The posterior at a point z given training inputs x and outputs y is Gaussian
with mean <k(z), K_x^{-1} y> and variance K(z,z) - <k(z), K_x^{-1} k(z)>; at
a training point the mean interpolates the observation and the variance is
zero. Inference goes through one Cholesky factorization of K_x (+ jitter),
so fitting is O(n^3) once and each predictive variance costs one triangular
solve. Outputs are normalized to zero mean and unit variance before fitting,
matching the zero-mean prior; predictive variances are reported in those
normalized units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@dataclass(frozen=True)
class SquaredExponentialKernel:
    """k(a, b) = signal_variance * exp(-0.5 * ||(a - b) / lengthscale||^2).

    ``lengthscale`` is either a scalar shared across dimensions (the default
    configuration) or a per-dimension vector.
    """

    signal_variance: float = 1.0
    lengthscale: float | np.ndarray = 1.0

    def __post_init__(self):
        ls = np.asarray(self.lengthscale, dtype=float)
        if self.signal_variance <= 0.0 or np.any(ls <= 0.0):
            raise ValueError("kernel hyperparameters must be positive")

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        ls = np.asarray(self.lengthscale, dtype=float)
        sq = cdist(A / ls, B / ls, metric="sqeuclidean")
        return self.signal_variance * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class HyperparameterGrid:
    """Log-spaced search grid for (signal_variance, shared lengthscale).

    Spans are relative: the lengthscale span multiplies the largest input
    range, the variance span multiplies the variance of the normalized
    outputs. After the full grid scan, a local 3x3 refinement runs
    ``refinements`` times, halving the log-step each time.
    """

    n_variance: int = 8
    n_lengthscale: int = 12
    variance_span: tuple[float, float] = (0.1, 10.0)
    lengthscale_span: tuple[float, float] = (0.05, 5.0)
    refinements: int = 2


DEFAULT_GRID = HyperparameterGrid()

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


def _factorize(K: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + jitter*I, escalating jitter tenfold on failure."""
    n = K.shape[0]
    jitter = _JITTER_START * signal_variance
    limit = _JITTER_MAX * signal_variance
    while True:
        try:
            L = cholesky(K + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > limit:
                raise np.linalg.LinAlgError(
                    f"Cholesky failed up to maximum jitter {limit:g}"
                )


def _normalized_lml(L: np.ndarray, alpha: np.ndarray, y_norm: np.ndarray) -> float:
    n = y_norm.shape[0]
    return float(
        -0.5 * (y_norm @ alpha)
        - np.log(np.diag(L)).sum()
        - 0.5 * n * math.log(2.0 * math.pi)
    )


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """Exact GP regressor with a squared-exponential kernel.

    Parameters
    ----------
    kernel : SquaredExponentialKernel or None
        Fixed kernel to use. When None, hyperparameters are chosen on the
        grid (if ``optimize``) or taken from the grid's middle cell.
    optimize : bool
        Grid-search the kernel hyperparameters by marginal likelihood at fit
        time (needs at least 3 samples). Ignored when ``kernel`` is given.
    grid : HyperparameterGrid or None
        Search grid; None means the default 8x12 grid with two refinements.

    Attributes
    ----------
    kernel_ : SquaredExponentialKernel
        Kernel actually used.
    jitter_ : float
        Diagonal jitter added to make the Cholesky factorization succeed.
    degenerate_ : bool
        True when y was constant; the outputs are then left unscaled.

    Notes
    -----
    ``predict(X, return_var=True)`` returns the de-normalized posterior mean
    and the posterior variance in normalized output units, clamped at 0.
    """

    def __init__(self, kernel: SquaredExponentialKernel | None = None,
                 optimize: bool = True, grid: HyperparameterGrid | None = None):
        self.kernel = kernel
        self.optimize = optimize
        self.grid = grid

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        self.y_mean_ = float(y.mean())
        std = float(y.std())
        self.degenerate_ = std < 1e-12
        self.y_std_ = 1.0 if self.degenerate_ else std
        y_norm = (y - self.y_mean_) / self.y_std_

        if self.kernel is not None:
            self.kernel_ = self.kernel
        elif self.optimize and X.shape[0] >= 3 and not self.degenerate_:
            self.kernel_ = fit_kernel(X, y, self.grid)
        else:
            self.kernel_ = default_kernel(X, self.grid)

        K = self.kernel_(X, X)
        self.L_, self.jitter_ = _factorize(K, self.kernel_.signal_variance)
        self.alpha_ = solve_triangular(
            self.L_.T, solve_triangular(self.L_, y_norm, lower=True), lower=False
        )
        self.X_train_ = X
        self.y_train_ = y
        self._y_norm = y_norm
        return self

    def predict(self, X, return_var: bool = False):
        check_is_fitted(self, "alpha_")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        k_xz = self.kernel_(self.X_train_, X)
        mean = self.y_mean_ + self.y_std_ * (k_xz.T @ self.alpha_)
        if not return_var:
            return mean
        v = solve_triangular(self.L_, k_xz, lower=True)
        var = self.kernel_.signal_variance - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def log_marginal_likelihood(self) -> float:
        """Marginal log likelihood of the normalized training outputs."""
        check_is_fitted(self, "alpha_")
        return _normalized_lml(self.L_, self.alpha_, self._y_norm)


def default_kernel(X, grid: HyperparameterGrid | None = None) -> SquaredExponentialKernel:
    """Middle cell of the search grid: the fallback when fitting is impossible."""
    grid = grid or DEFAULT_GRID
    span = _input_span(np.asarray(X, dtype=float))
    ls = math.sqrt(grid.lengthscale_span[0] * grid.lengthscale_span[1]) * span
    sv = math.sqrt(grid.variance_span[0] * grid.variance_span[1])
    return SquaredExponentialKernel(signal_variance=sv, lengthscale=ls)


def _input_span(X: np.ndarray) -> float:
    span = float(np.max(X.max(axis=0) - X.min(axis=0))) if X.size else 0.0
    return span if span > 0.0 else 1.0


def fit_kernel(X, y, grid: HyperparameterGrid | None = None) -> SquaredExponentialKernel:
    """Pick (signal_variance, shared lengthscale) by marginal likelihood.

    Scans the full log-spaced grid, then refines locally around the best
    cell, halving the log-step at each refinement. Deterministic: ties keep
    the first-scanned cell. A constant y short-circuits to the grid's middle
    cell (any lengthscale explains it equally well).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) with one output per row")
    n = X.shape[0]
    if n < 3:
        raise ValueError("need at least 3 samples to fit hyperparameters")
    grid = grid or DEFAULT_GRID

    std = float(y.std())
    if std < 1e-12:
        return default_kernel(X, grid)
    y_norm = (y - y.mean()) / std
    var_norm = float(y_norm.var())  # 1 by construction, kept for clarity

    span = _input_span(X)
    log_sv = np.log(np.array(grid.variance_span) * var_norm)
    log_ls = np.log(np.array(grid.lengthscale_span) * span)
    sv_values = np.linspace(log_sv[0], log_sv[1], grid.n_variance)
    ls_values = np.linspace(log_ls[0], log_ls[1], grid.n_lengthscale)

    sq = cdist(X, X, metric="sqeuclidean")

    def lml_at(log_sv_i: float, log_ls_j: float) -> float:
        sv = math.exp(log_sv_i)
        K = sv * np.exp(-0.5 * sq / math.exp(2.0 * log_ls_j))
        try:
            L, _ = _factorize(K, sv)
        except np.linalg.LinAlgError:
            return -np.inf
        alpha = solve_triangular(
            L.T, solve_triangular(L, y_norm, lower=True), lower=False
        )
        return _normalized_lml(L, alpha, y_norm)

    best = (-np.inf, sv_values[0], ls_values[0])
    for lsv in sv_values:
        for lls in ls_values:
            score = lml_at(lsv, lls)
            if score > best[0]:
                best = (score, lsv, lls)

    step_sv = (sv_values[-1] - sv_values[0]) / max(grid.n_variance - 1, 1)
    step_ls = (ls_values[-1] - ls_values[0]) / max(grid.n_lengthscale - 1, 1)
    for _ in range(grid.refinements):
        step_sv /= 2.0
        step_ls /= 2.0
        _, center_sv, center_ls = best
        for dv in (-1, 0, 1):
            for dl in (-1, 0, 1):
                if dv == 0 and dl == 0:
                    continue
                lsv = center_sv + dv * step_sv
                lls = center_ls + dl * step_ls
                score = lml_at(lsv, lls)
                if score > best[0]:
                    best = (score, lsv, lls)

    return SquaredExponentialKernel(
        signal_variance=math.exp(best[1]), lengthscale=math.exp(best[2])
    )


def dense_gp_oracle(model: GaussianProcessSurrogate,
                    Z) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean/variance recomputed with a dense solve, for cross-checks.

    Solves against K + jitter*I directly instead of reusing the model's
    Cholesky factor; agreement with :meth:`GaussianProcessSurrogate.predict`
    validates the factorized path.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    X = model.X_train_
    kernel = model.kernel_
    K = kernel(X, X) + model.jitter_ * np.eye(X.shape[0])
    k_z = kernel(X, Z)
    y_norm = (model.y_train_ - model.y_mean_) / model.y_std_
    mean = model.y_mean_ + model.y_std_ * (k_z.T @ np.linalg.solve(K, y_norm))
    var = kernel.signal_variance - np.einsum("ij,ij->j", k_z, np.linalg.solve(K, k_z))
    return mean, var


def random_gp_problem(rng, max_n: int = 20, max_condition: float = 1e6):
    """Well-posed random regression problem: outputs drawn from the GP prior.

    Sampling y from the prior keeps the data consistent with the kernel, and
    draws are rejected until the kernel matrix condition number is below
    ``max_condition``, so the exact posterior identities (interpolation,
    oracle agreement) are numerically observable at tight tolerances.
    """
    while True:
        n = int(rng.integers(2, max_n + 1))
        d = int(rng.integers(1, 5))
        X = rng.uniform(size=(n, d))
        kernel = SquaredExponentialKernel(
            signal_variance=float(rng.uniform(0.5, 3.0)),
            lengthscale=float(rng.uniform(0.1, 0.5)),
        )
        eigs = np.linalg.eigvalsh(kernel(X, X))
        if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > max_condition:
            continue
        L, _ = _factorize(kernel(X, X), kernel.signal_variance)
        scale = math.exp(float(rng.uniform(-1.0, 1.0)))
        shift = float(rng.normal()) * 2.0
        y = shift + scale * (L @ rng.standard_normal(n))
        return X, y, kernel
