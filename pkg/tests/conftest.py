"""Shared brute-force oracles, kept deliberately independent of the package
implementations they cross-check."""

import numpy as np


def xi_brute(x, y):
    """Literal double-loop rank statistic: sort by x, count y-ranks by <=."""
    n = len(x)
    order = sorted(range(n), key=lambda j: x[j])
    ys = [y[j] for j in order]
    ranks = [sum(1 for yk in ys if yk <= yj) for yj in ys]
    jumps = sum(abs(ranks[j + 1] - ranks[j]) for j in range(n - 1))
    return 1.0 - 3.0 * jumps / (n * n - 1.0)


def r2_brute(y_true, y_pred):
    y_true = [float(v) for v in y_true]
    y_pred = [float(v) for v in y_pred]
    mean = sum(y_true) / len(y_true)
    rss = sum((a - b) ** 2 for a, b in zip(y_true, y_pred))
    tss = sum((a - mean) ** 2 for a in y_true)
    return 1.0 - rss / tss


def dense_posterior(kernel, jitter, X, y, Z):
    """GP posterior via an explicit dense solve (normalized internally the
    same way the package normalizes, but sharing no code with it)."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    Z = np.atleast_2d(np.asarray(Z, float))
    y_mean = y.mean()
    y_std = y.std() if y.std() > 1e-12 else 1.0
    y_norm = (y - y_mean) / y_std
    K = kernel(X, X) + jitter * np.eye(X.shape[0])
    k_z = kernel(X, Z)
    solve = np.linalg.solve
    mean = y_mean + y_std * (k_z.T @ solve(K, y_norm))
    var = kernel.signal_variance - np.einsum("ij,ij->j", k_z, solve(K, k_z))
    return mean, var
