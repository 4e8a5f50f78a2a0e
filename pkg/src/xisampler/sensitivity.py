"""Rank-based dependence estimation and feature screening.

The central quantity is the rank correlation coefficient of Chatterjee
(JASA 2021), a consistent estimator of the first-order Cramér-von Mises
dependence index: it converges to 0 iff the two variables are independent and
to 1 iff y is a function of x. Because it needs nothing but one sort per
feature, it scales to hundreds or thousands of candidate features, which is
what makes it usable as a screening step in front of a surrogate model.

Under independence the estimator is asymptotically N(0, 2/5 / n), and the
maximum over k independent noise features concentrates at the scale
sqrt(4 log k / (5 n)); :func:`noise_threshold` exposes that scale as a
diagnostic for deciding how many features are worth keeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import RandomState, SampleSet, ensure_rng


def xi_correlation(x, y, random_state: RandomState = None) -> float:
    """Chatterjee's rank correlation of y against x.

    Pairs are sorted by x; with r_j the number of y-values not exceeding the
    j-th y in that order, the statistic is

        1 - 3 * sum_j |r_{j+1} - r_j| / (n^2 - 1).

    Ties in x are broken uniformly at random (seeded via ``random_state``);
    ties in y are handled by the <=-count definition as written. The result
    lies in [-0.5, 1] and is invariant under strictly increasing transforms
    of either argument. Note the asymmetry: xi(x, y) != xi(y, x) in general.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D vectors of equal length")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")

    if np.unique(x).shape[0] < n:
        # random shuffle + stable sort = uniform tie-breaking among equal x
        perm = ensure_rng(random_state).permutation(n)
        order = perm[np.argsort(x[perm], kind="stable")]
    else:
        order = np.argsort(x, kind="stable")

    y_in_x_order = y[order]
    ranks = np.searchsorted(np.sort(y), y_in_x_order, side="right")
    jumps = np.abs(np.diff(ranks)).sum()
    return float(1.0 - 3.0 * float(jumps) / (n * n - 1.0))


def noise_threshold(n_samples: int, n_noisy: int) -> float:
    """Conjectured scale of the max rank correlation over pure-noise features.

    Returns sqrt(4 log(k) / (5 n)) for k noise features and n samples: the
    normalization under which the maximum stays bounded with high
    probability. Features scoring well above this value are very unlikely to
    be noise.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if n_noisy < 2:
        raise ValueError("n_noisy must be >= 2 (log k degenerates below that)")
    return math.sqrt(4.0 * math.log(n_noisy) / (5.0 * n_samples))


def xi_max(samples: SampleSet, indices, random_state: RandomState = None) -> float:
    """Maximum rank correlation against the output over the given feature columns."""
    idx = np.asarray(indices, dtype=int)
    if idx.size == 0:
        raise ValueError("index list is empty")
    if idx.min() < 0 or idx.max() >= samples.d_total:
        raise ValueError("feature index out of range")
    rng = ensure_rng(random_state)
    return max(
        xi_correlation(samples.features[:, i], samples.outputs, rng) for i in idx
    )


def gumbel_constants(k: int) -> tuple[float, float]:
    """Normalizing constants (a_k, b_k) for maxima of k standard Gaussians.

    a_k (M_k - b_k) converges in law to the standard Gumbel distribution
    F(x) = exp(-e^{-x}), with

        a_k = (2 log k)^(1/2)
        b_k = a_k - (log 4 pi + log log k) / (2 a_k).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    a = math.sqrt(2.0 * math.log(k))
    b = a - (math.log(4.0 * math.pi) + math.log(math.log(k))) / (2.0 * a)
    return a, b


@dataclass(frozen=True)
class XiEstimate:
    """One feature's rank correlation against the output."""

    feature_index: int
    xi: float
    n_samples: int


@dataclass(frozen=True)
class OlsFit:
    """Least-squares line with a normal-approximation 95% CI on the slope."""

    slope: float
    intercept: float
    slope_ci95: tuple[float, float]
    r2: float


def ols_fit(x, y) -> OlsFit:
    """Ordinary least squares of y on x.

    The 95% CI uses the textbook slope standard error with the normal
    quantile 1.96. Requires at least 3 points and non-constant x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D vectors of equal length")
    n = x.shape[0]
    if n < 3:
        raise ValueError("need at least 3 points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("x is constant")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    residuals = y - (intercept + slope * x)
    rss = float(residuals @ residuals)
    tss = float(np.sum((y - y.mean()) ** 2))
    se = math.sqrt(rss / (n - 2) / sxx)
    r2 = 1.0 if tss == 0.0 else 1.0 - rss / tss
    return OlsFit(slope, intercept, (slope - 1.96 * se, slope + 1.96 * se), r2)


@dataclass(frozen=True)
class SensitivityReport:
    """Per-feature rank correlations plus the retained subset.

    ``selected`` holds the 0-based indices of the strongest features in
    descending score order (ties resolved toward the lower index).
    ``threshold`` is the pure-noise scale for the discarded count, or NaN
    when fewer than 2 features were discarded. ``degenerate`` flags a
    constant output, for which every score is trivially 1 by the rank
    formula.
    """

    estimates: tuple[XiEstimate, ...]
    selected: tuple[int, ...]
    threshold: float
    feature_names: tuple[str, ...]
    degenerate: bool = False

    def to_frame(self) -> pd.DataFrame:
        mask = np.zeros(len(self.estimates), dtype=int)
        mask[list(self.selected)] = 1
        return pd.DataFrame(
            {
                "feature_name": list(self.feature_names),
                "feature_index": [e.feature_index for e in self.estimates],
                "xi_hat": [e.xi for e in self.estimates],
                "selected": mask,
                "threshold": self.threshold,
            }
        )


def _top_indices(xi_values: np.ndarray, d: int) -> np.ndarray:
    # stable sort on the negated scores keeps ties in original (lowest-index) order
    return np.argsort(-xi_values, kind="stable")[:d]


class XiFeatureSelector(SelectorMixin, BaseEstimator):
    """Keep the ``n_features`` columns with the largest rank correlation to y.

    Parameters
    ----------
    n_features : int
        Number of features to retain.
    random_state : int, Generator or None
        Only consulted to break ties among equal x values; continuous
        features never need it.

    Attributes
    ----------
    xi_values_ : ndarray of shape (n_features_in_,)
        Rank correlation of each column against y.
    selected_indices_ : ndarray of shape (n_features,)
        Retained column indices, strongest first.
    noise_threshold_ : float
        Pure-noise scale sqrt(4 log k / 5n) for the k discarded features
        (NaN when k < 2).
    degenerate_ : bool
        True when y is constant, in which case every score is 1.

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X = rng.uniform(size=(500, 10))
    >>> y = np.abs(4 * X[:, 3] - 2)
    >>> XiFeatureSelector(n_features=1).fit(X, y).selected_indices_
    array([3])
    """

    def __init__(self, n_features: int = 1, random_state: RandomState = None):
        self.n_features = n_features
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        n, d_total = X.shape
        if n < 2:
            raise ValueError("need at least 2 samples")
        if not 1 <= self.n_features <= d_total:
            raise ValueError(
                f"n_features must lie in [1, {d_total}], got {self.n_features}"
            )
        rng = ensure_rng(self.random_state)
        self.n_features_in_ = d_total
        self.xi_values_ = np.array(
            [xi_correlation(X[:, i], y, rng) for i in range(d_total)]
        )
        self.selected_indices_ = _top_indices(self.xi_values_, self.n_features)
        k_noisy = d_total - self.n_features
        self.noise_threshold_ = (
            noise_threshold(n, k_noisy) if k_noisy >= 2 else float("nan")
        )
        self.degenerate_ = bool(np.ptp(y) == 0.0)
        self.n_samples_ = n
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_indices_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_indices_] = True
        return mask

    def report(self, feature_names=None) -> SensitivityReport:
        """Full per-feature report for serialization."""
        check_is_fitted(self, "selected_indices_")
        if feature_names is None:
            feature_names = tuple(f"x{i + 1}" for i in range(self.n_features_in_))
        estimates = tuple(
            XiEstimate(i, float(v), self.n_samples_)
            for i, v in enumerate(self.xi_values_)
        )
        return SensitivityReport(
            estimates=estimates,
            selected=tuple(int(i) for i in self.selected_indices_),
            threshold=float(self.noise_threshold_),
            feature_names=tuple(feature_names),
            degenerate=self.degenerate_,
        )


def rank_features(samples: SampleSet, n_selected: int,
                  random_state: RandomState = None) -> SensitivityReport:
    """Score every feature of a SampleSet and keep the strongest ``n_selected``."""
    selector = XiFeatureSelector(n_features=n_selected, random_state=random_state)
    selector.fit(samples.features, samples.outputs)
    return selector.report(samples.feature_names)
