"""Black-box sources of (x, y) pairs.

Two kinds are supported. :class:`GFunction` is an analytic generator that can
be evaluated at arbitrary points of [0,1]^D, padded with fictitious
coordinates that carry no signal. :class:`ReplayPool` replays a finite table
of pre-computed rows, each queryable at most once per run; it stands in for
expensive simulators whose raw code is not available.
"""

from __future__ import annotations

import warnings

import numpy as np

from .data import SampleSet, ensure_rng


class GFunction:
    """Product benchmark on [0,1]^D: y = prod_{i<d} |4 x_i - 2|.

    Only the first ``d_significant`` coordinates influence the output; the
    remaining ``d_total - d_significant`` coordinates are fictitious noise
    attributes that pad the dimensionality. Inputs are uniform i.i.d. on
    [0,1]^D.
    """

    def __init__(self, d_significant: int, d_total: int | None = None):
        d_total = d_significant if d_total is None else d_total
        if d_significant < 1:
            raise ValueError("d_significant must be >= 1")
        if d_total < d_significant:
            raise ValueError("d_total must be >= d_significant")
        self.d_significant = int(d_significant)
        self.d_total = int(d_total)

    @property
    def significant_indices(self) -> tuple[int, ...]:
        """0-based indices of the coordinates that drive the output."""
        return tuple(range(self.d_significant))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.d_total))

    def _check_points(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d_total:
            raise ValueError(f"expected dimension {self.d_total}, got {X.shape[1]}")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("coordinates must lie in [0, 1]")
        return X

    def evaluate(self, x) -> float:
        """Output at a single point of [0,1]^D."""
        return float(self.evaluate_batch(np.atleast_2d(x))[0])

    def evaluate_batch(self, X) -> np.ndarray:
        X = self._check_points(X)
        return np.abs(4.0 * X[:, : self.d_significant] - 2.0).prod(axis=1)

    def draw_inputs(self, n: int, rng) -> np.ndarray:
        """n i.i.d. uniform points on [0,1]^D (significant and noise coordinates alike)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return ensure_rng(rng).uniform(size=(n, self.d_total))

    def draw_initial(self, n: int, rng) -> SampleSet:
        """Initial batch: uniform inputs with their evaluated outputs."""
        X = self.draw_inputs(n, rng)
        return SampleSet(X, self.evaluate_batch(X), self.feature_names)


class ReplayPool:
    """Finite table of pre-computed rows, each queryable at most once per run.

    One flow run owns one pool exclusively; use :meth:`fresh` to get an
    unconsumed copy over the same table.
    """

    def __init__(self, samples: SampleSet):
        self.samples = samples
        self._consumed = np.zeros(samples.n, dtype=bool)

    @property
    def d_total(self) -> int:
        return self.samples.d_total

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.samples.feature_names

    @property
    def n_remaining(self) -> int:
        return int((~self._consumed).sum())

    def fresh(self) -> "ReplayPool":
        return ReplayPool(self.samples)

    def consumed_indices(self) -> np.ndarray:
        return np.flatnonzero(self._consumed)

    def _row(self, index: int) -> tuple[int, np.ndarray, float]:
        self._consumed[index] = True
        return int(index), self.samples.features[index], float(self.samples.outputs[index])

    def take_row(self, index: int) -> tuple[int, np.ndarray, float]:
        """Consume one specific unconsumed row."""
        if self._consumed[index]:
            raise ValueError(f"row {index} was already consumed")
        return self._row(int(index))

    def draw_random(self, rng) -> tuple[int, np.ndarray, float]:
        """Uniform draw over unconsumed rows; marks the row consumed."""
        free = np.flatnonzero(~self._consumed)
        if free.size == 0:
            raise RuntimeError("pool exhausted")
        return self._row(int(ensure_rng(rng).choice(free)))

    def candidate_rows(self, m: int, rng) -> np.ndarray:
        """Up to m distinct unconsumed row indices, uniformly chosen, sorted ascending.

        Warns (and returns all remaining rows) when fewer than m are left.
        """
        if m < 1:
            raise ValueError("m must be >= 1")
        free = np.flatnonzero(~self._consumed)
        if free.size == 0:
            raise RuntimeError("pool exhausted")
        if free.size <= m:
            if free.size < m:
                warnings.warn(
                    f"pool has only {free.size} unconsumed rows, fewer than the "
                    f"{m} candidates requested; using all of them"
                )
            return free
        picked = ensure_rng(rng).choice(free, size=m, replace=False)
        return np.sort(picked)

    def draw_among(self, candidate_indices, scorer) -> tuple[int, np.ndarray, float]:
        """Consume the candidate maximizing ``scorer``; ties go to the lowest row index.

        ``scorer`` maps the candidates' feature matrix to a score vector.
        """
        idx = np.sort(np.asarray(candidate_indices, dtype=int))
        if idx.size == 0:
            raise ValueError("candidate list is empty")
        if self._consumed[idx].any():
            raise ValueError("candidate list contains already-consumed rows")
        scores = np.asarray(scorer(self.samples.features[idx]), dtype=float)
        if scores.shape != (idx.size,):
            raise ValueError("scorer must return one score per candidate")
        return self._row(int(idx[int(np.argmax(scores))]))

    def draw_initial(self, n: int, rng) -> SampleSet:
        """Initial batch: n uniform unconsumed rows, consumed in index order."""
        free = np.flatnonzero(~self._consumed)
        if free.size < n:
            raise RuntimeError(f"pool has {free.size} rows left, {n} requested")
        picked = np.sort(ensure_rng(rng).choice(free, size=n, replace=False))
        self._consumed[picked] = True
        return self.samples.take(picked)
