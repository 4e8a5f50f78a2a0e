"""Sequential sampling flows over a black box.

One iteration of the full flow: screen features on the data collected so
far, fit a GP surrogate on the retained features, draw a batch of candidate
points, and query the black box at the candidate whose posterior variance is
largest (the complement coordinates are drawn independently from the input
law). Ablations replace either ingredient: the feature screen can instead be
an oracle subset or a fresh random subset, and the acquisition can be a
plain independent draw, giving the six method variants used by the
experiment harness.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .blackbox import ReplayPool
from .data import SampleSet, stream_rng
from .sensitivity import _top_indices, xi_correlation
from .surrogate import (
    GaussianProcessSurrogate,
    HyperparameterGrid,
    default_kernel,
    fit_kernel,
)

SELECTIONS = ("gsa", "oracle", "random")
ACQUISITIONS = ("maxvar", "random")

#: method number -> (feature selection, choice of next sample)
METHODS = {
    1: ("gsa", "maxvar"),
    2: ("gsa", "random"),
    3: ("oracle", "maxvar"),
    4: ("oracle", "random"),
    5: ("random", "maxvar"),
    6: ("random", "random"),
}


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of one sampling flow run.

    ``refit_period`` controls how often (in iterations) features are
    reselected and kernel hyperparameters refit; 1 means every iteration.
    ``batch_size`` > 1 adds the top-scoring candidates all at once and is
    experimental: nearby candidates can chase the same variance peak.
    """

    n_initial: int
    n_final: int
    n_candidates: int
    n_selected: int
    selection: str = "gsa"
    acquisition: str = "maxvar"
    refit_period: int = 1
    batch_size: int = 1
    oracle_indices: tuple[int, ...] | None = None
    grid: HyperparameterGrid | None = None

    def __post_init__(self):
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")
        if self.n_final < self.n_initial:
            raise ValueError("n_final must be >= n_initial")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.n_selected < 1:
            raise ValueError("n_selected must be >= 1")
        if self.refit_period < 1:
            raise ValueError("refit_period must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.selection == "oracle":
            if self.oracle_indices is None:
                raise ValueError("oracle selection requires oracle_indices")
            if len(self.oracle_indices) != self.n_selected:
                raise ValueError("oracle_indices must have length n_selected")
            object.__setattr__(
                self, "oracle_indices", tuple(int(i) for i in self.oracle_indices)
            )

    @classmethod
    def for_method(cls, method: int, **kwargs) -> "FlowConfig":
        """Config for one of the six ablation methods."""
        if method not in METHODS:
            raise ValueError(f"method must be in {sorted(METHODS)}")
        selection, acquisition = METHODS[method]
        return cls(selection=selection, acquisition=acquisition, **kwargs)


@dataclass(frozen=True)
class IterationRecord:
    """One added sample: training size after the addition, the selection in
    force when the point was chosen, and the acquisition score (posterior
    variance, NaN for random choice)."""

    n_samples: int
    selected: tuple[int, ...]
    candidate_index: int | None
    output: float
    acquisition_score: float
    elapsed_s: float


@dataclass
class RunTrace:
    """Per-iteration log of a flow run, bit-reproducible from (config, seed).

    ``r2_at`` maps a budget to the held-out score once an evaluation pass has
    annotated the trace; budgets never scored serialize as NaN.
    """

    seed: int
    config: FlowConfig
    records: list[IterationRecord] = field(default_factory=list)
    r2_at: dict[int, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        # elapsed_s stays out: serialized traces must be byte-identical across
        # reruns of the same seed (it remains available on the records).
        return pd.DataFrame(
            {
                "n_samples": [r.n_samples for r in self.records],
                "selected": [";".join(map(str, r.selected)) for r in self.records],
                "candidate_index": [
                    -1 if r.candidate_index is None else r.candidate_index
                    for r in self.records
                ],
                "acquisition_score": [r.acquisition_score for r in self.records],
                "output": [r.output for r in self.records],
                "r2": [self.r2_at.get(r.n_samples, float("nan"))
                       for r in self.records],
            }
        )

    def selected_at(self, n_samples: int) -> tuple[int, ...]:
        """Feature subset in force when the training set had ``n_samples`` rows."""
        if not self.records:
            raise ValueError("empty trace")
        for record in self.records:
            if record.n_samples > n_samples:
                return record.selected
        return self.records[-1].selected


@dataclass(frozen=True)
class FlowResult:
    samples: SampleSet
    trace: RunTrace


def assemble_point(selected_values, selected_indices, complement_values,
                   complement_indices, d_total: int) -> np.ndarray:
    """Place selected and complement coordinate values back at their positions.

    The two index lists must partition range(d_total).
    """
    sel = np.asarray(selected_indices, dtype=int)
    comp = np.asarray(complement_indices, dtype=int)
    combined = np.concatenate([sel, comp])
    if len(np.unique(combined)) != d_total or combined.size != d_total:
        raise ValueError("index lists must partition the coordinate range")
    point = np.empty(d_total)
    point[sel] = np.asarray(selected_values, dtype=float)
    point[comp] = np.asarray(complement_values, dtype=float)
    return point


def max_variance_candidate(gp: GaussianProcessSurrogate,
                           candidates: np.ndarray) -> tuple[int, np.ndarray]:
    """Index of the candidate with largest posterior variance, plus all scores.

    Ties resolve to the lowest candidate index.
    """
    if candidates.shape[0] < 1:
        raise ValueError("need at least one candidate")
    _, var = gp.predict(candidates, return_var=True)
    return int(np.argmax(var)), var


def _select_features(config: FlowConfig, X: np.ndarray, y: np.ndarray,
                     rng) -> tuple[int, ...]:
    d_total = X.shape[1]
    if config.selection == "oracle":
        return config.oracle_indices
    if config.n_selected == d_total:
        # selection degenerates to the identity; skip the scoring pass
        return tuple(range(d_total))
    if config.selection == "random":
        picked = rng.choice(d_total, size=config.n_selected, replace=False)
        return tuple(int(i) for i in picked)
    if X.shape[0] < 2:
        raise ValueError(
            "gsa selection needs at least 2 samples; start with n_initial >= 2"
        )
    xi = np.array([xi_correlation(X[:, i], y, rng) for i in range(d_total)])
    return tuple(int(i) for i in _top_indices(xi, config.n_selected))


def _run(config: FlowConfig, box, seed: int, init: SampleSet | None,
         acquisition_at) -> FlowResult:
    pool_mode = isinstance(box, ReplayPool)
    if pool_mode:
        box = box.fresh()
    d_total = box.d_total

    if config.n_selected > d_total:
        raise ValueError("n_selected exceeds the box dimension")
    if config.oracle_indices is not None:
        if any(not 0 <= i < d_total for i in config.oracle_indices):
            raise ValueError("oracle_indices out of range")

    if init is None:
        init = box.draw_initial(config.n_initial, stream_rng(seed, "init"))
    if init.n != config.n_initial:
        raise ValueError(f"init has {init.n} rows, expected {config.n_initial}")
    if init.d_total != d_total:
        raise ValueError("init dimension does not match the box")

    rng_select = stream_rng(seed, "selection")
    rng_acquire = stream_rng(seed, "acquisition")
    rng_complement = stream_rng(seed, "complement")

    X = np.empty((config.n_final, d_total))
    y = np.empty(config.n_final)
    X[: init.n] = init.features
    y[: init.n] = init.outputs

    trace = RunTrace(seed=seed, config=config)
    selected: tuple[int, ...] = ()
    kernel = None
    n = config.n_initial
    step = 0
    while n < config.n_final:
        if pool_mode and box.n_remaining == 0:
            warnings.warn(
                f"pool exhausted at N={n}, before the budget of {config.n_final}"
            )
            break
        started = time.perf_counter()
        acquisition = acquisition_at(n)
        if step % config.refit_period == 0 or not selected:
            selected = _select_features(config, X[:n], y[:n], rng_select)
            kernel = None  # refit below if the acquisition needs it
        sel = np.asarray(selected, dtype=int)
        batch = min(config.batch_size, config.n_final - n)

        if acquisition == "maxvar":
            if kernel is None:
                if n >= 3:
                    kernel = fit_kernel(X[:n, sel], y[:n], config.grid)
                else:
                    kernel = default_kernel(X[:n, sel], config.grid)
            gp = GaussianProcessSurrogate(kernel=kernel).fit(X[:n, sel], y[:n])
            if pool_mode:
                rows = box.candidate_rows(config.n_candidates, rng_acquire)
                _, scores = max_variance_candidate(
                    gp, box.samples.features[rows][:, sel]
                )
                order = np.argsort(-scores, kind="stable")[:batch]
                for pos in order:
                    idx, x_new, y_new = box.take_row(int(rows[pos]))
                    X[n], y[n] = x_new, y_new
                    n += 1
                    trace.records.append(IterationRecord(
                        n, selected, idx, y_new, float(scores[pos]),
                        time.perf_counter() - started,
                    ))
            else:
                candidates = rng_acquire.uniform(size=(config.n_candidates, sel.size))
                _, scores = max_variance_candidate(gp, candidates)
                order = np.argsort(-scores, kind="stable")[:batch]
                comp = np.setdiff1d(np.arange(d_total), sel)
                for pos in order:
                    z = rng_complement.uniform(size=comp.size)
                    x_new = assemble_point(candidates[pos], sel, z, comp, d_total)
                    y_new = box.evaluate(x_new)
                    X[n], y[n] = x_new, y_new
                    n += 1
                    trace.records.append(IterationRecord(
                        n, selected, int(pos), y_new, float(scores[pos]),
                        time.perf_counter() - started,
                    ))
        else:
            for _ in range(batch):
                if pool_mode:
                    idx, x_new, y_new = box.draw_random(rng_acquire)
                else:
                    x_new = rng_acquire.uniform(size=d_total)
                    y_new = box.evaluate(x_new)
                    idx = None
                X[n], y[n] = x_new, y_new
                n += 1
                trace.records.append(IterationRecord(
                    n, selected, idx, y_new, float("nan"),
                    time.perf_counter() - started,
                ))
        step += 1

    samples = SampleSet(X[:n], y[:n], box.feature_names)
    return FlowResult(samples=samples, trace=trace)


def run_flow(config: FlowConfig, box, seed: int,
             init: SampleSet | None = None) -> FlowResult:
    """Run one sampling flow from n_initial to n_final samples.

    ``box`` is a :class:`GFunction`-style generator (evaluated at arbitrary
    points, with the complement coordinates drawn fresh) or a
    :class:`ReplayPool` (the chosen row supplies the full point and its
    output). A pool passed in is never mutated; the run works on a fresh
    copy. When ``init`` is None the initial batch is drawn from the box.
    """
    return _run(config, box, seed, init, lambda n: config.acquisition)


def run_hybrid_flow(config: FlowConfig, switch_budget: int, box, seed: int,
                    init: SampleSet | None = None) -> FlowResult:
    """Random acquisition until the training set reaches ``switch_budget``
    samples, then the configured acquisition until n_final, in one trace."""
    if not config.n_initial <= switch_budget <= config.n_final:
        raise ValueError("switch_budget must lie in [n_initial, n_final]")
    return _run(
        config, box, seed, init,
        lambda n: "random" if n < switch_budget else config.acquisition,
    )
