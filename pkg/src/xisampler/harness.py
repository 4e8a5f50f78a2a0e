"""Experiment harness: scoring, the six-method ablation, null-maximum
scaling studies, and the low-dimensional active-vs-random validation runs.

Everything here emits tidy long-format tables (one row per observation) so
plotting stays external. All experiments are driven by a single master seed
and are embarrassingly parallel over runs, with one independent named RNG
stream per run component.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .blackbox import GFunction, ReplayPool
from .data import SampleSet, random_split, stream_rng
from .sampler import FlowConfig, FlowResult, run_flow, run_hybrid_flow
from .sensitivity import (
    OlsFit,
    gumbel_constants,
    noise_threshold,
    ols_fit,
    rank_features,
    xi_correlation,
)
from .surrogate import GaussianProcessSurrogate, HyperparameterGrid


def r2_score(y_test, predictions) -> float:
    """Determination score: 1 - sum (y - yhat)^2 / sum (y - ybar)^2.

    ``ybar`` is the mean of ``y_test``. Raises on a constant ``y_test``
    (the denominator vanishes).
    """
    y_test = np.asarray(y_test, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if y_test.ndim != 1 or y_test.shape != predictions.shape:
        raise ValueError("y_test and predictions must be 1-D vectors of equal length")
    if y_test.shape[0] == 0:
        raise ValueError("empty vectors")
    total = float(np.sum((y_test - y_test.mean()) ** 2))
    if total == 0.0:
        raise ValueError("y_test is constant: determination score undefined")
    residual = float(np.sum((y_test - predictions) ** 2))
    return 1.0 - residual / total


def default_budgets(n_initial: int, n_final: int, step: int = 10) -> tuple[int, ...]:
    """Evaluation grid: every ``step`` samples, plus both endpoints."""
    inner = [n for n in range(step, n_final, step) if n > n_initial]
    return tuple(dict.fromkeys([n_initial, *inner, n_final]))


def score_flow(result: FlowResult, budgets, test: SampleSet,
               grid: HyperparameterGrid | None = None) -> list[tuple[int, float]]:
    """R^2 of a GP refit at each budget, on the features selected there.

    At budget N the GP trains on the first N collected samples restricted to
    the feature subset that was in force when the flow trained on those N
    samples, and is scored on the held-out set. Scores are also annotated
    onto the trace (``trace.r2_at``).
    """
    rows = []
    for n in budgets:
        sel = np.asarray(result.trace.selected_at(n), dtype=int)
        prefix = result.samples.head(n)
        gp = GaussianProcessSurrogate(optimize=True, grid=grid).fit(
            prefix.features[:, sel], prefix.outputs
        )
        pred = gp.predict(test.features[:, sel])
        rows.append((int(n), r2_score(test.outputs, pred)))
    result.trace.r2_at.update(rows)
    return rows


@dataclass
class MethodComparison:
    """Per-run R^2 curves and their per-method means on one budget grid."""

    curves: pd.DataFrame  # columns: method, run, N, r2
    budgets: tuple[int, ...]
    n_runs: int
    missing: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def means(self) -> pd.DataFrame:
        out = (
            self.curves.groupby(["method", "N"], as_index=False)
            .agg(r2_mean=("r2", "mean"), n_runs=("r2", "size"))
        )
        return out.sort_values(["method", "N"], ignore_index=True)

    def mean_at(self, method, n: int) -> float:
        sub = self.curves[(self.curves["method"] == method) & (self.curves["N"] == n)]
        if sub.empty:
            raise KeyError(f"no runs recorded for method {method!r} at N={n}")
        return float(sub["r2"].mean())


def _oracle_indices_for(source, n_selected: int, seed: int) -> tuple[int, ...]:
    """Ground truth for a synthetic generator; a whole-dataset screening pass
    for a replay table."""
    if isinstance(source, GFunction):
        if source.d_significant != n_selected:
            raise ValueError(
                "oracle selection on the synthetic generator needs "
                f"n_selected == {source.d_significant}"
            )
        return source.significant_indices
    report = rank_features(source, n_selected, stream_rng(seed, "oracle"))
    return report.selected


def _comparison_run(source, method, run: int, seed: int, flow_kwargs: dict,
                    budgets, n_test: int, split_ratio: float,
                    grid) -> list[tuple[str, int, int, float]]:
    if isinstance(source, SampleSet):
        split = random_split(source, split_ratio, stream_rng(seed, "run", run, "split"))
        box = ReplayPool(split.train)
        test = split.test
    else:
        box = source
        test = source.draw_initial(n_test, stream_rng(seed, "run", run, "test"))
    init = box.draw_initial(flow_kwargs["n_initial"], stream_rng(seed, "run", run, "init"))
    if isinstance(method, int):
        config = FlowConfig.for_method(method, **flow_kwargs)
    else:
        config = method
    flow_seed = int(stream_rng(seed, "run", run, "flow", str(method)).integers(2**63))
    result = run_flow(config, box, flow_seed, init=init)
    scored = score_flow(result, budgets, test, grid)
    return [(str(method), run, n, r2) for n, r2 in scored]


def compare_methods(source, *, methods=(1, 2, 3, 4, 5, 6), n_runs: int = 20,
                    seed: int = 0, n_initial: int, n_final: int,
                    n_candidates: int, n_selected: int,
                    oracle_indices=None, budgets=None, n_test: int = 1000,
                    split_ratio: float = 0.75, refit_period: int = 1,
                    grid: HyperparameterGrid | None = None,
                    n_jobs: int = 1) -> MethodComparison:
    """Run the method ablation: every method, ``n_runs`` independent runs each.

    ``source`` is either a generator box (fresh test points are drawn from
    it) or a SampleSet (each run makes its own train/test split at
    ``split_ratio`` and replays the training part as a pool). Within a run
    the initial batch and the test set are shared across methods, so methods
    differing in one ingredient diverge only through that ingredient.

    Failed runs are reported in ``missing`` and excluded from means, never
    imputed.
    """
    budgets = tuple(budgets) if budgets else default_budgets(n_initial, n_final)
    needs_oracle = any(isinstance(m, int) and m in (3, 4) for m in methods)
    if needs_oracle and oracle_indices is None:
        oracle_source = source
        oracle_indices = _oracle_indices_for(oracle_source, n_selected, seed)
    flow_kwargs = dict(
        n_initial=n_initial, n_final=n_final, n_candidates=n_candidates,
        n_selected=n_selected, refit_period=refit_period, grid=grid,
    )

    def job(method, run):
        kwargs = dict(flow_kwargs)
        if isinstance(method, int) and method in (3, 4):
            kwargs["oracle_indices"] = oracle_indices
        try:
            return _comparison_run(
                source, method, run, seed, kwargs, budgets, n_test,
                split_ratio, grid,
            ), None
        except Exception as exc:  # failed run: report, never average
            return [], (str(method), run, f"{type(exc).__name__}: {exc}")

    jobs = [(m, r) for m in methods for r in range(n_runs)]
    outputs = Parallel(n_jobs=n_jobs)(delayed(job)(m, r) for m, r in jobs)

    rows, missing = [], []
    for rows_mr, failure in outputs:
        rows.extend(rows_mr)
        if failure is not None:
            missing.append(failure)
            warnings.warn(f"run failed and was excluded: {failure}")
    curves = pd.DataFrame(rows, columns=["method", "run", "N", "r2"])
    curves = curves.sort_values(["method", "run", "N"], ignore_index=True)
    return MethodComparison(curves=curves, budgets=budgets, n_runs=n_runs,
                            missing=missing)


# ---------------------------------------------------------------------------
# Null-maximum scaling studies

@dataclass
class NullMaxStudy:
    """Samples of the normalized maximum of rank correlations under the null.

    Records hold xi_max over k mutually independent features against an
    independent output, together with gamma = xi_max / sqrt(4 log k / 5 N).
    ``mode`` is "sweep-N" (k fixed, prefixes in N) or "sweep-k" (N fixed,
    prefixes in k).
    """

    mode: str
    records: pd.DataFrame  # columns: mode, batch, N, k, xi_max, gamma
    seed: int


def null_max_study(mode: str, *, n_max: int, k_max: int, n_batches: int,
                   seed: int = 0, n_grid=None, k_grid=None,
                   n_jobs: int = 1) -> NullMaxStudy:
    """Monte-Carlo study of max_i xi(X_i, Y) for pure-noise features.

    sweep-N: each batch draws (n_max, k_max) inputs plus an independent
    output and evaluates the max rank correlation on every prefix length in
    ``n_grid`` (default: 8 log-spaced values), with all k_max features.
    sweep-k: evaluates on feature prefixes in ``k_grid`` (default: 8
    log-spaced values) with all n_max samples.
    """
    if mode not in ("sweep-N", "sweep-k"):
        raise ValueError("mode must be 'sweep-N' or 'sweep-k'")
    if n_max < 10 or k_max < 2 or n_batches < 1:
        raise ValueError("need n_max >= 10, k_max >= 2, n_batches >= 1")
    if mode == "sweep-N":
        if n_grid is None:
            n_grid = np.unique(np.geomspace(10, n_max, 8).astype(int))
        n_grid = sorted(int(n) for n in n_grid)
        if max(n_grid) > n_max:
            raise ValueError("n_grid exceeds n_max")
    else:
        if k_grid is None:
            k_grid = np.unique(np.geomspace(2, k_max, 8).astype(int))
        k_grid = sorted(int(k) for k in k_grid)
        if max(k_grid) > k_max:
            raise ValueError("k_grid exceeds k_max")

    def batch_rows(b: int) -> list[tuple]:
        rng = stream_rng(seed, "batch", b)
        X = rng.uniform(size=(n_max, k_max))
        Y = rng.uniform(size=n_max)
        rows = []
        if mode == "sweep-N":
            for n in n_grid:
                xm = max(xi_correlation(X[:n, i], Y[:n]) for i in range(k_max))
                rows.append((mode, b, n, k_max, xm, xm / noise_threshold(n, k_max)))
        else:
            xis = np.array([xi_correlation(X[:, i], Y) for i in range(k_max)])
            running_max = np.maximum.accumulate(xis)
            for k in k_grid:
                xm = float(running_max[k - 1])
                rows.append((mode, b, n_max, k, xm, xm / noise_threshold(n_max, k)))
        return rows

    chunks = Parallel(n_jobs=n_jobs)(delayed(batch_rows)(b) for b in range(n_batches))
    records = pd.DataFrame(
        [row for chunk in chunks for row in chunk],
        columns=["mode", "batch", "N", "k", "xi_max", "gamma"],
    )
    return NullMaxStudy(mode=mode, records=records, seed=seed)


@dataclass(frozen=True)
class ScalingFits:
    """OLS fits of the log-linear scaling of the null maximum.

    ``alpha`` is minus the slope of log xi_max against log(5N/2); ``beta``
    is the slope against log(2 log k). A fit is None when the study lacks
    variation on that axis (fewer than 3 distinct values). Records with
    non-positive xi_max are dropped before taking logs; ``n_dropped`` counts
    them.
    """

    alpha: OlsFit | None
    beta: OlsFit | None
    n_dropped: int


def scaling_regression(study: NullMaxStudy) -> ScalingFits:
    """Estimate both scaling exponents from a study's records."""
    records = study.records
    positive = records[records["xi_max"] > 0]
    n_dropped = len(records) - len(positive)

    alpha = None
    if positive["N"].nunique() >= 3:
        fit = ols_fit(np.log(2.5 * positive["N"].to_numpy()),
                      np.log(positive["xi_max"].to_numpy()))
        lo, hi = fit.slope_ci95
        alpha = OlsFit(-fit.slope, fit.intercept, (-hi, -lo), fit.r2)

    beta = None
    if positive["k"].nunique() >= 3:
        beta = ols_fit(np.log(2.0 * np.log(positive["k"].to_numpy())),
                       np.log(positive["xi_max"].to_numpy()))
    return ScalingFits(alpha=alpha, beta=beta, n_dropped=n_dropped)


def scaling_fits_frame(fits: ScalingFits) -> pd.DataFrame:
    """Long-format table of the available fits (target, slope, lo, hi, r2)."""
    rows = []
    if fits.alpha is not None:
        rows.append(("alpha", fits.alpha.slope, *fits.alpha.slope_ci95, fits.alpha.r2))
    if fits.beta is not None:
        rows.append(("beta", fits.beta.slope, *fits.beta.slope_ci95, fits.beta.r2))
    return pd.DataFrame(rows, columns=["target", "slope", "lo", "hi", "r2"])


def normalized_gaussian_maxima(k: int, n_replicates: int, rng) -> np.ndarray:
    """a_k (M_k - b_k) for n_replicates maxima of k standard Gaussians.

    The limit law is standard Gumbel, F(x) = exp(-e^-x).
    """
    a, b = gumbel_constants(k)
    maxima = np.array([rng.standard_normal(k).max() for _ in range(n_replicates)])
    return a * (maxima - b)


# ---------------------------------------------------------------------------
# Low-dimensional validation presets (active vs random vs hybrid)

VALIDATION_PRESETS = {
    "g4-low-dim": dict(
        d_significant=4, d_total=4, n_initial=1, n_final=200,
        n_candidates=100_000, n_test=1000, n_runs=50,
        flows=("active", "random"),
    ),
    "g4-hybrid": dict(
        d_significant=4, d_total=4, n_initial=1, n_final=200,
        n_candidates=100_000, n_test=1000, n_runs=50,
        flows=("active", "random", "hybrid-20", "hybrid-40"),
    ),
}


def _flow_switch_budget(flow: str) -> int | None:
    if flow.startswith("hybrid-"):
        return int(flow.split("-", 1)[1])
    return None


def validation_study(preset: str, *, seed: int = 0, n_runs=None, n_final=None,
                     n_candidates=None, n_test=None, budgets=None, flows=None,
                     refit_period: int = 1, n_jobs: int = 1) -> MethodComparison:
    """Active vs random (vs hybrid) sampling on the low-dimensional generator.

    A preset names the full-scale parameter set; the keyword overrides scale
    it down (or restrict ``flows``) without changing the output schema.
    Hybrid flows sample randomly up to their switch budget and by maximal
    variance afterwards.
    """
    if preset not in VALIDATION_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(VALIDATION_PRESETS)}")
    params = dict(VALIDATION_PRESETS[preset])
    if n_runs is not None:
        params["n_runs"] = n_runs
    if n_final is not None:
        params["n_final"] = n_final
    if n_candidates is not None:
        params["n_candidates"] = n_candidates
    if n_test is not None:
        params["n_test"] = n_test
    if flows is not None:
        unknown = set(flows) - set(params["flows"])
        if unknown:
            raise ValueError(f"flows {sorted(unknown)} not part of preset {preset!r}")
        params["flows"] = tuple(flows)

    for flow in params["flows"]:
        switch = _flow_switch_budget(flow)
        if switch is not None and switch > params["n_final"]:
            raise ValueError(
                f"n_final={params['n_final']} is below the {flow} switch budget"
            )
    box = GFunction(params["d_significant"], params["d_total"])
    budgets = tuple(budgets) if budgets else default_budgets(
        params["n_initial"], params["n_final"]
    )
    base = dict(
        n_initial=params["n_initial"], n_final=params["n_final"],
        n_candidates=params["n_candidates"], n_selected=params["d_total"],
        selection="oracle", oracle_indices=tuple(range(params["d_total"])),
        refit_period=refit_period,
    )

    def job(flow: str, run: int):
        init = box.draw_initial(params["n_initial"], stream_rng(seed, "run", run, "init"))
        test = box.draw_initial(params["n_test"], stream_rng(seed, "run", run, "test"))
        flow_seed = int(stream_rng(seed, "run", run, "flow", flow).integers(2**63))
        config = FlowConfig(
            acquisition="random" if flow == "random" else "maxvar", **base
        )
        switch = _flow_switch_budget(flow)
        if switch is None:
            result = run_flow(config, box, flow_seed, init=init)
        else:
            result = run_hybrid_flow(config, switch, box, flow_seed, init=init)
        return [(flow, run, n, r2) for n, r2 in score_flow(result, budgets, test)]

    jobs = [(f, r) for f in params["flows"] for r in range(params["n_runs"])]
    chunks = Parallel(n_jobs=n_jobs)(delayed(job)(f, r) for f, r in jobs)
    curves = pd.DataFrame(
        [row for chunk in chunks for row in chunk],
        columns=["method", "run", "N", "r2"],
    ).sort_values(["method", "run", "N"], ignore_index=True)
    return MethodComparison(curves=curves, budgets=budgets,
                            n_runs=params["n_runs"])
