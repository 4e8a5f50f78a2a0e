"""Command-line entry point.

One subcommand per experiment plus the individual primitives, so everything
in the package can be scripted. Every run writes a ``manifest.txt`` beside
its outputs: a key=value echo of the fully resolved configuration (plus
version comments) that can be fed back through ``--config`` to reproduce the
run byte-for-byte.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
import sklearn

from . import __version__
from .blackbox import GFunction, ReplayPool
from .data import FLOAT_FORMAT, load_csv, save_csv, stream_rng
from .harness import (
    VALIDATION_PRESETS,
    compare_methods,
    default_budgets,
    null_max_study,
    scaling_fits_frame,
    scaling_regression,
    validation_study,
)
from .sampler import FlowConfig, run_flow
from .sensitivity import rank_features
from .surrogate import GaussianProcessSurrogate, dense_gp_oracle, random_gp_problem

COMPARISON_PRESETS = {
    # six-method ablation on the padded generator, desk scale
    "g4": dict(box=("gfun", 4, 50), n_initial=10, n_final=200,
               n_candidates=10_000, n_selected=4, runs=20, refit_period=5),
    "g10": dict(box=("gfun", 10, 100), n_initial=20, n_final=300,
                n_candidates=10_000, n_selected=10, runs=20, refit_period=5),
    # replay-pool ablation over a CSV table (needs --data/--output-column)
    "pool": dict(box=("pool",), n_initial=10, n_final=100,
                 n_candidates=1_000, n_selected=4, runs=10, refit_period=5),
}


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_manifest(out_dir: Path, subcommand: str, args: argparse.Namespace,
                    skip=("config", "out_dir")) -> None:
    lines = [
        f"# xisampler {__version__}",
        f"# numpy {np.__version__}, scipy {scipy.__version__}, "
        f"scikit-learn {sklearn.__version__}, pandas {pd.__version__}",
        f"subcommand={subcommand}",
    ]
    for key in sorted(vars(args)):
        if key in skip or key in ("func", "subcommand"):
            continue
        value = getattr(args, key)
        if value is None:
            continue
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _load_config(path: str) -> dict[str, str]:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line is not key=value: {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, subcommand: str,
                  values: dict[str, str]) -> None:
    "Turn config strings into typed defaults for the subcommand's parser."
    by_dest = {action.dest: action for action in parser._actions}
    defaults = {}
    for key, value in values.items():
        if key == "subcommand":
            if value != subcommand:
                raise ValueError(
                    f"config is for subcommand {value!r}, not {subcommand!r}"
                )
            continue
        action = by_dest.get(key)
        if action is None:
            raise ValueError(f"unknown config key {key!r}")
        convert = action.type or str
        defaults[key] = convert(value)
    parser.set_defaults(**defaults)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip() != "")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_box(args):
    if args.box == "gfun":
        return GFunction(args.d_significant, args.d_total)
    if args.data is None or args.output_column is None:
        raise ValueError("pool box needs --data and --output-column")
    return ReplayPool(load_csv(args.data, args.output_column))


# --------------------------------------------------------------------------
# subcommand implementations

def _cmd_xi(args) -> int:
    out = _out_dir(args)
    samples = load_csv(args.data, args.output_column)
    report = rank_features(samples, 1, stream_rng(args.seed, "xi"))
    frame = report.to_frame()[["feature_name", "feature_index", "xi_hat"]]
    _write_csv(frame, out / "xi.csv")
    _write_manifest(out, "xi", args)
    print(f"wrote {out / 'xi.csv'} ({samples.d_total} features, n={samples.n})")
    return 0


def _cmd_select(args) -> int:
    out = _out_dir(args)
    samples = load_csv(args.data, args.output_column)
    report = rank_features(samples, args.n_features, stream_rng(args.seed, "select"))
    _write_csv(report.to_frame(), out / "report.csv")
    _write_manifest(out, "select", args)
    kept = ",".join(str(i) for i in report.selected)
    print(f"wrote {out / 'report.csv'}; selected [{kept}]; "
          f"noise threshold {report.threshold:.6g}")
    return 0


def _cmd_gfun_gen(args) -> int:
    out = _out_dir(args)
    box = GFunction(args.d_significant, args.d_total)
    samples = box.draw_initial(args.n, stream_rng(args.seed, "gfun-gen"))
    save_csv(samples, out / "samples.csv", output_column=args.output_column)
    _write_manifest(out, "gfun-gen", args)
    print(f"wrote {out / 'samples.csv'} (n={samples.n}, D={samples.d_total})")
    return 0


def _cmd_run_flow(args) -> int:
    out = _out_dir(args)
    box = _make_box(args)
    kwargs = dict(
        n_initial=args.n_initial, n_final=args.n_final,
        n_candidates=args.n_candidates, n_selected=args.n_selected,
        refit_period=args.refit_period, batch_size=args.batch_size,
    )
    if args.method is not None:
        if args.method in (3, 4) and args.oracle_indices is None:
            raise ValueError("methods 3 and 4 need --oracle-indices")
        if args.method in (3, 4):
            kwargs["oracle_indices"] = args.oracle_indices
        config = FlowConfig.for_method(args.method, **kwargs)
    else:
        config = FlowConfig(selection=args.selection, acquisition=args.acquisition,
                            oracle_indices=args.oracle_indices, **kwargs)
    result = run_flow(config, box, args.seed)
    _write_csv(result.trace.to_frame(), out / "trace.csv")
    save_csv(result.samples, out / "samples.csv")
    _write_manifest(out, "run-flow", args)
    print(f"wrote {out / 'trace.csv'} and {out / 'samples.csv'} "
          f"(n={result.samples.n})")
    return 0


def _cmd_compare_methods(args) -> int:
    out = _out_dir(args)
    preset = dict(COMPARISON_PRESETS[args.preset])
    box_spec = preset.pop("box")
    if box_spec[0] == "gfun":
        d_sig = args.d_significant or box_spec[1]
        d_tot = args.d_total or box_spec[2]
        source = GFunction(d_sig, d_tot)
    else:
        if args.data is None or args.output_column is None:
            raise ValueError("pool preset needs --data and --output-column")
        source = load_csv(args.data, args.output_column)
    for key in ("n_initial", "n_final", "n_candidates", "n_selected",
                "runs", "refit_period"):
        value = getattr(args, key)
        if value is not None:
            preset[key] = value
    budgets = default_budgets(preset["n_initial"], preset["n_final"],
                              args.budget_step)
    comparison = compare_methods(
        source,
        methods=args.methods,
        n_runs=preset["runs"],
        seed=args.seed,
        n_initial=preset["n_initial"],
        n_final=preset["n_final"],
        n_candidates=preset["n_candidates"],
        n_selected=preset["n_selected"],
        refit_period=preset["refit_period"],
        budgets=budgets,
        n_test=args.n_test,
        n_jobs=args.threads,
    )
    _write_csv(comparison.curves, out / "comparison.csv")
    _write_csv(comparison.means, out / "comparison_mean.csv")
    _write_manifest(out, "compare-methods", args)
    if comparison.missing:
        print(f"warning: {len(comparison.missing)} failed runs excluded",
              file=sys.stderr)
    print(f"wrote {out / 'comparison.csv'} and {out / 'comparison_mean.csv'}")
    return 0


def _cmd_conjecture(args) -> int:
    out = _out_dir(args)
    mode = f"sweep-{args.sweep}"
    study = null_max_study(
        mode,
        n_max=args.n_max,
        k_max=args.k,
        n_batches=args.batches,
        seed=args.seed,
        n_grid=args.n_grid,
        k_grid=args.k_grid,
        n_jobs=args.threads,
    )
    fits = scaling_regression(study)
    _write_csv(study.records, out / "gamma.csv")
    _write_csv(scaling_fits_frame(fits), out / "ols.csv")
    _write_manifest(out, "conjecture", args)
    parts = []
    if fits.alpha is not None:
        parts.append(f"alpha={fits.alpha.slope:.4f} CI {fits.alpha.slope_ci95}")
    if fits.beta is not None:
        parts.append(f"beta={fits.beta.slope:.4f} CI {fits.beta.slope_ci95}")
    print(f"wrote {out / 'gamma.csv'} and {out / 'ols.csv'}; " + "; ".join(parts))
    return 0


def _cmd_gp_check(args) -> int:
    out = _out_dir(args)
    rng = stream_rng(args.seed, "gp-check")
    rows = []
    for problem in range(args.n_problems):
        X, y, kernel = random_gp_problem(rng)
        n, d = X.shape
        gp = GaussianProcessSurrogate(kernel=kernel).fit(X, y)
        mean, var = gp.predict(X, return_var=True)
        scale = max(float(np.sqrt(np.mean(y**2))), 1e-12)
        interp = float(np.max(np.abs(mean - y) / np.maximum(np.abs(y), scale)))
        far = np.full((1, d), 100.0)
        _, far_var = gp.predict(far, return_var=True)
        prior_gap = abs(float(far_var[0]) - kernel.signal_variance)
        Z = rng.uniform(size=(5, d))
        dense_mean, dense_var = dense_gp_oracle(gp, Z)
        mean_z, var_z = gp.predict(Z, return_var=True)
        oracle_gap = max(
            float(np.max(np.abs(mean_z - dense_mean))),
            float(np.max(np.abs(var_z - np.maximum(dense_var, 0.0)))),
        )
        ok = interp < 1e-6 and np.max(var) < 1e-6 and prior_gap < 1e-6 and oracle_gap < 1e-8
        rows.append((problem, n, d, interp, float(np.max(var)), prior_gap,
                     oracle_gap, int(ok)))
    frame = pd.DataFrame(rows, columns=[
        "problem", "n", "d", "interpolation_gap", "train_variance",
        "prior_gap", "oracle_gap", "ok",
    ])
    _write_csv(frame, out / "gp_check.csv")
    _write_manifest(out, "gp-check", args)
    n_ok = int(frame["ok"].sum())
    for row in frame.itertuples(index=False):
        status = "pass" if row.ok else "FAIL"
        print(f"problem {row.problem}: n={row.n} d={row.d} "
              f"interp={row.interpolation_gap:.2e} oracle={row.oracle_gap:.2e} "
              f"{status}")
    print(f"wrote {out / 'gp_check.csv'}: {n_ok}/{len(frame)} checks passed")
    return 0 if n_ok == len(frame) else 1


def _cmd_appendix(args) -> int:
    out = _out_dir(args)
    comparison = validation_study(
        args.preset,
        seed=args.seed,
        n_runs=args.runs,
        n_final=args.n_final,
        n_candidates=args.n_candidates,
        n_test=args.n_test,
        refit_period=args.refit_period,
        n_jobs=args.threads,
    )
    _write_csv(comparison.curves, out / "comparison.csv")
    _write_csv(comparison.means, out / "comparison_mean.csv")
    _write_manifest(out, "appendix", args)
    print(f"wrote {out / 'comparison.csv'} and {out / 'comparison_mean.csv'}")
    return 0


# --------------------------------------------------------------------------
# parser wiring

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="master seed; all streams derive from it")
    common.add_argument("--out-dir", type=str,
                        default=os.environ.get("XISAMPLER_OUT_DIR", "out"),
                        help="output directory (default: $XISAMPLER_OUT_DIR or ./out)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker cap for parallel runs")
    common.add_argument("--config", type=str, default=None,
                        help="key=value file of defaults (a manifest works)")

    parser = argparse.ArgumentParser(
        prog="xisampler",
        description="Rank-based feature screening and variance-driven active sampling.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("xi", parents=[common],
                       help="per-feature rank correlation against one output column")
    p.add_argument("--data", required=True)
    p.add_argument("--output-column", "--output", required=True)
    p.set_defaults(func=_cmd_xi)

    p = sub.add_parser("select", parents=[common],
                       help="rank features and keep the strongest subset")
    p.add_argument("--data", required=True)
    p.add_argument("--output-column", "--output", required=True)
    p.add_argument("--n-features", "--d", type=int, required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("gfun-gen", parents=[common],
                       help="generate a padded product-benchmark table")
    p.add_argument("--d-significant", "--d", type=int, required=True)
    p.add_argument("--d-total", "--D", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output-column", default="y")
    p.set_defaults(func=_cmd_gfun_gen)

    p = sub.add_parser("run-flow", parents=[common],
                       help="run one sampling flow and dump its trace")
    p.add_argument("--box", choices=("gfun", "pool"), default="gfun")
    p.add_argument("--d-significant", type=int, default=4)
    p.add_argument("--d-total", type=int, default=50)
    p.add_argument("--data", default=None)
    p.add_argument("--output-column", default=None)
    p.add_argument("--method", type=int, choices=sorted(range(1, 7)), default=None,
                   help="ablation method number; overrides selection/acquisition")
    p.add_argument("--selection", choices=("gsa", "oracle", "random"), default="gsa")
    p.add_argument("--acquisition", choices=("maxvar", "random"), default="maxvar")
    p.add_argument("--n-initial", type=int, default=10)
    p.add_argument("--n-final", type=int, default=100)
    p.add_argument("--n-candidates", "--m", type=int, default=1000)
    p.add_argument("--n-selected", type=int, default=4)
    p.add_argument("--refit-period", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--oracle-indices", type=_int_list, default=None,
                   help="comma-separated 0-based indices for oracle selection")
    p.set_defaults(func=_cmd_run_flow)

    p = sub.add_parser("compare-methods", parents=[common],
                       help="six-method ablation with per-run R2 curves")
    p.add_argument("--preset", choices=sorted(COMPARISON_PRESETS), default="g4")
    p.add_argument("--methods", type=_int_list, default=(1, 2, 3, 4, 5, 6))
    p.add_argument("--runs", "--P", type=int, default=None)
    p.add_argument("--d-significant", type=int, default=None)
    p.add_argument("--d-total", type=int, default=None)
    p.add_argument("--n-initial", type=int, default=None)
    p.add_argument("--n-final", type=int, default=None)
    p.add_argument("--n-candidates", "--m", type=int, default=None)
    p.add_argument("--n-selected", type=int, default=None)
    p.add_argument("--refit-period", type=int, default=None)
    p.add_argument("--budget-step", type=int, default=10)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--data", default=None)
    p.add_argument("--output-column", default=None)
    p.set_defaults(func=_cmd_compare_methods)

    p = sub.add_parser("conjecture", parents=[common],
                       help="null-maximum scaling study (gamma.csv + ols.csv)")
    p.add_argument("--sweep", choices=("N", "k"), required=True)
    p.add_argument("--n-max", "--Nmax", type=int, required=True)
    p.add_argument("--k", type=int, required=True,
                   help="number of noise features (k_max for --sweep k)")
    p.add_argument("--batches", "--P", type=int, required=True)
    p.add_argument("--n-grid", type=_int_list, default=None)
    p.add_argument("--k-grid", type=_int_list, default=None)
    p.set_defaults(func=_cmd_conjecture)

    p = sub.add_parser("gp-check", parents=[common],
                       help="surrogate self-diagnostics against a dense-inverse oracle")
    p.add_argument("--n-problems", type=int, default=20)
    p.set_defaults(func=_cmd_gp_check)

    p = sub.add_parser("appendix", parents=[common],
                       help="active vs random vs hybrid validation runs")
    p.add_argument("--preset", choices=sorted(VALIDATION_PRESETS), required=True)
    p.add_argument("--runs", "--P", type=int, default=None)
    p.add_argument("--n-final", type=int, default=None)
    p.add_argument("--n-candidates", "--m", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--refit-period", type=int, default=1)
    p.set_defaults(func=_cmd_appendix)

    return parser


def dispatch(argv=None) -> int:
    """Parse argv, run the subcommand, return an exit code."""
    parser = _build_parser()
    args, _ = parser.parse_known_args(argv)
    try:
        if getattr(args, "config", None):
            # reparse with the config file's values as typed defaults
            sub_parser = None
            for action in parser._actions:
                if isinstance(action, argparse._SubParsersAction):
                    sub_parser = action.choices[args.subcommand]
            _apply_config(sub_parser, args.subcommand, _load_config(args.config))
            remaining = list(argv) if argv is not None else sys.argv[1:]
            args = parser.parse_args(remaining)
        else:
            args = parser.parse_args(argv)
        return args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
