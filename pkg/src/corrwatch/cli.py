"""Command-line front end: detect / simulate / fit / bench / density.

Inputs are flat files (CSV rows of p values, or NDJSON records with an
"x" array); outputs are NDJSON event streams and plot-ready CSV/JSON.
Every subcommand is deterministic given its flags, input files and --seed.

Exit codes: 0 = completed without alarm, 2 = alarm raised, 1 = error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import bench, detectors, simulation
from .density import MaxCorrModel
from .stats_core import max_magnitude_correlation

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ALARM = 2

DETECT_SCHEMA = "corrwatch.detect/1"
SIMULATE_SCHEMA = "corrwatch.simulate/1"


def _parse_csv_rows(path: str, p: int | None):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        first_data_line = True
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            fields = [f.strip() for f in text.split(",")]
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if first_data_line:
                    first_data_line = False  # header row, skipped
                    continue
                raise ValueError(f"{path}:{lineno}: malformed row: {text!r}")
            first_data_line = False
            if p is None:
                p = len(values)
            if len(values) != p:
                raise ValueError(f"{path}:{lineno}: expected {p} values, got {len(values)}")
            if not all(math.isfinite(x) for x in values):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    return rows, p


def _parse_ndjson_rows(path: str, p: int | None):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}")
            if not isinstance(record, dict) or "x" not in record:
                raise ValueError(f'{path}:{lineno}: record must be an object with an "x" array')
            values = record["x"]
            if not isinstance(values, list):
                raise ValueError(f'{path}:{lineno}: "x" must be an array')
            if p is None:
                p = len(values)
            if len(values) != p:
                raise ValueError(f"{path}:{lineno}: expected {p} values, got {len(values)}")
            try:
                values = [float(x) for x in values]
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: non-numeric entry")
            if not all(math.isfinite(x) for x in values):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    return rows, p


def ingest(path: str, fmt: str, n: int, p: int | None = None) -> np.ndarray:
    """Read observation rows and group them into non-overlapping n-row batches.

    Returns a (count, n, p) array.  A trailing partial batch is dropped
    with a warning.  CSV may carry one header row (auto-detected as a
    non-numeric first line); NDJSON records hold the vector under "x".
    """
    if fmt == "csv":
        rows, p = _parse_csv_rows(path, p)
    elif fmt == "ndjson":
        rows, p = _parse_ndjson_rows(path, p)
    else:
        raise ValueError(f"unknown format {fmt!r}; use csv or ndjson")
    count = len(rows) // n
    dropped = len(rows) - count * n
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} trailing rows (partial batch)")
    if count == 0:
        return np.empty((0, n, p if p else 0))
    return np.asarray(rows[: count * n], dtype=float).reshape(count, n, p)


def _resolve_threshold(args) -> float:
    given = [x for x in (args.beta, args.threshold) if x is not None]
    if len(given) != 1:
        raise ValueError("provide exactly one of --beta or --threshold")
    if args.beta is not None:
        return detectors.threshold_from_beta(args.beta)
    if not args.threshold > 0.0:
        raise ValueError("--threshold must be positive")
    return float(args.threshold)


def _build_spec(args, model: MaxCorrModel, threshold: float) -> detectors.DetectorSpec:
    if args.detector == "robust":
        return detectors.robust_spec(model, args.jbar, threshold)
    if args.detector == "nonrobust":
        if args.j1 is None:
            raise ValueError("--j1 is required for the nonrobust detector")
        return detectors.nonrobust_spec(model, args.j1, threshold)
    if args.m0 is None or args.m1 is None:
        raise ValueError("--m0 and --m1 are required for the nonparametric detector")
    return detectors.nonparametric_spec(args.m0, args.m1, threshold)


def _open_out(path):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def _cmd_detect(args) -> int:
    if args.n < 5:
        raise ValueError("--n must be >= 5 for the density family")
    batches = ingest(args.input, args.format, args.n, args.p)
    if batches.shape[0] == 0:
        fh = _open_out(args.out)
        _close_out(fh)
        return EXIT_OK
    p = batches.shape[2]
    model = MaxCorrModel(n=args.n, p=p)
    a = _resolve_threshold(args)
    spec = _build_spec(args, model, a)
    fh = _open_out(args.out)
    try:
        header = {"schema": DETECT_SCHEMA, "n": args.n, "p": p, "detector": spec.name, "A": a}
        fh.write(json.dumps(header) + "\n")
        state = detectors.CusumState()
        for batch in batches:
            v = max_magnitude_correlation(batch)
            state = detectors.cusum_step(state, detectors.increment(spec, v), a)
            event = {"m": state.m, "V": v, "W": state.w, "alarm": state.alarmed}
            fh.write(json.dumps(event) + "\n")
    finally:
        _close_out(fh)
    return EXIT_ALARM if state.alarmed else EXIT_OK


def _cmd_simulate(args) -> int:
    schedule = simulation.named_scenario(args.scenario, p=args.p, horizon=args.horizon)
    mode = "vector" if (args.raw_out and args.mode == "auto") else args.mode
    rng = np.random.default_rng(args.seed)
    result = simulation.scenario_stream(
        schedule, args.n, args.p, rng, mode=mode, keep_batches=bool(args.raw_out)
    )
    fh = _open_out(args.out)
    try:
        header = {
            "schema": SIMULATE_SCHEMA, "scenario": args.scenario, "mode": result.mode,
            "n": args.n, "p": args.p, "seed": args.seed,
        }
        fh.write(json.dumps(header) + "\n")
        for i, v in enumerate(result.values, start=1):
            record = {"m": i, "V": float(v), "segment_J": result.segment_j[i - 1]}
            fh.write(json.dumps(record) + "\n")
    finally:
        _close_out(fh)
    if args.raw_out:
        with open(args.raw_out, "w", encoding="utf-8") as raw:
            for batch in result.batches:
                for row in batch:
                    raw.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return EXIT_OK


def _cmd_fit(args) -> int:
    if args.n < 5:
        raise ValueError("--n must be >= 5 for the density family")
    batches = ingest(args.input, args.format, args.n, args.p)
    if batches.shape[0] < 2:
        raise ValueError("need at least 2 complete batches to fit")
    p = batches.shape[2]
    values = np.array([max_magnitude_correlation(b) for b in batches])
    report = bench.histogram_fit(values, args.bins, args.n, p)
    payload = {
        "j_hat": report.j_hat, "ks": report.ks,
        "sample_count": report.sample_count, "n": args.n, "p": p,
    }
    fh = _open_out(args.out)
    try:
        fh.write(json.dumps(payload) + "\n")
    finally:
        _close_out(fh)
    if args.hist_out:
        with open(args.hist_out, "w", encoding="utf-8") as hist:
            hist.write("bin_left,bin_right,density\n")
            for left, right, dens in zip(report.bin_edges[:-1], report.bin_edges[1:], report.density):
                hist.write(f"{left:.17g},{right:.17g},{dens:.17g}\n")
    return EXIT_OK


def _write_oc_csv(rows, fh):
    fh.write("spec_id,A,log_mfa,log_mfa_se,wadd,wadd_se,trials,censored\n")
    for r in rows:
        log_mfa = math.log(r.mfa_est)
        log_mfa_se = r.mfa_se / r.mfa_est
        fh.write(
            f"{r.spec_id},{r.a:.17g},{log_mfa:.17g},{log_mfa_se:.17g},"
            f"{r.wadd_est:.17g},{r.wadd_se:.17g},{r.trials},{r.censored}\n"
        )


def _cmd_bench(args) -> int:
    if args.preset:
        rows = bench.run_preset(args.preset, master_seed=args.seed, n_jobs=args.n_jobs,
                                trials=args.trials)
    else:
        if args.thresholds is None:
            raise ValueError("provide --preset, or --thresholds for a manual run")
        thresholds = [float(x) for x in args.thresholds.split(",")]
        model = MaxCorrModel(n=args.n, p=args.p)
        spec = _build_spec(args, model, thresholds[0])
        rows = bench.oc_curve(
            [spec], thresholds, model, args.post_j, args.trials or 1000,
            args.seed, horizon=args.horizon, n_jobs=args.n_jobs,
        )
    fh = _open_out(args.out)
    try:
        _write_oc_csv(rows, fh)
    finally:
        _close_out(fh)
    return EXIT_OK


def _cmd_density(args) -> int:
    model = MaxCorrModel(n=args.n, p=args.p, j=args.J)
    grid = np.linspace(1.0 / args.grid, 1.0, args.grid)
    pdf = model.pdf(grid)
    cdf = model.cdf(grid)
    fh = _open_out(args.out)
    try:
        fh.write("v,pdf,cdf\n")
        for v, f, big_f in zip(grid, pdf, cdf):
            fh.write(f"{v:.17g},{f:.17g},{big_f:.17g}\n")
    finally:
        _close_out(fh)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrwatch",
        description="Correlation-change detection on high-dimensional vector streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, n_default=10, p_default=None):
        sp.add_argument("--n", type=int, default=n_default, help="rows per batch")
        sp.add_argument("--p", type=int, default=p_default, help="vector dimension")
        sp.add_argument("--seed", type=int, default=0, help="master random seed")
        sp.add_argument("--out", default=None, help="output path (default stdout)")

    def add_detector_flags(sp):
        sp.add_argument("--detector", choices=("robust", "nonrobust", "nonparametric"),
                        default="robust")
        sp.add_argument("--jbar", type=float, default=2.0,
                        help="robust lower correlation level (> 1)")
        sp.add_argument("--j1", type=float, default=None, help="nonrobust post-change level")
        sp.add_argument("--m0", type=float, default=None, help="pre-change summary mean")
        sp.add_argument("--m1", type=float, default=None, help="post-change summary mean")

    detect = sub.add_parser("detect", help="run a detector over an observation file")
    detect.add_argument("input", help="CSV or NDJSON observation rows")
    add_common(detect)
    add_detector_flags(detect)
    detect.add_argument("--beta", type=float, default=None, help="false-alarm bound; A = log(beta)")
    detect.add_argument("--threshold", type=float, default=None, help="explicit threshold A")
    detect.add_argument("--format", choices=("csv", "ndjson"), default="csv")
    detect.set_defaults(func=_cmd_detect)

    sim = sub.add_parser("simulate", help="generate a scheduled summary stream")
    sim.add_argument("--scenario", choices=simulation.SCENARIO_NAMES, default="paper-fig2")
    add_common(sim, p_default=100)
    sim.add_argument("--mode", choices=("auto", "model", "vector"), default="auto")
    sim.add_argument("--horizon", type=int, default=2000,
                     help="stream length for the prechange scenario")
    sim.add_argument("--raw-out", default=None,
                     help="also write raw observation rows as CSV (vector mode)")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="fit the summary law to an observation file")
    fit.add_argument("input", help="CSV or NDJSON observation rows")
    add_common(fit)
    fit.add_argument("--bins", type=int, default=60)
    fit.add_argument("--format", choices=("csv", "ndjson"), default="csv")
    fit.add_argument("--hist-out", default=None, help="write the normalized histogram CSV here")
    fit.set_defaults(func=_cmd_fit)

    bench_p = sub.add_parser("bench", help="Monte Carlo operating characteristics")
    add_common(bench_p, p_default=100)
    add_detector_flags(bench_p)
    bench_p.add_argument("--preset", choices=sorted(bench.PRESETS), default=None)
    bench_p.add_argument("--thresholds", default=None, help="comma-separated thresholds")
    bench_p.add_argument("--post-j", type=float, default=2.0, dest="post_j")
    bench_p.add_argument("--trials", type=int, default=None)
    bench_p.add_argument("--horizon", type=int, default=None,
                         help="false-alarm horizon (default 20*exp(A) per threshold)")
    bench_p.add_argument("--n-jobs", type=int, default=1, dest="n_jobs")
    bench_p.set_defaults(func=_cmd_bench)

    dens = sub.add_parser("density", help="tabulate the summary law on a grid")
    add_common(dens, p_default=100)
    dens.add_argument("--J", type=float, default=1.0, help="correlation level")
    dens.add_argument("--grid", type=int, default=512)
    dens.set_defaults(func=_cmd_density)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI contract: errors exit 1 with a message
        print(f"corrwatch: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
