"""Command-line interface: ``depthgram <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant
violation.  ``HDFD_THREADS`` sets the default worker count.
"""

import argparse
import hashlib
import json
import resource
import sys
import time

import numpy as np

from .depth import mbd, mbd_brute, mei, mei_brute, parabola_f
from .engine import analyze, default_threads
from .errors import DataError, InvariantError
from .formats import (DatasetWriter, HdfdDataset, write_depthgram_csv, write_marginal_csv,
                      write_report)
from .synth import ModelConfig, SyntheticSource, generate, time_grid

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4


def _unit_interval(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def _at_least(lo):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be at least {lo}, got {v}")
        return v
    return parse


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _c_grid(text):
    try:
        return tuple(_unit_interval(s) for s in text.split(",") if s.strip())
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad --c-grid: {exc}") from None


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def cmd_simulate(args):
    cfg = ModelConfig(args.model, n=args.n, p=args.p, N=args.N, c=args.c, seed=args.seed)
    with DatasetWriter(args.out, cfg.n, cfg.p, cfg.N, grid=time_grid(cfg.N)) as sink:
        truth = generate(cfg, sink)
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            json.dump(truth.to_dict(), fh, indent=1)
            fh.write("\n")
    outliers = [int(i) + 1 for i in np.flatnonzero(truth.types != "typical")]
    print(f"shape n={cfg.n} p={cfg.p} N={cfg.N}")
    print(f"outliers {outliers[0]}-{outliers[-1]}" if outliers else "outliers none")
    print(f"sha256 {file_sha256(args.out)}")
    return EXIT_OK


def cmd_analyze(args):
    with HdfdDataset(args.input) as ds:
        report = analyze(ds, F=args.F, run_marginal=args.marginal, threads=args.threads)
    if args.out_report:
        write_report(report, args.out_report)
    if args.out_csv:
        write_depthgram_csv(report.depthgrams.values(), args.out_csv)
    if args.out_marginal_csv and report.marginal is not None:
        write_marginal_csv(report.marginal, args.out_marginal_csv)
    print(f"shape n={report.n} p={report.p} N={report.N}")
    print("outliers " + (" ".join(str(i + 1) for i in report.outliers) or "none"))
    for i, variants in report.provenance.items():
        print(f"  {i + 1}: {','.join(variants)}")
    print(f"checksum {report.checksum()}")
    return EXIT_OK


def cmd_study(args):
    from .study import StudyConfig, run_study

    cfg = StudyConfig(model=args.model, p=args.p, c_grid=args.c_grid, replicates=args.reps,
                      seed=args.seed, n=args.n, N=args.N, F=args.F,
                      marginal=not args.no_marginal, threads=args.threads)
    summary = run_study(cfg)
    out = summary.write(args.out_dir)
    for row in summary.rows:
        cells = [f"c={row['c']:g}"] + [f"{k[:-5]}={row[k]:.3f}({row[k[:-5] + '_std']:.3f})"
                                       for k in row if k.endswith("_mean")]
        print(" ".join(cells))
    print(f"written to {out}")
    return EXIT_OK


def cmd_plot(args):
    from .plot import plot_file

    plot_file(args.points_csv, args.out_svg, args.labels, args.overlay_parabola)
    print(f"written {args.out_svg}")
    return EXIT_OK


def oracle_check(n_max, m_max, trials, seed, tol=1e-12):
    """Compare fast and brute-force depths on random tied samples; return mismatch messages."""
    rng = np.random.default_rng(seed)
    problems = []
    for t in range(trials):
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(1, m_max + 1))
        x = rng.integers(-3, 4, size=(n, m)).astype(np.float64)
        if n > 2 and rng.random() < 0.3:
            x[rng.integers(n)] = x[rng.integers(n)]
        fast_b, fast_e = mbd(x).values, mei(x).values
        err_b = np.max(np.abs(fast_b - mbd_brute(x).values))
        err_e = np.max(np.abs(fast_e - mei_brute(x).values))
        if err_b > tol or err_e > tol:
            problems.append(f"trial {t + 1} (n={n}, m={m}): MBD error {err_b:.3e}, "
                            f"MEI error {err_e:.3e}")
        y = rng.standard_normal((n, m))
        gap = mbd(y).values - parabola_f(n, mei(y).values)
        if gap.max() > tol:
            problems.append(f"trial {t + 1}: MBD exceeds f_n(MEI) by {gap.max():.3e}")
    return problems


def cmd_oracle_check(args):
    problems = oracle_check(args.n, args.m, args.trials, args.seed)
    for msg in problems:
        print(msg, file=sys.stderr)
    if problems:
        raise InvariantError(f"{len(problems)} of {args.trials} trials failed")
    print(f"oracle-check: {args.trials} trials passed")
    return EXIT_OK


def cmd_bench(args):
    cfg = ModelConfig(args.model, n=args.n, p=args.p, N=args.N, c=args.c, seed=args.seed)
    src = SyntheticSource(cfg)
    t0 = time.perf_counter()
    report = analyze(src, F=args.F, threads=args.threads)
    wall = time.perf_counter() - t0
    peak_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    print(f"n={cfg.n} p={cfg.p} N={cfg.N} threads={args.threads}")
    print(f"wall_seconds {wall:.2f}")
    print(f"peak_rss_mb {peak_mb:.1f}")
    print(f"outliers {len(report.outliers)}")
    print(f"checksum {report.checksum()}")
    return EXIT_OK


def build_parser():
    threads = default_threads()
    p = argparse.ArgumentParser(prog="depthgram", description="DepthGram outlier detection "
                                "for high-dimensional functional data.")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp, p_default):
        sp.add_argument("--model", type=int, choices=(1, 2, 3, 4), default=1)
        sp.add_argument("--n", type=_at_least(20), default=100)
        sp.add_argument("--p", type=_at_least(1), default=p_default)
        sp.add_argument("--N", type=_at_least(1), default=100)
        sp.add_argument("--seed", type=_seed, default=0)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with labels")
    model_args(s, 50)
    s.add_argument("--c", type=_unit_interval, default=1.0)
    s.add_argument("--out", required=True)
    s.add_argument("--labels-out")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="compute DepthGrams and flag outliers")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--F", type=_positive_float, default=1.5)
    a.add_argument("--marginal", action="store_true", help="also run the per-dimension screens")
    a.add_argument("--out-report")
    a.add_argument("--out-csv")
    a.add_argument("--out-marginal-csv")
    a.add_argument("--threads", type=_at_least(1), default=threads)
    a.set_defaults(func=cmd_analyze)

    st = sub.add_parser("study", help="replicated simulation study")
    model_args(st, 50)
    st.add_argument("--c-grid", type=_c_grid, default=(0.0, 0.25, 0.5, 0.75, 1.0))
    st.add_argument("--reps", type=_at_least(1), default=200)
    st.add_argument("--F", type=_positive_float, default=1.5)
    st.add_argument("--no-marginal", action="store_true")
    st.add_argument("--threads", type=_at_least(1), default=threads)
    st.add_argument("--out-dir", required=True)
    st.set_defaults(func=cmd_study)

    pl = sub.add_parser("plot", help="render DepthGram points to SVG")
    pl.add_argument("--points-csv", required=True)
    pl.add_argument("--labels")
    pl.add_argument("--out-svg", required=True)
    pl.add_argument("--overlay-parabola", action=argparse.BooleanOptionalAction, default=True)
    pl.set_defaults(func=cmd_plot)

    o = sub.add_parser("oracle-check", help="fast versus brute-force depth comparison")
    o.add_argument("--n", type=_at_least(2), default=12)
    o.add_argument("--m", type=_at_least(1), default=15)
    o.add_argument("--trials", type=_at_least(1), default=500)
    o.add_argument("--seed", type=_seed, default=0)
    o.set_defaults(func=cmd_oracle_check)

    b = sub.add_parser("bench", help="time a full analysis of on-the-fly synthetic data")
    model_args(b, 50000)
    b.add_argument("--c", type=_unit_interval, default=1.0)
    b.add_argument("--F", type=_positive_float, default=1.5)
    b.add_argument("--threads", type=_at_least(1), default=threads)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
