"""Command-line entry point: ``pnp-autotune {init-config,synth,run,sweep,report}``.

Exit codes: 0 success, 2 invalid input, 3 divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import DivergenceError, InvalidInputError
from ..solvers import ALGORITHMS
from .config import ExperimentConfig
from .experiment import load_records, report, run, sweep, synth

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(
        seed=args.seed,
        out_dir=args.out_dir,
        algorithm=getattr(args, "algorithm", None),
        gamma1=getattr(args, "gamma1", None),
        snr_db=args.snr_db,
    )


def _dataset_dir(args, cfg):
    return Path(args.dataset) if args.dataset else Path(cfg.out_dir) / "dataset"


def cmd_init_config(args):
    cfg = _load_config(args)
    if args.output == "-":
        print(cfg.to_json())
    else:
        cfg.save(args.output)
    return EXIT_OK


def cmd_synth(args):
    cfg = _load_config(args)
    out = synth(cfg, args.dataset)
    print(out)
    return EXIT_OK


def cmd_run(args):
    cfg = _load_config(args)
    rec = run(cfg, _dataset_dir(args, cfg))
    q = rec.quality
    if q is None:
        print(f"{rec.algorithm} gamma1={rec.gamma1:g}: {rec.error}")
    else:
        print(
            f"{rec.algorithm} gamma1={rec.gamma1:g}: {rec.termination} after {rec.iterations} "
            f"iterations, rSNR {q.rsnr_db:.3f} dB, SSIM {q.ssim:.4f}"
        )
    return EXIT_DIVERGED if rec.diverged else EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    records = sweep(cfg, _dataset_dir(args, cfg), n_jobs=args.jobs)
    for r in records:
        rsnr = f"{r.quality.rsnr_db:.3f} dB" if r.quality else "-"
        print(f"{r.algorithm:5s} gamma1={r.gamma1:<10g} {r.termination:10s} {rsnr}")
    return EXIT_DIVERGED if any(r.diverged for r in records) else EXIT_OK


def cmd_report(args):
    rows = report(load_records(args.paths), args.output)
    cols = ("algorithm", "runs", "failures", "mean_rsnr_db", "mean_ssim", "mean_iters_to_0.5db")
    print("  ".join(cols))
    for row in rows:
        print("  ".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pnp-autotune", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver_flags=False):
        p.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="mask and noise seed")
        p.add_argument("--out-dir", help="output root directory")
        p.add_argument("--snr-db", type=float, help="measurement SNR in dB ('inf' for noiseless)")
        if solver_flags:
            p.add_argument("--dataset", help="dataset directory (default <out-dir>/dataset)")
            p.add_argument("--algorithm", choices=ALGORITHMS)
            p.add_argument("--gamma1", type=float, help="normalised stepsize, gamma1*||A||^2")

    p = sub.add_parser("init-config", help="write the default (or overridden) config")
    common(p, solver_flags=True)
    p.add_argument("output", nargs="?", default="-")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("synth", help="synthesize a dataset")
    common(p)
    p.add_argument("--dataset", help="dataset directory (default <out-dir>/dataset)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run one solver on a dataset")
    common(p, solver_flags=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every algorithm over the gamma1 grid")
    common(p, solver_flags=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate run records")
    p.add_argument("paths", nargs="+", help="record.json files or directories to search")
    p.add_argument("--output", help="write the table as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
