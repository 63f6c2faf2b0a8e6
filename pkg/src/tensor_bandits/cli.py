"""Command-line interface: ``python -m tensor_bandits <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .environments import gen_lower_bound_instance, lower_bound_delta
from .tensor_core import read_tnsr, write_tnsr
from .tucker import min_mode_singular_value, multilinear_rank


def _cmd_run(args) -> int:
    cfg = harness.parse_config(args.config)
    out = Path(args.out or cfg.output)
    failures: list[str] = []
    traces = harness.run_experiment(cfg, workers=args.workers, failures=failures)
    harness.write_csv(traces, out)
    print(f"wrote {len(traces)} traces to {out}")
    for algo in cfg.algorithms:
        finals = [tr.final for tr in traces if tr.algo == algo]
        if finals:
            print(f"{algo:12s} median final regret {np.median(finals):10.3f} over {len(finals)} seeds")
    if args.svg:
        harness.plot_svg(out, args.svg)
        print(f"wrote {args.svg}")
    for msg in failures:
        print(f"failed: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_plot(args) -> int:
    harness.plot_svg(args.csv, args.svg)
    return 0


def _cmd_selftest(args) -> int:
    report = harness.selftest(seed=args.seed)
    for line in report.lines():
        print(line)
    return 0 if report.ok else 1


def _cmd_lowerbound(args) -> int:
    x = gen_lower_bound_instance(args.d, args.N, args.r, args.T, np.random.default_rng(args.seed))
    write_tnsr(args.out, x)
    print(f"Delta = {lower_bound_delta(args.r, args.N, args.T)!r}")
    print(f"||X||_F^2 = {float(np.sum(x ** 2))!r}")
    print(f"wrote {args.out}")
    return 0


def _cmd_export(args) -> int:
    cfg = harness.parse_config(args.config)
    env, _ = harness.make_env(cfg, args.seed)
    write_tnsr(args.out, env.truth)
    print(f"wrote seed {args.seed} instance {env.shape} to {args.out}")
    return 0


def _cmd_import(args) -> int:
    x = read_tnsr(args.path)
    print(f"shape {x.shape}")
    print(f"frobenius norm {float(np.linalg.norm(x))!r}")
    print(f"multilinear rank {multilinear_rank(x)}")
    if np.any(x):
        print(f"omega {min_mode_singular_value(x)!r}")
    if args.out:
        write_tnsr(args.out, x)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensor-bandits", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run an experiment config and write a regret CSV")
    s.add_argument("config")
    s.add_argument("--out", help="CSV path (default: the config's output key)")
    s.add_argument("--svg", help="also render the regret plot here")
    s.add_argument("--workers", type=int, help="worker processes (capped by TBL_THREADS)")
    s.set_defaults(fn=_cmd_run)

    s = sub.add_parser("plot", help="render a regret CSV as SVG")
    s.add_argument("csv")
    s.add_argument("svg")
    s.set_defaults(fn=_cmd_plot)

    s = sub.add_parser("selftest", help="run the built-in invariant suites")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_selftest)

    s = sub.add_parser("lowerbound", help="write the hard instance as TNSR")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_lowerbound)

    s = sub.add_parser("export-instance", help="write a config's system tensor for one seed as TNSR")
    s.add_argument("config")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_export)

    s = sub.add_parser("import-instance", help="read a TNSR file and summarize it")
    s.add_argument("path")
    s.add_argument("--out", help="re-write the tensor here")
    s.set_defaults(fn=_cmd_import)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
