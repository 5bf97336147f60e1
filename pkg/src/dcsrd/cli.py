"""Command line: ``dcsrd sweep | audit | curves``."""

import argparse
import logging
import os
import sys
import time

from . import experiments
from .audit import run_formula_audit
from .experiments import ConfigError, DecoderFailureError, SweepConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TOLERANCE = 3
EXIT_DECODER = 4


def _load(path, trials=None, seed=None):
    cfg = SweepConfig.load(path)
    kw = {}
    if trials is not None:
        kw["trials"] = trials
    if seed is not None:
        kw["master_seed"] = seed
    return cfg.replace(**kw) if kw else cfg


def cmd_sweep(args):
    try:
        cfg = _load(args.config, args.trials, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        res = experiments.run_sweep(cfg, workers=args.workers, keep_records=args.trial_log)
    except DecoderFailureError as exc:
        print(f"decoder failure: {exc}", file=sys.stderr)
        return EXIT_DECODER
    experiments.write_outputs(res, args.out)
    s = res.summary
    print(f"{cfg.trials} trials x {len(cfg.delta_grid)} steps in {time.perf_counter() - t0:.1f} s -> {args.out}")
    for name, c in s["checks"].items():
        tag = {True: "PASS", False: "FAIL", None: "SKIP"}[c["pass"]]
        print(f"[{tag}] {name}: value={c['value']} worst={c['worst']} expected={c['expected']} tol={c['tol']}")
    return EXIT_OK if s["all_pass"] else EXIT_TOLERANCE


def cmd_audit(args):
    items, elapsed = run_formula_audit()
    for it in items:
        print(it.line())
    print(f"audit finished in {elapsed * 1e3:.1f} ms")
    return EXIT_OK if all(it.ok for it in items) else EXIT_TOLERANCE


def cmd_curves(args):
    try:
        cfg = SweepConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    curves = experiments.closed_form_curves(cfg)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for s, cs in curves.items():
            with open(os.path.join(args.out, f"{s}.csv"), "w", newline="") as fh:
                fh.write(experiments.curve_csv(cs))
    else:
        for s, cs in curves.items():
            print(f"# {s}")
            sys.stdout.write(experiments.curve_csv(cs))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dcsrd", description="Rate-distortion sweeps for quantized compressed sensing.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    sw.add_argument("--config", required=True, help="JSON sweep configuration")
    sw.add_argument("--out", required=True, help="output directory for CSVs and summary.json")
    sw.add_argument("--trials", type=int, help="override the configured trial count")
    sw.add_argument("--seed", type=int, help="override the master seed")
    sw.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    sw.add_argument("--trial-log", action="store_true", help="also write per-trial records")
    sw.set_defaults(func=cmd_sweep)

    au = sub.add_parser("audit", help="check closed-form gains and identities")
    au.set_defaults(func=cmd_audit)

    cu = sub.add_parser("curves", help="print closed-form curves for a config")
    cu.add_argument("--config", required=True, help="JSON sweep configuration")
    cu.add_argument("--out", help="write one CSV per scenario here instead of stdout")
    cu.set_defaults(func=cmd_curves)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
