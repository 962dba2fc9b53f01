"""``gradwave`` command line: run, sweep, verify, resume."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import runner
from .config import ConfigError, load_config
from .io import SnapshotError
from .verify import run_checks


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "override_horizon", False):
        out["override_horizon"] = True
    if getattr(args, "stride", None) is not None:
        out["stride"] = args.stride
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradwave", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, stride=True):
        p.add_argument("--out", metavar="DIR", help="output directory (beats GRADWAVE_OUT and output.dir)")
        p.add_argument("--override-horizon", action="store_true", help="skip the box-horizon check")
        if stride:
            p.add_argument("--stride", type=int, metavar="N", help="write a CSV row every N steps")

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("sweep", help="run an exponent sweep")
    p.add_argument("spec")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="concurrent runs")
    common(p, stride=False)
    p = sub.add_parser("verify", help="run the built-in invariant suite")
    p = sub.add_parser("resume", help="continue a run from a snapshot")
    p.add_argument("snapshot")
    p.add_argument("config")
    common(p)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return 0 if run_checks() else 1
        if args.command == "sweep":
            if args.workers < 1:
                raise ConfigError([f"--workers must be >= 1, got {args.workers}"])
            dest = runner.sweep(args.spec, args.out, args.workers, override_horizon=args.override_horizon)
            print(dest)
            return 0
        cfg = load_config(args.config, **_overrides(args))
        if args.command == "run":
            res = runner.run(cfg, args.out)
        else:
            res = runner.resume(args.snapshot, cfg, args.out)
        s = res.summary
        print(f"verdict={s['verdict']} t_final={s['t_final']:g} drift={s['drift_rel_final']:.3e}")
        for path in res.paths.values():
            print(path)
        return 0
    except (ConfigError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
