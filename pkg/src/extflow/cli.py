"""Command line entry point: ``extflow run|sweep|verify|resume``."""

import argparse
import json
import logging
import sys

from . import config as cfgmod
from . import runner
from .errors import ConfigInvalid, ExtflowError


def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="extflow", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evolve and measure one configuration")
    r.add_argument("config")

    s = sub.add_parser("sweep", help="one run per value of a parameter")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=cfgmod.SWEEP_AXES)
    s.add_argument("--values", required=True, type=_values)

    v = sub.add_parser("verify", help="run and assert the acceptance thresholds")
    v.add_argument("config")

    c = sub.add_parser("resume", help="continue a run from a checkpoint file")
    c.add_argument("checkpoint")
    c.add_argument("--out", default=None, help="output directory (default: the one in the checkpoint)")
    return p


def _summary(rep):
    adj = rep.get("adjudication", {})
    lines = [f"status: {rep['status']}", f"samples: {len(rep['times'])}"]
    if adj:
        lines.append(f"adjudicated measure: {adj['adjudicated']} (unique: {adj['unique']})")
    if rep.get("verdicts"):
        lines.append("verdicts: " + json.dumps(rep["verdicts"], sort_keys=True))
    return "\n".join(lines)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "resume":
            rep = runner.resume(args.checkpoint, args.out)
            print(_summary(rep))
            return 0
        cfg = cfgmod.load(args.config)
        if args.command == "run":
            print(_summary(runner.run(cfg)))
            return 0
        if args.command == "sweep":
            rows = runner.sweep(cfg, args.axis, args.values)
            for row in rows:
                print(", ".join(f"{k}={row.get(k)}" for k in runner.SWEEP_COLUMNS))
            return 0
        rep, checks = runner.verify(cfg)
        print(_summary(rep))
        ok = True
        for name, passed, detail in checks:
            ok &= bool(passed)
            print(f"{'PASS' if passed else 'FAIL'} {name} {detail}".rstrip())
        return 0 if ok else 1
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ExtflowError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
