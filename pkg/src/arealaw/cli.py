"""Command-line driver.

    arealaw <subcommand> --config <path> [--out <dir>] [--workers k]

Subcommands run one pipeline stage against the artifacts already in the
output directory; ``run`` executes every stage in order.  Exit status is
0 when all assertions of the executed stages pass, 1 when an assertion
fails and 2 on configuration, dependency or numerical errors.
"""

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import ArealawError
from .pipeline import STAGES, Workspace, run_pipeline, run_stage

HELP = {
    "validate-config": "check the configuration and the declared model constants",
    "gap-scan": "ground energy and gap on the s-grid",
    "flow": "integrate the full, region and boundary flows",
    "decompose-scan": "tabulate the decomposition error and certify supports",
    "entropy-report": "Schmidt spectra, entropies, overlaps and tail constraints",
    "bound-report": "assemble the entropy bound at every s",
    "run": "run every stage in order",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="arealaw",
        description="Quasi-adiabatic continuation and entanglement area-law experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", required=True, help="TOML experiment configuration")
        p.add_argument("--out", default=None, help="output directory (default: from config)")
        p.add_argument("--workers", type=int, default=1, help="worker threads for (s, R) points")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except ArealawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        rec = run_pipeline(cfg, args.out, args.workers)
        for stage, msg in rec.errors.items():
            print(f"error in {stage}: {msg}", file=sys.stderr)
        for name, ok in rec.assertions.items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if rec.errors:
            return 2
        return rec.exit_code

    ws = Workspace(cfg, args.out, args.workers)
    try:
        assertions = run_stage(ws, args.command)
    except ArealawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        status = "OK" if all(assertions.values()) else "INVALID"
        print(f"{status}  {cfg.name}  (config hash {ws.hash[:12]})")
        if status != "OK":
            report = ws.read_json("validation.json")["measured"]["messages"]
            print(json.dumps(report, indent=2))
    else:
        for name, ok in assertions.items():
            print(f"{'PASS' if ok else 'FAIL'}  {args.command}:{name}")
    return 0 if all(assertions.values()) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
