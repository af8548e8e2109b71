"""``qtow`` command line: kcbs | lemma-a1 | bandit | estimator | compare."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .harness import EXPERIMENTS, ConfigError, parse_config, run_experiment


def _add_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("shared")
    g.add_argument("--config", help="flat 'key = value' file; flags override it")
    g.add_argument("--seed", help="64-bit unsigned seed (env QTOW_SEED is the fallback)")
    g.add_argument("--out", help="output path (stdout if omitted)")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--runs")
    g.add_argument("--trials")
    g.add_argument("--workers", help="worker processes for run-level parallelism")
    g.add_argument("--window", help="terminal window length for summaries")
    g.add_argument("--summary-only", action="store_true", default=None,
                   help="omit per-trial rows")

    b = p.add_argument_group("bandit / estimator / compare")
    b.add_argument("--pa")
    b.add_argument("--pb")
    b.add_argument("--theta")
    b.add_argument("--eta")
    b.add_argument("--epsilon")
    b.add_argument("--eta-mu")
    b.add_argument("--kappa")
    b.add_argument("--alpha0")
    b.add_argument("--mu0")
    b.add_argument("--mode", choices=("device", "state"))
    b.add_argument("--perp-policy", choices=("postselect", "strict"))
    b.add_argument("--estimator", choices=("known", "classical", "memory"))
    b.add_argument("--g", help="environmental strength for --estimator known")
    b.add_argument("--sigma", help="classical TOW noise amplitude")

    k = p.add_argument_group("kcbs / lemma-a1")
    k.add_argument("--beta-grid", help="start:stop:step in radians")
    k.add_argument("--state", nargs="+", help="perp | z | A | B | mixed | custom a,b,c")
    k.add_argument("--samples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qtow {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        _add_flags(sub.add_parser(name))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    experiment = args.pop("experiment")
    config_file = args.pop("config")
    if args.get("state") is not None:
        args["state"] = " ".join(args["state"])
    try:
        cfg = parse_config(experiment, args, config_file)
        run_experiment(cfg, stdout=sys.stdout)
    except ConfigError as exc:
        print(f"qtow {experiment}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qtow {experiment}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
