"""``critwalk`` command line."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig
from .experiments import EXPERIMENTS, collect_samples
from .reports import write_report

log = logging.getLogger("critwalk")

COMMANDS = ["z1", "surplus", "specdim", "displacement", "timechange", "distortion", "resistance", "profile", "all"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critwalk", description="Critical random graph and random walk experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--n", type=int, nargs="+", help="graph sizes")
    p.add_argument("--lambda", dest="lam", type=float, help="window parameter")
    p.add_argument("--k", type=int, nargs="+", help="skeleton sizes as offsets above the surplus J")
    p.add_argument("--seeds", "--seed", dest="seed", type=int, help="base seed")
    p.add_argument("--replicas", type=int)
    p.add_argument("--walks", type=int, help="walks per component (displacement)")
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON config (a previous report also works)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    base = ExperimentConfig.from_json(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    for key in ("n", "lam", "k", "seed", "replicas", "walks", "dt", "horizon", "workers", "out"):
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    base["name"] = args.command
    return ExperimentConfig.from_dict(base)


def run(cfg: ExperimentConfig, command: str) -> list:
    names = [c for c in COMMANDS if c not in ("all", "profile")] if command == "all" else [command]
    samples = collect_samples(cfg) if {"z1", "surplus"} & set(names) else None
    reports = []
    for name in names:
        log.info("running %s", name)
        fn = EXPERIMENTS[name]
        rep = fn(cfg, samples) if name in ("z1", "surplus") else fn(cfg)
        reports.append(rep)
    return reports


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cfg = config_from_args(args)
    failed = False
    for rep in run(cfg, args.command):
        path = write_report(rep, cfg.out)
        bad = [k for k, v in rep["hard_invariants"].items() if not v]
        failed |= bool(bad)
        status = "FAIL " + ",".join(bad) if bad else "ok"
        print(f"{rep['experiment']:<13} hard invariants {status:<6} -> {path}")
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
