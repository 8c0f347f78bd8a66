"""
Command line entry point.

::

    sinr-oco run <config> --out <dir> [--seeds a..b] [--jobs n]
    sinr-oco replay <dataset> --estimator <config> --out <file>
    sinr-oco validate <config>
    sinr-oco list

``<config>`` is a TOML file or the name of a shipped scenario.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, load_estimator_config, parse_seed_range
from .experiments import build_estimator, run_experiment
from .metrics import rmse
from .simulator import DatasetFormatError, LinkSimConfig, TraceDataset, run_open_loop

log = logging.getLogger("sinr_oco")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def scenario_dir() -> Path:
    return Path(str(resources.files("sinr_oco") / "scenarios"))


def shipped_scenarios() -> list[str]:
    return sorted(p.stem for p in scenario_dir().glob("*.toml"))


def resolve_config(name: str) -> Path:
    """A path if it exists, else a shipped scenario (``fig1-momentum`` or ``estimators/salad``)."""
    p = Path(name)
    if p.exists():
        return p
    candidate = scenario_dir() / (name if name.endswith(".toml") else name + ".toml")
    return candidate if candidate.exists() else p


def _check_writable(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryFile(dir=directory):
        pass


def cmd_run(args) -> int:
    try:
        cfg = load_config(resolve_config(args.config))
        seeds = parse_seed_range(args.seeds) if args.seeds else None
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"--seeds: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        _check_writable(out)
    except OSError as exc:
        print(f"{out}: output directory is not writable: {exc.strerror}", file=sys.stderr)
        return EXIT_FAIL
    log.info("running %s (%s) over %d seeds", cfg.name, cfg.kind, len(seeds or cfg.seeds))
    try:
        run_experiment(cfg, out, seeds=seeds, jobs=args.jobs)
    except OSError as exc:
        print(f"{exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{cfg.name}: results written to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        ecfg = load_estimator_config(resolve_config(args.estimator))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        ds = TraceDataset.from_csv(args.dataset)
    except DatasetFormatError as exc:
        print(f"{args.dataset}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"{args.dataset}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAIL
    n_mcs = ecfg.model.n_mcs
    bad = np.flatnonzero(ds.mcs >= n_mcs)
    if bad.size:
        # data rows start on line 2
        print(f"{args.dataset}: line {int(bad[0]) + 2}: MCS {int(ds.mcs[bad[0]])} outside the link model "
              f"(0..{n_mcs - 1})", file=sys.stderr)
        return EXIT_FAIL

    sim = LinkSimConfig(true_model=ecfg.model, est_model=ecfg.model, est_cbs=ecfg.est_cbs,
                        feedback_delay=ecfg.feedback_delay, cqi_delay=ecfg.cqi_delay, cqi_period=None,
                        cqi_map=ecfg.cqi_map)
    est = build_estimator(ecfg.spec, ecfg.model, ecfg.cqi_map, ecfg.ensemble)
    estimates = run_open_loop(ds, sim, est)
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slot", "estimate"])
            for t, g in enumerate(estimates):
                w.writerow([t, repr(float(g))])
    except OSError as exc:
        print(f"{args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAIL

    if len(ds) == 0:
        print("empty dataset: nothing to replay", file=sys.stderr)
    elif not ds.has_truth:
        print("notice: dataset has no ground-truth SINR; RMSE omitted", file=sys.stderr)
    else:
        warmup = ecfg.warmup if ecfg.warmup < len(ds) else 0
        print(f"slots={len(ds)} rmse={rmse(estimates, ds.true_sinr, warmup):.6f} dB (first {warmup} slots skipped)")
    return EXIT_OK


def cmd_validate(args) -> int:
    path = resolve_config(args.config)
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    print(f"{path}: ok ({cfg.kind}, {len(cfg.seeds)} seeds)")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinr-oco",
                                     description="SINR estimation from ACK/NACK and CQI feedback: experiment runner")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config or shipped scenario")
    p.add_argument("config", help="TOML file or shipped scenario name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", help="seed range a..b (inclusive), overrides the config")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay a recorded dataset through an estimator, open loop")
    p.add_argument("dataset", help="CSV with columns slot,true_sinr,mcs,cbs,y,cqi,estimate")
    p.add_argument("--estimator", required=True, help="estimator TOML file or shipped name (estimators/salad)")
    p.add_argument("--out", required=True, help="output CSV of per-slot estimates")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("list", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
