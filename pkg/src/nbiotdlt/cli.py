"""Command line entry point.

    python -m nbiotdlt run --config uc2.cfg --scenario usecase2 --seed 7 --out out/
    python -m nbiotdlt explain-config

Exit codes: 0 success, 2 configuration error, 3 invariant breach during a run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import PROFILES, ConfigError, ScenarioConfig, apply_defaults, explain_config, load_config
from .experiments import (InvariantError, PointOutcome, emit_plotdata, run_baseline, run_usecase1,
                          run_usecase2)
from .ledger import ChainError
from .metrics import write_summary_csv
from .radio import SequencingError
from .sim import SchedulingError

log = logging.getLogger("nbiotdlt")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

SCENARIOS = ("usecase1", "usecase2", "baseline")

# Applied only where the config file is silent.
SCENARIO_DEFAULTS = {
    "usecase1": {"scenario.profile": "fig5"},
    "usecase2": {"scenario.profile": "fig6", "scenario.n_ues": "2"},
    "baseline": {},
}

ALARM_COLUMNS = ("point", "block_height", "sensor", "mean", "threshold", "n_readings")


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {s} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nbiotdlt",
                                 description="NB-IoT sensors feeding a permissioned ledger: "
                                             "discrete-event simulation harness.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one scenario and write CSV results")
    run.add_argument("--config", type=Path, help="key = value config file (defaults if omitted)")
    run.add_argument("--scenario", choices=SCENARIOS, required=True)
    run.add_argument("--seed", type=_u64, help="master seed; overrides scenario.seed")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--profile", choices=sorted(PROFILES), help="calibration profile override")
    run.add_argument("--trace", action="store_true", help="also write the full event trace per point")
    run.add_argument("--workers", type=int, default=1, help="worker processes for sweep points")

    ex = sub.add_parser("explain-config", parents=[common], help="print every config key with its default")
    ex.add_argument("--config", type=Path, help="show values after applying this file")
    return ap


def prepare_config(path: Path | None, scenario: str, profile: str | None,
                   seed: int | None) -> ScenarioConfig:
    cfg = load_config(path) if path is not None else ScenarioConfig().validate()
    apply_defaults(cfg, SCENARIO_DEFAULTS[scenario])
    if profile is not None:
        cfg.profile = profile
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


def run_scenario(cfg: ScenarioConfig, scenario: str, workers: int = 1,
                 keep_trace: bool = False) -> list[PointOutcome]:
    seeds = (cfg.seed,)
    if scenario == "usecase1":
        return run_usecase1(cfg, seeds, workers=workers, keep_trace=keep_trace)
    if scenario == "usecase2":
        return run_usecase2(cfg, seeds, workers=workers, keep_trace=keep_trace)
    return run_baseline(cfg, seeds, keep_trace=keep_trace)


def write_outputs(outcomes: list[PointOutcome], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "summary_extra.csv"]
    write_summary_csv([o.summary for o in outcomes], written[0], written[1])
    for o in outcomes:
        p = out / f"{o.label}_pertx.csv"
        p.write_text(o.per_tx_csv)
        written.append(p)
        if o.ledger_jsonl is not None:
            p = out / f"{o.label}_ledger.jsonl"
            p.write_text(o.ledger_jsonl)
            written.append(p)
        if o.trace_csv is not None:
            p = out / f"{o.label}_trace.csv"
            p.write_text(o.trace_csv)
            written.append(p)
    if any(o.scenario in ("usecase1", "usecase2") for o in outcomes):
        written += emit_plotdata(outcomes, out)
    if any(o.scenario == "usecase2" for o in outcomes):
        p = out / "alarms.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ALARM_COLUMNS)
            for o in outcomes:
                for height, a in o.alarms:
                    w.writerow([o.label, height, a.sensor, repr(round(a.mean, 9)), a.threshold,
                                a.n_readings])
        written.append(p)
    return written


def cmd_run(args) -> int:
    try:
        cfg = prepare_config(args.config, args.scenario, args.profile, args.seed)
    except ConfigError as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("scenario %s, profile %s, seed %d", args.scenario, cfg.profile, cfg.seed)
    try:
        outcomes = run_scenario(cfg, args.scenario, args.workers, args.trace)
        for o in outcomes:
            o.check()
    except (InvariantError, ChainError, SequencingError, SchedulingError, AssertionError) as e:
        print(f"invariant breach: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    for path in write_outputs(outcomes, args.out):
        log.info("wrote %s", path)
    for o in outcomes:
        s = o.summary
        ratio = "n/a" if s.ratio_mean is None else f"{s.ratio_mean:.3f}"
        e2e = "n/a" if s.e2e_mean_s is None else f"{s.e2e_mean_s:.3f}s"
        print(f"{o.label:<28} ratio {ratio:>6}  e2e {e2e:>7}  committed {s.committed}/{s.generated}")
    return EXIT_OK


def cmd_explain(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else None
    except ConfigError as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(explain_config(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_explain(args)


if __name__ == "__main__":
    sys.exit(main())
