"""Parameter sweeps for the two use cases and plot-ready output.

Each sweep point is one full simulation. Points are independent, so they can
be farmed out to worker processes; results come back as picklable
``PointOutcome`` objects and are always merged in grid order.
"""

from __future__ import annotations

import csv
import dataclasses
import gc
import io
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .config import Mode, ScenarioConfig
from .ledger import CONTRACT_CLIENT, AlarmEvent
from .metrics import RunSummary, per_tx_csv_text
from .system import simulate

USECASE1_PAYLOADS = (50, 100, 150, 200)
USECASE1_ENDORSEMENTS = (1, 2, 3, 4)
USECASE2_BLOCK_SIZES = (10, 30, 50, 100)

FIG5_COLUMNS = ("P", "E", "ratio")
FIG6_COLUMNS = ("b", "mean_s", "p95_s")

FIG5_SIDECAR = """\
fig5.csv: average per-transaction UL/DL data traffic ratio
  P      UL sensor payload in bytes (x axis)
  E      endorsing peers per transaction; one series per value.
         E = 0 is the conventional NB-IoT baseline series.
  ratio  mean over transactions of UL data bytes / DL data bytes on the
         radio link, averaged over seeds (y axis, dimensionless)
"""

FIG6_SIDECAR = """\
fig6.csv: end-to-end latency versus block size
  b       transactions per block (x axis); b = 0 is the conventional
          NB-IoT baseline
  mean_s  mean generation-to-confirmation latency in seconds, averaged
          over seeds
  p95_s   95th percentile (nearest rank) of the same latency, averaged
          over seeds
"""


class InvariantError(AssertionError):
    """A run finished but broke a conservation or chain invariant."""


@dataclass
class PointOutcome:
    """Everything a sweep point produces, detached from the engine."""

    label: str
    scenario: str
    seed: int
    summary: RunSummary
    per_tx_csv: str
    trace_bytes: int
    ledger_bytes: int
    chain_ok: bool | None
    alarms: list[tuple[int, AlarmEvent]] = field(default_factory=list)
    alarm_commit_heights: list[int] = field(default_factory=list)
    ledger_jsonl: str | None = None
    trace_csv: str | None = None

    @property
    def bytes_conserved(self) -> bool:
        return self.trace_bytes == self.ledger_bytes

    def check(self) -> None:
        if not self.bytes_conserved:
            raise InvariantError(f"{self.label}: trace carries {self.trace_bytes} B but the "
                                 f"traffic ledger holds {self.ledger_bytes} B")
        if self.chain_ok is False:
            raise InvariantError(f"{self.label}: hash chain does not verify")
        if not self.summary.balanced():
            s = self.summary
            raise InvariantError(f"{self.label}: committed {s.committed} + rejected {s.rejected} "
                                 f"+ dropped {s.dropped} != generated {s.generated}")


def point_label(cfg: ScenarioConfig) -> str:
    if cfg.mode is Mode.BASELINE:
        return f"{cfg.name}_baseline_P{cfg.payload_bytes}"
    return f"{cfg.name}_P{cfg.payload_bytes}_E{cfg.endorsements}_b{cfg.block_size}"


@contextmanager
def _gc_paused():
    # A run builds ~10^5 short-lived objects that mostly sit in reference
    # cycles through the engine; one collection at the end is far cheaper
    # than letting the cyclic collector rescan them during the run.
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()
        gc.collect(0)


def run_point(cfg: ScenarioConfig, seed: int, keep_trace: bool = False) -> PointOutcome:
    with _gc_paused():
        res = simulate(cfg, seed)
    chain_ok = res.ledger.verify_chain() if res.ledger is not None else None
    alarm_heights = []
    if res.ledger is not None:
        for blk, ok in zip(res.ledger.blocks, res.ledger.validity):
            alarm_heights += [blk.height for etx, v in zip(blk.txs, ok)
                              if v and etx.proposal.client == CONTRACT_CLIENT]
    return PointOutcome(
        label=point_label(cfg), scenario=cfg.name, seed=seed, summary=res.summary,
        per_tx_csv=per_tx_csv_text(res.records, res.traffic),
        trace_bytes=res.trace_bytes(), ledger_bytes=res.traffic.total_bytes(),
        chain_ok=chain_ok, alarms=res.alarms, alarm_commit_heights=alarm_heights,
        ledger_jsonl=res.ledger.jsonl() if res.ledger is not None else None,
        trace_csv=res.trace.csv_text() if keep_trace else None,
    )


def _star(args):
    return run_point(*args)


def run_points(cfgs: Sequence[ScenarioConfig], seeds: Iterable[int], workers: int | None = None,
               keep_trace: bool = False) -> list[PointOutcome]:
    """Run every config for every seed; output is ordered by (config, seed)."""
    jobs = [(cfg, seed, keep_trace) for cfg in cfgs for seed in seeds]
    if workers is None or workers <= 1 or len(jobs) < 2:
        return [run_point(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, jobs))


def usecase1_configs(base: ScenarioConfig, payloads=USECASE1_PAYLOADS,
                     endorsements=USECASE1_ENDORSEMENTS, baseline: bool = True) -> list[ScenarioConfig]:
    """Grid of single-UE runs: one DLT series per E plus the baseline series."""
    cfgs = []
    for e in endorsements:
        for p in payloads:
            cfgs.append(dataclasses.replace(base, name="usecase1", mode=Mode.DLT, n_ues=1,
                                            payload_bytes=p, endorsements=e))
    if baseline:
        for p in payloads:
            cfgs.append(dataclasses.replace(base, name="usecase1", mode=Mode.BASELINE, n_ues=1,
                                            payload_bytes=p))
    for c in cfgs:
        c.validate()
    return cfgs


def usecase2_configs(base: ScenarioConfig, block_sizes=USECASE2_BLOCK_SIZES,
                     baseline: bool = True) -> list[ScenarioConfig]:
    cfgs = [dataclasses.replace(base, name="usecase2", mode=Mode.DLT, block_size=b)
            for b in block_sizes]
    if baseline:
        cfgs.append(dataclasses.replace(base, name="usecase2", mode=Mode.BASELINE))
    for c in cfgs:
        c.validate()
    return cfgs


def run_usecase1(base: ScenarioConfig, seeds=(0,), payloads=USECASE1_PAYLOADS,
                 endorsements=USECASE1_ENDORSEMENTS, workers: int | None = None,
                 keep_trace: bool = False) -> list[PointOutcome]:
    return run_points(usecase1_configs(base, payloads, endorsements), seeds, workers, keep_trace)


def run_usecase2(base: ScenarioConfig, seeds=(0,), block_sizes=USECASE2_BLOCK_SIZES,
                 workers: int | None = None, keep_trace: bool = False) -> list[PointOutcome]:
    return run_points(usecase2_configs(base, block_sizes), seeds, workers, keep_trace)


def run_baseline(base: ScenarioConfig, seeds=(0,), keep_trace: bool = False) -> list[PointOutcome]:
    cfg = dataclasses.replace(base, name="baseline", mode=Mode.BASELINE).validate()
    return run_points([cfg], seeds, keep_trace=keep_trace)


def _mean(xs: list[float]) -> float | None:
    return math.fsum(xs) / len(xs) if xs else None


def fig5_table(outcomes: Iterable[PointOutcome]) -> dict[tuple[int, int], float | None]:
    """(P, E) -> seed-averaged ratio, E = 0 for the baseline series."""
    acc: dict[tuple[int, int], list[float]] = defaultdict(list)
    for o in outcomes:
        s = o.summary
        key = (s.payload_bytes, s.endorsements)
        acc.setdefault(key, [])
        if s.ratio_mean is not None:
            acc[key].append(s.ratio_mean)
    return {k: _mean(v) for k, v in acc.items()}


def fig6_table(outcomes: Iterable[PointOutcome]) -> dict[int, tuple[float | None, float | None]]:
    """b -> (seed-averaged mean, seed-averaged p95), b = 0 for the baseline."""
    means: dict[int, list[float]] = defaultdict(list)
    p95s: dict[int, list[float]] = defaultdict(list)
    for o in outcomes:
        s = o.summary
        means.setdefault(s.block_size, [])
        p95s.setdefault(s.block_size, [])
        if s.e2e_mean_s is not None:
            means[s.block_size].append(s.e2e_mean_s)
            p95s[s.block_size].append(s.e2e_p95_s)
    return {b: (_mean(means[b]), _mean(p95s[b])) for b in means}


def _num(x) -> str:
    return "" if x is None else repr(round(x, 9))


def emit_plotdata(outcomes: Sequence[PointOutcome], out_dir) -> list[Path]:
    """Write fig5.csv / fig6.csv (whichever the outcomes cover) plus sidecars."""
    if not outcomes:
        raise ValueError("no outcomes to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    uc1 = [o for o in outcomes if o.scenario == "usecase1"]
    uc2 = [o for o in outcomes if o.scenario == "usecase2"]
    if uc1:
        table = fig5_table(uc1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIG5_COLUMNS)
        # DLT series by E, then the baseline series.
        for (p, e) in sorted(table, key=lambda k: (k[1] == 0, k[1], k[0])):
            w.writerow([p, e, _num(table[(p, e)])])
        written += _write(out_dir, "fig5", buf.getvalue(), FIG5_SIDECAR)
    if uc2:
        table = fig6_table(uc2)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIG6_COLUMNS)
        for b in sorted(table, key=lambda b: (b == 0, b)):
            mean, p95 = table[b]
            w.writerow([b, _num(mean), _num(p95)])
        written += _write(out_dir, "fig6", buf.getvalue(), FIG6_SIDECAR)
    return written


def _write(out_dir: Path, stem: str, body: str, sidecar: str) -> list[Path]:
    data, side = out_dir / f"{stem}.csv", out_dir / f"{stem}.columns.txt"
    data.write_text(body)
    side.write_text(sidecar)
    return [data, side]
