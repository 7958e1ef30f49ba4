"""Traffic accounting, latency records and run summaries."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .radio import Direction, MsgClass, RadioMessage
from .sim import to_seconds

SUMMARY_COLUMNS = ("scenario", "seed", "P_bytes", "E", "b", "mode", "ratio_mean",
                   "e2e_mean_s", "e2e_p95_s", "committed", "rejected", "ra_failures", "blocks")
PER_TX_COLUMNS = ("tx_id", "ue", "t_gen_us", "t_commit_us", "t_confirm_us", "ul_bytes", "dl_bytes")
EXTRA_COLUMNS = ("scenario", "seed", "P_bytes", "E", "b", "mode", "ratio_totals",
                 "ratio_discrepancy", "generated", "dropped", "alarms", "ul_data_bytes",
                 "dl_data_bytes", "signaling_bytes")


class DoubleRecordError(AssertionError):
    pass


@dataclass
class Counter:
    messages: int = 0
    bytes: int = 0


@dataclass
class TxTraffic:
    ul_bytes: int = 0
    dl_bytes: int = 0


class TrafficLedger:
    def __init__(self) -> None:
        self.counters: dict[tuple[Direction, MsgClass], Counter] = defaultdict(Counter)
        self.per_tx: dict[str, TxTraffic] = {}
        self._seen: set[int] = set()

    def record_message(self, msg: RadioMessage, tx_id: str | None = None) -> None:
        if msg.msg_id in self._seen:
            raise DoubleRecordError(f"message {msg.msg_id} ({msg.describe()}) recorded twice")
        self._seen.add(msg.msg_id)
        c = self.counters[(msg.direction, msg.msg_class)]
        c.messages += 1
        c.bytes += msg.size
        if tx_id is not None and msg.msg_class is not MsgClass.SIGNALING:
            t = self.per_tx.get(tx_id)
            if t is None:
                t = self.per_tx[tx_id] = TxTraffic()
            if msg.direction is Direction.UL:
                t.ul_bytes += msg.size
            else:
                t.dl_bytes += msg.size

    def total_bytes(self, direction: Direction | None = None, data_only: bool = False) -> int:
        return sum(c.bytes for (d, cls), c in self.counters.items()
                   if (direction is None or d is direction)
                   and not (data_only and cls is MsgClass.SIGNALING))

    def class_bytes(self, msg_class: MsgClass, direction: Direction | None = None) -> int:
        return sum(c.bytes for (d, cls), c in self.counters.items()
                   if cls is msg_class and (direction is None or d is direction))

    @property
    def signaling_bytes(self) -> int:
        return self.class_bytes(MsgClass.SIGNALING)

    @property
    def message_count(self) -> int:
        return sum(c.messages for c in self.counters.values())


def ul_dl_ratio(ledger: TrafficLedger) -> float | None:
    """Mean over transactions of per-transaction UL/DL data bytes.

    Transactions that received no DL data bytes have no defined ratio and
    are left out; ``None`` if no transaction qualifies.
    """
    ratios = [t.ul_bytes / t.dl_bytes for t in ledger.per_tx.values() if t.dl_bytes > 0]
    if not ratios:
        return None
    return math.fsum(ratios) / len(ratios)


def ratio_of_totals(ledger: TrafficLedger) -> float | None:
    dl = ledger.total_bytes(Direction.DL, data_only=True)
    if dl == 0:
        return None
    return ledger.total_bytes(Direction.UL, data_only=True) / dl


_STAGES = ("t_generated", "t_ul_delivered", "t_endorsed", "t_ordered", "t_committed", "t_confirmed")


@dataclass
class LatencyRecord:
    tx_id: str
    ue: str
    t_generated: int
    t_ul_delivered: int | None = None
    t_endorsed: int | None = None
    t_ordered: int | None = None
    t_committed: int | None = None
    t_confirmed: int | None = None

    @property
    def e2e_us(self) -> int | None:
        if self.t_confirmed is None:
            return None
        return self.t_confirmed - self.t_generated

    def stages_ordered(self) -> bool:
        seen = [getattr(self, s) for s in _STAGES if getattr(self, s) is not None]
        return all(a <= b for a, b in zip(seen, seen[1:]))


@dataclass
class LatencyStats:
    mean: float
    p95: float
    count: int
    histogram: tuple[np.ndarray, np.ndarray]


def e2e_stats(records, bin_width_s: float = 0.1) -> LatencyStats:
    """Mean and nearest-rank 95th percentile of completed E2E latencies, in seconds."""
    lat = np.array([to_seconds(r.e2e_us) for r in records if r.e2e_us is not None])
    if lat.size == 0:
        raise ValueError("no completed latency records")
    top = max(bin_width_s, math.ceil(lat.max() / bin_width_s) * bin_width_s)
    edges = np.arange(0.0, top + bin_width_s / 2, bin_width_s)
    if edges.size < 2:
        edges = np.array([0.0, bin_width_s])
    counts, edges = np.histogram(lat, bins=edges)
    p95 = float(np.percentile(lat, 95, method="inverted_cdf"))
    return LatencyStats(float(lat.mean()), p95, int(lat.size), (counts, edges))


@dataclass
class RunSummary:
    scenario: str
    seed: int
    payload_bytes: int
    endorsements: int
    block_size: int
    mode: str
    ratio_mean: float | None
    ratio_totals: float | None
    e2e_mean_s: float | None
    e2e_p95_s: float | None
    generated: int
    committed: int
    rejected: int
    dropped: int
    ra_failures: int
    blocks: int
    alarms: int = 0
    ul_data_bytes: int = 0
    dl_data_bytes: int = 0
    signaling_bytes: int = 0
    extra: dict = field(default_factory=dict)

    def balanced(self) -> bool:
        return self.committed + self.rejected + self.dropped == self.generated

    def row(self) -> list[str]:
        return [self.scenario, str(self.seed), str(self.payload_bytes), str(self.endorsements),
                str(self.block_size), self.mode, _fmt(self.ratio_mean), _fmt(self.e2e_mean_s),
                _fmt(self.e2e_p95_s), str(self.committed), str(self.rejected),
                str(self.ra_failures), str(self.blocks)]

    def extra_row(self) -> list[str]:
        disc = None
        if self.ratio_mean is not None and self.ratio_totals is not None:
            disc = self.ratio_mean - self.ratio_totals
        return [self.scenario, str(self.seed), str(self.payload_bytes), str(self.endorsements),
                str(self.block_size), self.mode, _fmt(self.ratio_totals), _fmt(disc),
                str(self.generated), str(self.dropped), str(self.alarms),
                str(self.ul_data_bytes), str(self.dl_data_bytes), str(self.signaling_bytes)]


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(round(x, 9))


def write_summary_csv(summaries, path, extra_path=None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(s.row())
    if extra_path is not None:
        with Path(extra_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EXTRA_COLUMNS)
            for s in summaries:
                w.writerow(s.extra_row())


def per_tx_csv_text(records, traffic: TrafficLedger) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PER_TX_COLUMNS)
    for r in records:
        t = traffic.per_tx.get(r.tx_id, TxTraffic())
        w.writerow([r.tx_id, r.ue, r.t_generated, _opt(r.t_committed), _opt(r.t_confirmed),
                    t.ul_bytes, t.dl_bytes])
    return buf.getvalue()


def write_per_tx_csv(records, traffic: TrafficLedger, path) -> None:
    Path(path).write_text(per_tx_csv_text(records, traffic))


def _opt(v) -> str:
    return "" if v is None else str(v)


def export_csv(summary: RunSummary | None, records, traffic: TrafficLedger, out_dir,
               stem: str = "run") -> tuple[Path, Path]:
    """Write ``<stem>_summary.csv`` and ``<stem>_pertx.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / f"{stem}_summary.csv"
    per_tx_path = out_dir / f"{stem}_pertx.csv"
    write_summary_csv([] if summary is None else [summary], summary_path)
    write_per_tx_csv(records, traffic, per_tx_path)
    return summary_path, per_tx_path
