"""NB-IoT access and transmission model.

A single cell with one shared UL carrier (NPUSCH) and one shared DL carrier
(PDSCH), both scheduled FIFO. UEs acquire MIB/SIB1 once after power-on,
then contend on NPRACH occasions whenever they leave RRC idle.
"""

from __future__ import annotations

import itertools
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .sim import Engine, SimEvent, ms, seconds


class Direction(str, Enum):
    UL = "UL"
    DL = "DL"


class MsgClass(str, Enum):
    PROPOSAL = "proposal"
    ENDORSEMENT_RESPONSE = "endorsement_response"
    ORDERER_SUBMIT = "orderer_submit"
    CONFIRMATION = "confirmation"
    BASELINE_DATA = "baseline_data"
    BASELINE_ACK = "baseline_ack"
    SIGNALING = "signaling"


DATA_CLASSES = frozenset(MsgClass) - {MsgClass.SIGNALING}
UL_CLASSES = frozenset({MsgClass.PROPOSAL, MsgClass.ORDERER_SUBMIT, MsgClass.BASELINE_DATA})
DL_CLASSES = frozenset({MsgClass.ENDORSEMENT_RESPONSE, MsgClass.CONFIRMATION, MsgClass.BASELINE_ACK})

RA_SIGNALING_BYTES = 20


class TimingModel(str, Enum):
    RESOURCE_UNIT = "resource-unit"
    PEAK_RATE = "peak-rate"


def _default_repetitions() -> dict[int, int]:
    return {0: 1, 1: 2, 2: 8}


@dataclass
class CellConfig:
    mib_period: int = ms(640)
    sib1_period: int = ms(2560)
    nprach_period: int = ms(40)
    preamble_pool: int = 48
    rar_window: int = ms(10)
    max_ra_attempts: int = 10
    backoff_max: int = ms(256)
    ru_duration: int = ms(8)
    dl_subframe: int = ms(1)
    ul_tbs_bits_per_ru: int = 256
    dl_tbs_bits_per_subframe: int = 224
    repetitions_per_ce: dict[int, int] = field(default_factory=_default_repetitions)
    ul_peak_rate: int = 250_000
    dl_peak_rate: int = 226_700
    timing_model: TimingModel = TimingModel.RESOURCE_UNIT
    # NAS setup folded into one constant; skipped when CP-CIoT is used.
    connected_setup: int = ms(100)
    inactivity_timer: int = seconds(20)
    dl_queue_limit: int = 16

    def violations(self) -> list[str]:
        out = []
        if self.preamble_pool < 1:
            out.append(f"cell.preamble_pool={self.preamble_pool} must be >= 1")
        for name in ("mib_period", "sib1_period", "nprach_period", "ru_duration", "dl_subframe"):
            v = getattr(self, name)
            if v <= 0:
                out.append(f"cell.{name}={v} must be > 0")
        for name in ("rar_window", "backoff_max", "connected_setup", "inactivity_timer"):
            v = getattr(self, name)
            if v < 0:
                out.append(f"cell.{name}={v} must be >= 0")
        if self.max_ra_attempts < 1:
            out.append(f"cell.max_ra_attempts={self.max_ra_attempts} must be >= 1")
        for name in ("ul_tbs_bits_per_ru", "dl_tbs_bits_per_subframe", "ul_peak_rate", "dl_peak_rate"):
            v = getattr(self, name)
            if v <= 0:
                out.append(f"cell.{name}={v} must be > 0")
        for ce in (0, 1, 2):
            rep = self.repetitions_per_ce.get(ce)
            if rep is None or not 1 <= rep <= 1024:
                out.append(f"cell.repetitions_ce{ce}={rep} must be in [1, 1024]")
        if self.dl_queue_limit < 0:
            out.append(f"cell.dl_queue_limit={self.dl_queue_limit} must be >= 0")
        return out

    def repetitions(self, ce: int) -> int:
        return self.repetitions_per_ce[ce]


_msg_ids = itertools.count()


@dataclass(eq=False)
class RadioMessage:
    direction: Direction
    app_payload_bytes: int
    header_bytes: int
    msg_class: MsgClass
    src: str
    dst: str
    tx_id: str | None = None
    body: Any = None
    msg_id: int = field(default_factory=lambda: next(_msg_ids))

    @property
    def size(self) -> int:
        return self.app_payload_bytes + self.header_bytes

    def describe(self) -> str:
        return f"{self.msg_class.value}|{self.direction.value}|{self.size}|{self.tx_id or '-'}"


class RrcState(str, Enum):
    IDLE = "idle"
    CONNECTED = "connected"


@dataclass
class UeContext:
    id: str
    rrc_state: RrcState = RrcState.IDLE
    ce_level: int = 0
    ra_attempts: int = 0
    pending_ul: deque = field(default_factory=deque)
    cp_ciot_enabled: bool = False
    cp_ciot_max_bytes: int = 100
    synced: bool = False
    # idle | syncing | access | setup | ready
    phase: str = "idle"
    held_dl: deque = field(default_factory=deque)
    last_activity: int = 0
    inactivity_armed: bool = False
    piggyback_used: bool = False

    @property
    def can_send_data(self) -> bool:
        return self.rrc_state is RrcState.CONNECTED and self.phase == "ready"


def next_boundary(t: int, period: int) -> int:
    return -(-t // period) * period


def acquire_system_info(ue: UeContext, wake_time: int, cfg: CellConfig) -> int:
    """Time at which MIB-NB and then SIB1-NB have both been received."""
    if ue.rrc_state is not RrcState.IDLE:
        raise RuntimeError(f"{ue.id}: system information is acquired in idle mode")
    mib = next_boundary(wake_time, cfg.mib_period)
    return next_boundary(mib, cfg.sib1_period)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def ul_duration(payload_total_bytes: int, ce: int, cfg: CellConfig) -> int:
    if payload_total_bytes <= 0:
        return 0
    bits = payload_total_bytes * 8
    rep = cfg.repetitions(ce)
    if cfg.timing_model is TimingModel.PEAK_RATE:
        return _ceil_div(bits * rep * 1_000_000, cfg.ul_peak_rate)
    return _ceil_div(bits, cfg.ul_tbs_bits_per_ru) * cfg.ru_duration * rep


def dl_duration(payload_total_bytes: int, ce: int, cfg: CellConfig) -> int:
    if payload_total_bytes <= 0:
        return 0
    bits = payload_total_bytes * 8
    rep = cfg.repetitions(ce)
    if cfg.timing_model is TimingModel.PEAK_RATE:
        return _ceil_div(bits * rep * 1_000_000, cfg.dl_peak_rate)
    return _ceil_div(bits, cfg.dl_tbs_bits_per_subframe) * cfg.dl_subframe * rep


def resolve_preambles(choices: list[int]) -> list[bool]:
    """Success flag per contender: a preamble chosen by two or more UEs collides."""
    counts = Counter(choices)
    return [counts[c] == 1 for c in choices]


def contend(n_ues: int, pool: int, rng) -> list[bool]:
    """One NPRACH occasion with ``n_ues`` contenders drawing uniformly from ``pool``."""
    return resolve_preambles([rng.randrange(pool) for _ in range(n_ues)])


class SequencingError(RuntimeError):
    """A UE was asked to transmit in a state that does not allow it."""


class RadioCell:
    """eNB-side radio model: access procedure, carriers and byte accounting.

    Messages are recorded in ``traffic`` when their transmission is
    scheduled, and handed to ``msg.dst`` as a ``radio_rx`` event at the
    delivery time.
    """

    actor = "enb"

    def __init__(self, engine: Engine, cfg: CellConfig, traffic,
                 on_ra_failure: Callable[[UeContext, list[RadioMessage]], None] | None = None,
                 on_dl_overflow: Callable[[UeContext, RadioMessage], None] | None = None):
        self.engine = engine
        self.cfg = cfg
        self.traffic = traffic
        self.on_ra_failure = on_ra_failure
        self.on_dl_overflow = on_dl_overflow
        self.ues: dict[str, UeContext] = {}
        self.ul_free_at = 0
        self.dl_free_at = 0
        self._occasions: dict[int, list[str]] = {}
        self._resolved_upto = -1
        self.ra_failures = 0
        self.ra_successes = 0
        self.collisions = 0
        self.dl_overflow = 0
        self.piggybacked = 0
        engine.register(self.actor, self.handle)

    def add_ue(self, ue: UeContext) -> UeContext:
        self.ues[ue.id] = ue
        return ue

    # -- event dispatch -----------------------------------------------------

    def handle(self, ev: SimEvent) -> None:
        getattr(self, "_on_" + ev.kind)(ev)

    # -- access procedure ---------------------------------------------------

    def wake(self, ue: UeContext) -> None:
        """Begin leaving idle mode: system information (first time) then RA."""
        if ue.phase != "idle":
            return
        now = self.engine.now
        if not ue.synced:
            ue.phase = "syncing"
            self.engine.schedule(acquire_system_info(ue, now, self.cfg), self.actor, "sync_done", ue.id)
        else:
            ue.phase = "access"
            self._register_for_occasion(ue, now)

    def _on_radio_rx(self, ev: SimEvent) -> None:
        pass  # msg3 arriving at the eNB; already accounted for

    def _on_sync_done(self, ev: SimEvent) -> None:
        ue = self.ues[ev.payload]
        ue.synced = True
        ue.phase = "access"
        self._register_for_occasion(ue, self.engine.now)

    def _register_for_occasion(self, ue: UeContext, t: int) -> None:
        occ = next_boundary(t, self.cfg.nprach_period)
        if occ <= self._resolved_upto:
            occ = self._resolved_upto + self.cfg.nprach_period
        contenders = self._occasions.get(occ)
        if contenders is None:
            contenders = self._occasions[occ] = []
            self.engine.schedule(occ, self.actor, "nprach", occ)
        contenders.append(ue.id)

    def _on_nprach(self, ev: SimEvent) -> None:
        occ = ev.payload
        self._resolved_upto = occ
        ue_ids = self._occasions.pop(occ)
        rng = self.engine.stream("preamble")
        outcome = resolve_preambles([rng.randrange(self.cfg.preamble_pool) for _ in ue_ids])
        for ue_id, ok in zip(ue_ids, outcome):
            ue = self.ues[ue_id]
            ue.ra_attempts += 1
            if ok:
                self._ra_success(ue)
                continue
            self.collisions += 1
            if ue.ra_attempts >= self.cfg.max_ra_attempts:
                self._ra_failed(ue)
            else:
                backoff = self.engine.stream("backoff").randint(0, self.cfg.backoff_max)
                self.engine.after(backoff, self.actor, "ra_retry", ue.id)

    def _on_ra_retry(self, ev: SimEvent) -> None:
        self._register_for_occasion(self.ues[ev.payload], self.engine.now)

    def _ra_success(self, ue: UeContext) -> None:
        cfg = self.cfg
        now = self.engine.now
        t3 = now + cfg.rar_window + ul_duration(RA_SIGNALING_BYTES, ue.ce_level, cfg)
        t4 = t3 + dl_duration(RA_SIGNALING_BYTES, ue.ce_level, cfg)
        self._signal(Direction.UL, ue.id, self.actor, t3)
        self._signal(Direction.DL, self.actor, ue.id, t4)
        self.engine.schedule(t4, self.actor, "ra_complete", ue.id)

    def _signal(self, direction: Direction, src: str, dst: str, at: int) -> None:
        msg = RadioMessage(direction, RA_SIGNALING_BYTES, 0, MsgClass.SIGNALING, src, dst)
        self.traffic.record_message(msg)
        self.engine.schedule(at, dst, "radio_rx", msg)

    def _ra_failed(self, ue: UeContext) -> None:
        self.ra_failures += 1
        ue.ra_attempts = 0
        ue.phase = "idle"
        dropped = list(ue.pending_ul)
        ue.pending_ul.clear()
        self.engine.log(ue.id, "ra_failed", f"dropped={len(dropped)}")
        if self.on_ra_failure is not None:
            self.on_ra_failure(ue, dropped)

    def _on_ra_complete(self, ev: SimEvent) -> None:
        ue = self.ues[ev.payload]
        now = self.engine.now
        ue.rrc_state = RrcState.CONNECTED
        ue.ra_attempts = 0
        ue.piggyback_used = False
        self.ra_successes += 1
        self._touch(ue, now)
        if ue.cp_ciot_enabled:
            if ue.pending_ul and ue.pending_ul[0].size <= ue.cp_ciot_max_bytes:
                msg = ue.pending_ul.popleft()
                ue.piggyback_used = True
                self.piggybacked += 1
                self.traffic.record_message(msg, msg.tx_id)
                self.engine.schedule(now, msg.dst, "radio_rx", msg)
            self._ready(ue)
        else:
            ue.phase = "setup"
            self.engine.after(self.cfg.connected_setup, self.actor, "setup_done", ue.id)

    def _on_setup_done(self, ev: SimEvent) -> None:
        self._ready(self.ues[ev.payload])

    def _ready(self, ue: UeContext) -> None:
        ue.phase = "ready"
        while ue.pending_ul:
            self.transmit_ul(ue, ue.pending_ul.popleft())
        while ue.held_dl:
            self.deliver_dl(ue.held_dl.popleft(), ue)
        self._touch(ue, self.engine.now)

    # -- inactivity -> idle --------------------------------------------------

    def _touch(self, ue: UeContext, t: int) -> None:
        ue.last_activity = max(ue.last_activity, t)
        if not ue.inactivity_armed:
            ue.inactivity_armed = True
            self.engine.schedule(ue.last_activity + self.cfg.inactivity_timer, self.actor,
                                 "inactivity", ue.id)

    def _on_inactivity(self, ev: SimEvent) -> None:
        ue = self.ues[ev.payload]
        now = self.engine.now
        due = ue.last_activity + self.cfg.inactivity_timer
        if now < due:
            self.engine.schedule(due, self.actor, "inactivity", ue.id)
            return
        ue.inactivity_armed = False
        if ue.phase == "ready" and not ue.pending_ul:
            ue.rrc_state = RrcState.IDLE
            ue.phase = "idle"
            self.engine.log(ue.id, "rrc_idle")

    # -- data transfer ------------------------------------------------------

    def send_ul(self, ue: UeContext, msg: RadioMessage) -> int | None:
        """Transmit now if possible, otherwise queue and trigger access."""
        if ue.can_send_data:
            return self.transmit_ul(ue, msg)
        ue.pending_ul.append(msg)
        if ue.phase == "idle":
            self.wake(ue)
        return None

    def transmit_ul(self, ue: UeContext, msg: RadioMessage) -> int:
        if not ue.can_send_data:
            raise SequencingError(f"{ue.id} cannot transmit {msg.msg_class.value} in phase {ue.phase}")
        if msg.direction is not Direction.UL:
            raise SequencingError("transmit_ul needs an UL message")
        start = max(self.engine.now, self.ul_free_at)
        end = start + ul_duration(msg.size, ue.ce_level, self.cfg)
        self.ul_free_at = end
        self.traffic.record_message(msg, msg.tx_id)
        self.engine.schedule(end, msg.dst, "radio_rx", msg)
        self._touch(ue, end)
        return end

    def deliver_dl(self, msg: RadioMessage, ue: UeContext) -> int | None:
        """Schedule a DL unicast; held (bounded) while the UE is not connected."""
        if msg.direction is not Direction.DL:
            raise SequencingError("deliver_dl needs a DL message")
        if not ue.can_send_data:
            if len(ue.held_dl) >= self.cfg.dl_queue_limit:
                self.dl_overflow += 1
                if self.on_dl_overflow is not None:
                    self.on_dl_overflow(ue, msg)
                return None
            ue.held_dl.append(msg)
            return None
        start = max(self.engine.now, self.dl_free_at)
        end = start + dl_duration(msg.size, ue.ce_level, self.cfg)
        self.dl_free_at = end
        self.traffic.record_message(msg, msg.tx_id)
        self.engine.schedule(end, msg.dst, "radio_rx", msg)
        self._touch(ue, end)
        return end
