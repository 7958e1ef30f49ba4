"""End-to-end monitoring system: sensor UEs, NB-IoT cell and the DLT network.

Actors and the events they receive:

``ue-<i>``      ``generate``, ``radio_rx`` (DL data and RA signaling)
``gw``          eNB-side gateway: ``radio_rx`` (UL data), ``endorsement``,
                ``confirmation``, ``ack``
``peer-<j>``    ``proposal``
``orderer``     ``submit``, ``timeout``
``committer``   ``block``
``server``      ``data`` (conventional NB-IoT application server)

Every hop between the gateway and a DLT node or the application server
costs one backhaul delay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import Mode, ScenarioConfig
from .crypto import KeyPair
from .ledger import (CONTRACT_CLIENT, AlarmEvent, AverageAlarmContract, Block, CommitResult,
                     Confirmation, Confirmer, EndorsedTransaction, EndorsingPeer, Ledger,
                     Membership, Orderer, Rejected, compute_tx_id, encode_alarm, encode_reading,
                     endorsement_response_bytes, make_proposal, proposal_wire_bytes,
                     select_peers, submit_wire_bytes)
from .metrics import (LatencyRecord, RunSummary, TrafficLedger, e2e_stats, ratio_of_totals,
                      ul_dl_ratio)
from .radio import Direction, MsgClass, RadioCell, RadioMessage, UeContext
from .sim import Engine, RunTrace, SimEvent


@dataclass
class _TxState:
    record: LatencyRecord
    status: str = "pending"
    peers: list[str] = field(default_factory=list)
    responses: list = field(default_factory=list)
    proposal: object = None


@dataclass
class SimulationResult:
    config: ScenarioConfig
    seed: int
    summary: RunSummary
    records: list[LatencyRecord]
    traffic: TrafficLedger
    ledger: Ledger | None
    trace: RunTrace
    alarms: list[tuple[int, AlarmEvent]]
    cell: RadioCell

    def trace_bytes(self) -> int:
        """Sum of message sizes over executed ``radio_rx`` events in the trace."""
        total = 0
        for r in self.trace:
            if r.kind == "radio_rx":
                total += int(r.detail.split("|")[2])
        return total


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int | None = None):
        cfg.validate()
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.cal = cfg.calibration
        self.engine = Engine(self.seed)
        self.traffic = TrafficLedger()
        self.cell = RadioCell(self.engine, cfg.cell_config(), self.traffic,
                              on_ra_failure=self._on_ra_failure)
        self.policy = cfg.policy()
        self.members = Membership()
        self.contract = AverageAlarmContract(cfg.contract_threshold, cfg.contract_window)
        self.ledger = Ledger(self.policy, self.members, self.contract)
        self.orderer = Orderer(cfg.orderer_config(), self.policy, self.members)
        self.confirmer = Confirmer(cfg.confirmation)
        self.txs: dict[str, _TxState] = {}
        self.order: list[str] = []
        self.keys: dict[str, KeyPair] = {}
        self.ues: dict[str, UeContext] = {}
        self._remaining: dict[str, int] = {}
        self._ue_index: dict[str, int] = {}
        self._readings: dict[str, int] = {}
        self._peer_busy: dict[str, int] = {}
        self.peers_obj: dict[str, EndorsingPeer] = {}
        self._server_busy = 0
        self._timeout_armed_for: int | None = None
        self.alarm_txs: set[str] = set()
        self.rejected = 0
        self.dropped = 0

        for actor in ("gw", "orderer", "committer", "server"):
            self.engine.register(actor, getattr(self, f"_handle_{actor}"))
        for pid in self.policy.peer_pool:
            kp = self._identity(pid)
            self.peers_obj[pid] = EndorsingPeer(pid, kp, self.members, self.ledger, cfg.payload_bytes)
            self._peer_busy[pid] = 0
            self.engine.register(pid, self._handle_peer)
        self._identity(CONTRACT_CLIENT)

        arrivals = self.engine.stream("arrivals")
        base, extra = divmod(cfg.n_transactions, cfg.n_ues)
        for i in range(cfg.n_ues):
            ue_id = f"ue-{i}"
            self._identity(ue_id)
            ue = UeContext(ue_id, ce_level=cfg.ce_level, cp_ciot_enabled=cfg.cp_ciot,
                           cp_ciot_max_bytes=cfg.cp_ciot_max_bytes)
            self.ues[ue_id] = self.cell.add_ue(ue)
            self._ue_index[ue_id] = i
            self._readings[ue_id] = 0
            self._remaining[ue_id] = base + (1 if i < extra else 0)
            self.engine.register(ue_id, self._handle_ue)
            first = arrivals.randrange(cfg.report_interval)
            if self._remaining[ue_id] > 0 and self._within_duration(first):
                self.engine.schedule(first, ue_id, "generate")

    def _identity(self, actor: str) -> KeyPair:
        kp = KeyPair.from_seed(f"{self.seed}:{actor}")
        self.keys[actor] = kp
        self.members.add(actor, kp)
        return kp

    def _within_duration(self, t: int) -> bool:
        return self.cfg.duration is None or t < self.cfg.duration

    # -- UE ----------------------------------------------------------------

    def _handle_ue(self, ev: SimEvent) -> None:
        if ev.kind == "generate":
            self._generate(ev.target)
        elif ev.kind == "radio_rx":
            self._ue_rx(ev.target, ev.payload)

    def _generate(self, ue_id: str) -> None:
        cfg, eng = self.cfg, self.engine
        now = eng.now
        idx = self._readings[ue_id]
        self._readings[ue_id] += 1
        self._remaining[ue_id] -= 1
        if self._remaining[ue_id] > 0 and self._within_duration(now + cfg.report_interval):
            eng.schedule(now + cfg.report_interval, ue_id, "generate")

        value = cfg.sensor.reading(idx, eng.stream("sensor-noise"))
        payload = encode_reading(idx, value, cfg.payload_bytes)
        nonce = eng.stream("nonce").getrandbits(64)
        ue = self.ues[ue_id]

        if cfg.mode is Mode.BASELINE:
            tx_id = compute_tx_id(ue_id, payload, now, nonce)
            self._new_tx(tx_id, ue_id, now)
            msg = RadioMessage(Direction.UL, cfg.payload_bytes,
                               self.cal.header(MsgClass.BASELINE_DATA, True),
                               MsgClass.BASELINE_DATA, ue_id, "gw", tx_id)
            self.cell.send_ul(ue, msg)
            return

        proposal = make_proposal(ue_id, self.keys[ue_id], payload, now, nonce)
        st = self._new_tx(proposal.tx_id, ue_id, now)
        st.proposal = proposal
        st.peers = select_peers(self.policy, eng.stream("peer-selection"))
        msg = RadioMessage(Direction.UL, proposal_wire_bytes(cfg.payload_bytes),
                           self.cal.header(MsgClass.PROPOSAL, True), MsgClass.PROPOSAL,
                           ue_id, "gw", proposal.tx_id, body=proposal)
        self.cell.send_ul(ue, msg)

    def _new_tx(self, tx_id: str, ue_id: str, now: int) -> _TxState:
        if tx_id in self.txs:
            raise AssertionError(f"tx_id collision {tx_id}")
        st = _TxState(LatencyRecord(tx_id, ue_id, now))
        self.txs[tx_id] = st
        self.order.append(tx_id)
        return st

    def _ue_rx(self, ue_id: str, msg: RadioMessage) -> None:
        now = self.engine.now
        if msg.msg_class is MsgClass.ENDORSEMENT_RESPONSE:
            st = self.txs[msg.tx_id]
            if st.status != "pending":
                return
            st.responses.append(msg.body)
            if len(st.responses) < len(st.peers):
                return
            if any(isinstance(r, Rejected) for r in st.responses):
                self._finish(st, "rejected")
                return
            st.record.t_endorsed = now
            etx = EndorsedTransaction(st.proposal, tuple(st.responses))
            sub = RadioMessage(Direction.UL, submit_wire_bytes(self.cfg.payload_bytes, len(etx.endorsements)),
                               self.cal.header(MsgClass.ORDERER_SUBMIT, True), MsgClass.ORDERER_SUBMIT,
                               ue_id, "gw", etx.tx_id, body=etx)
            self.cell.send_ul(self.ues[ue_id], sub)
        elif msg.msg_class is MsgClass.CONFIRMATION:
            for tx_id in msg.body.tx_ids:
                self.txs[tx_id].record.t_confirmed = now
        elif msg.msg_class is MsgClass.BASELINE_ACK:
            self.txs[msg.tx_id].record.t_confirmed = now

    def _finish(self, st: _TxState, status: str) -> None:
        if st.status != "pending":
            return
        st.status = status
        if status == "rejected":
            self.rejected += 1
        elif status == "dropped":
            self.dropped += 1

    def _on_ra_failure(self, ue: UeContext, dropped: list[RadioMessage]) -> None:
        for msg in dropped:
            if msg.tx_id in self.txs:
                self._finish(self.txs[msg.tx_id], "dropped")

    # -- gateway -----------------------------------------------------------

    def _handle_gw(self, ev: SimEvent) -> None:
        eng, bh = self.engine, self.cal.backhaul_delay
        if ev.kind == "radio_rx":
            msg: RadioMessage = ev.payload
            if msg.msg_class is MsgClass.PROPOSAL:
                st = self.txs[msg.tx_id]
                st.record.t_ul_delivered = eng.now
                for pid in st.peers:
                    eng.after(bh, pid, "proposal", msg.body)
            elif msg.msg_class is MsgClass.ORDERER_SUBMIT:
                eng.after(bh, "orderer", "submit", msg.body)
            elif msg.msg_class is MsgClass.BASELINE_DATA:
                self.txs[msg.tx_id].record.t_ul_delivered = eng.now
                eng.after(bh, "server", "data", msg.tx_id)
        elif ev.kind == "endorsement":
            pid, tx_id, result = ev.payload
            st = self.txs[tx_id]
            size = endorsement_response_bytes(self.cfg.payload_bytes, self.cal.endorse_response)
            msg = RadioMessage(Direction.DL, size, self.cal.header(MsgClass.ENDORSEMENT_RESPONSE, False),
                               MsgClass.ENDORSEMENT_RESPONSE, pid, st.record.ue, tx_id, body=result)
            self.cell.deliver_dl(msg, self.ues[st.record.ue])
        elif ev.kind == "confirmation":
            conf: Confirmation = ev.payload
            msg = RadioMessage(Direction.DL, self.cfg.confirmation.dl_payload_bytes,
                               self.cal.header(MsgClass.CONFIRMATION, False), MsgClass.CONFIRMATION,
                               "committer", conf.client, conf.tx_ids[-1], body=conf)
            self.cell.deliver_dl(msg, self.ues[conf.client])
        elif ev.kind == "ack":
            tx_id = ev.payload
            ue_id = self.txs[tx_id].record.ue
            msg = RadioMessage(Direction.DL, self.cal.ack_payload_bytes,
                               self.cal.header(MsgClass.BASELINE_ACK, False), MsgClass.BASELINE_ACK,
                               "server", ue_id, tx_id)
            self.cell.deliver_dl(msg, self.ues[ue_id])

    # -- baseline application server ---------------------------------------

    def _handle_server(self, ev: SimEvent) -> None:
        tx_id = ev.payload
        now = self.engine.now
        done = max(now, self._server_busy) + self.cal.server_service
        self._server_busy = done
        st = self.txs[tx_id]
        st.record.t_committed = done
        self._finish_committed(st)
        self.engine.schedule(done + self.cal.backhaul_delay, "gw", "ack", tx_id)

    def _finish_committed(self, st: _TxState) -> None:
        if st.status == "pending":
            st.status = "committed"

    # -- endorsing peers ---------------------------------------------------

    def _handle_peer(self, ev: SimEvent) -> None:
        pid = ev.target
        proposal = ev.payload
        done = max(self.engine.now, self._peer_busy[pid]) + self.cal.endorse_service
        self._peer_busy[pid] = done
        try:
            result = self.peers_obj[pid].endorse(proposal)
        except Rejected as r:
            result = r
        self.engine.schedule(done + self.cal.backhaul_delay, "gw", "endorsement",
                             (pid, proposal.tx_id, result))

    # -- ordering service --------------------------------------------------

    def _handle_orderer(self, ev: SimEvent) -> None:
        now = self.engine.now
        if ev.kind == "submit":
            etx: EndorsedTransaction = ev.payload
            try:
                self.orderer.submit_to_orderer(etx, now)
            except Rejected:
                st = self.txs.get(etx.tx_id)
                if st is not None:
                    self._finish(st, "rejected")
                return
        elif ev.kind == "timeout":
            self._timeout_armed_for = None
        while True:
            block = self.orderer.cut_block(now)
            if block is None:
                break
            ready = self.orderer.ready_time(block, now)
            for etx in block.txs:
                st = self.txs.get(etx.tx_id)
                if st is not None:
                    st.record.t_ordered = ready
            self.engine.schedule(ready, "committer", "block", block)
        due = self.orderer.timeout_at()
        if due is not None and self._timeout_armed_for != due:
            self._timeout_armed_for = due
            self.engine.schedule(due, "orderer", "timeout")

    # -- committing peers --------------------------------------------------

    def _handle_committer(self, ev: SimEvent) -> None:
        block: Block = ev.payload
        now = self.engine.now
        result: CommitResult = self.ledger.validate_and_commit(block)
        confirmed = []
        for etx, ok in zip(block.txs, result.valid):
            if etx.tx_id in self.alarm_txs:
                continue
            st = self.txs.get(etx.tx_id)
            if st is None:
                continue
            if ok:
                st.record.t_committed = now
                self._finish_committed(st)
                confirmed.append((etx.tx_id, etx.proposal.client))
            else:
                self._finish(st, "rejected")
        for conf in self.confirmer.emit(confirmed):
            self.engine.after(self.cal.backhaul_delay, "gw", "confirmation", conf)
        for alarm in result.alarms:
            self._raise_alarm(alarm)

    def _raise_alarm(self, alarm: AlarmEvent) -> None:
        """The contract records its alarm as a transaction inside the DLT network."""
        eng = self.engine
        idx = self._ue_index[alarm.sensor]
        payload = encode_alarm(idx, alarm.mean, alarm.threshold)
        nonce = eng.stream("nonce").getrandbits(64)
        proposal = make_proposal(CONTRACT_CLIENT, self.keys[CONTRACT_CLIENT], payload, eng.now, nonce)
        self.alarm_txs.add(proposal.tx_id)
        endorsements = []
        for pid in select_peers(self.policy, eng.stream("peer-selection")):
            try:
                endorsements.append(self.peers_obj[pid].endorse(proposal))
            except Rejected:
                pass
        etx = EndorsedTransaction(proposal, tuple(endorsements))
        eng.log("contract", "alarm", f"{alarm.sensor}|{alarm.mean:.3f}|{proposal.tx_id}")
        eng.after(self.cal.endorse_service, "orderer", "submit", etx)

    # -- run ---------------------------------------------------------------

    def run(self) -> SimulationResult:
        trace = self.engine.run()
        return self._result(trace)

    def _result(self, trace: RunTrace) -> SimulationResult:
        cfg = self.cfg
        records = [self.txs[t].record for t in self.order]
        committed = sum(1 for t in self.order if self.txs[t].status == "committed")
        completed = [r for r in records if r.e2e_us is not None]
        stats = e2e_stats(completed) if completed else None
        alarms_committed = sum(1 for t in self.ledger.committed_tx_ids() if t in self.alarm_txs)
        summary = RunSummary(
            scenario=cfg.name, seed=self.seed, payload_bytes=cfg.payload_bytes,
            endorsements=cfg.endorsements if cfg.mode is Mode.DLT else 0,
            block_size=cfg.block_size if cfg.mode is Mode.DLT else 0,
            mode=cfg.mode.value,
            ratio_mean=ul_dl_ratio(self.traffic), ratio_totals=ratio_of_totals(self.traffic),
            e2e_mean_s=stats.mean if stats else None, e2e_p95_s=stats.p95 if stats else None,
            generated=len(self.order), committed=committed, rejected=self.rejected,
            dropped=self.dropped, ra_failures=self.cell.ra_failures, blocks=self.ledger.height,
            alarms=alarms_committed,
            ul_data_bytes=self.traffic.total_bytes(Direction.UL, data_only=True),
            dl_data_bytes=self.traffic.total_bytes(Direction.DL, data_only=True),
            signaling_bytes=self.traffic.signaling_bytes,
        )
        return SimulationResult(cfg, self.seed, summary, records, self.traffic,
                                self.ledger if cfg.mode is Mode.DLT else None, self.engine.trace,
                                list(self.ledger.alarm_log), self.cell)


def simulate(cfg: ScenarioConfig, seed: int | None = None) -> SimulationResult:
    return Simulation(cfg, seed).run()
