"""Permissioned ledger: endorse, order, validate, commit, confirm.

Fabric-style flow reduced to what the monitoring workload needs. Conflict
detection is by transaction id only; payloads are append-only sensor
records.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

from . import crypto
from .crypto import DIGEST_LEN, SIGNATURE_LEN, KeyPair
from .radio import Direction, MsgClass, RadioMessage
from .sim import ms, seconds

READING_MAGIC = b"RD"
_READING = struct.Struct(">2sId")
READING_MIN_BYTES = _READING.size
ALARM_MAGIC = b"AL"
_ALARM = struct.Struct(">2sIdd")

CONTRACT_CLIENT = "contract"


class Rejected(Exception):
    """A proposal or endorsed transaction was refused; ``reason`` says why."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class ChainError(RuntimeError):
    pass


# -- payload formats ---------------------------------------------------------

def encode_reading(seq: int, value: float, size: int) -> bytes:
    if size < READING_MIN_BYTES:
        raise ValueError(f"payload of {size} B cannot hold a {READING_MIN_BYTES} B reading")
    return _READING.pack(READING_MAGIC, seq & 0xFFFFFFFF, value).ljust(size, b"\0")


def decode_reading(payload: bytes) -> tuple[int, float] | None:
    if len(payload) < READING_MIN_BYTES or payload[:2] != READING_MAGIC:
        return None
    _, seq, value = _READING.unpack_from(payload)
    return seq, value


def encode_alarm(sensor_index: int, mean: float, threshold: float) -> bytes:
    return _ALARM.pack(ALARM_MAGIC, sensor_index, mean, threshold)


# -- transactions ------------------------------------------------------------

@dataclass(frozen=True)
class TransactionProposal:
    tx_id: str
    client: str
    payload: bytes
    timestamp: int
    nonce: int
    signature: bytes = b""

    @property
    def payload_bytes(self) -> int:
        return len(self.payload)

    @cached_property
    def _content(self) -> bytes:
        return _encode_content(self.client, self.payload, self.timestamp, self.nonce)

    def content(self) -> bytes:
        return self._content

    @cached_property
    def _digest(self) -> bytes:
        return crypto.digest(bytes.fromhex(self.tx_id) + self._content)

    def digest(self) -> bytes:
        """What the client and the endorsers sign."""
        return self._digest


_CONTENT_TAIL = struct.Struct(">QQI")


def _encode_content(client: str, payload: bytes, timestamp: int, nonce: int) -> bytes:
    c = client.encode()
    return (struct.pack(">H", len(c)) + c + _CONTENT_TAIL.pack(timestamp, nonce, len(payload))
            + payload)


def compute_tx_id(client: str, payload: bytes, timestamp: int, nonce: int) -> str:
    return crypto.digest(_encode_content(client, payload, timestamp, nonce)).hex()


def make_proposal(client: str, keys: KeyPair, payload: bytes, timestamp: int,
                  nonce: int) -> TransactionProposal:
    content = _encode_content(client, payload, timestamp, nonce)
    raw_id = crypto.digest(content)
    sig = crypto.sign(keys.secret, crypto.digest(raw_id + content))
    return TransactionProposal(raw_id.hex(), client, payload, timestamp, nonce, sig)


@dataclass(frozen=True)
class Endorsement:
    peer_id: str
    signature: bytes


@dataclass(frozen=True)
class EndorsedTransaction:
    proposal: TransactionProposal
    endorsements: tuple[Endorsement, ...]

    @property
    def tx_id(self) -> str:
        return self.proposal.tx_id


class EndorseResponse(str, Enum):
    DIGEST = "digest"
    FULL_PROPOSAL = "full_proposal"


# Application-layer sizes of the DLT messages carried over the radio.
def proposal_wire_bytes(payload_bytes: int) -> int:
    return payload_bytes + SIGNATURE_LEN


def endorsement_response_bytes(payload_bytes: int, mode: EndorseResponse) -> int:
    if mode is EndorseResponse.FULL_PROPOSAL:
        return proposal_wire_bytes(payload_bytes) + SIGNATURE_LEN
    return DIGEST_LEN + SIGNATURE_LEN


def submit_wire_bytes(payload_bytes: int, n_endorsements: int) -> int:
    return proposal_wire_bytes(payload_bytes) + n_endorsements * SIGNATURE_LEN


# -- policy and peers --------------------------------------------------------

@dataclass
class EndorsementPolicy:
    required_E: int
    peer_pool: list[str]

    def violations(self) -> list[str]:
        if not 1 <= self.required_E <= len(self.peer_pool):
            return [f"ledger.endorsements={self.required_E} must be in [1, {len(self.peer_pool)}] "
                    f"(peer pool size)"]
        if len(set(self.peer_pool)) != len(self.peer_pool):
            return ["ledger peer pool contains duplicate peer ids"]
        return []


def select_peers(policy: EndorsementPolicy, rng) -> list[str]:
    return rng.sample(policy.peer_pool, policy.required_E)


class Membership:
    """Public keys of every identity on the network."""

    def __init__(self) -> None:
        self.public: dict[str, bytes] = {}

    def add(self, actor: str, keys: KeyPair) -> None:
        self.public[actor] = keys.public

    def verify(self, actor: str, message: bytes, sig: bytes) -> bool:
        pub = self.public.get(actor)
        return pub is not None and crypto.verify(pub, message, sig)


def count_valid_endorsements(etx: EndorsedTransaction, policy: EndorsementPolicy,
                             members: Membership) -> int:
    d = etx.proposal.digest()
    pool = set(policy.peer_pool)
    valid = set()
    for e in etx.endorsements:
        if e.peer_id in pool and e.peer_id not in valid and members.verify(e.peer_id, d, e.signature):
            valid.add(e.peer_id)
    return len(valid)


def check_proposal(proposal: TransactionProposal, members: Membership,
                   expected_payload: int | None) -> str | None:
    """Reason the proposal is malformed or unsigned, or ``None`` if it is fine."""
    if proposal.client not in members.public or len(proposal.tx_id) != 2 * DIGEST_LEN:
        return "malformed"
    try:
        d = proposal.digest()
    except ValueError:
        return "malformed"
    if not members.verify(proposal.client, d, proposal.signature):
        return "bad_signature"
    if crypto.digest(proposal.content()).hex() != proposal.tx_id:
        return "malformed"
    if proposal.client != CONTRACT_CLIENT:
        if expected_payload is not None and proposal.payload_bytes != expected_payload:
            return "malformed"
        if decode_reading(proposal.payload) is None:
            return "malformed"
    return None


class EndorsingPeer:
    def __init__(self, peer_id: str, keys: KeyPair, members: Membership, ledger: Ledger,
                 expected_payload: int | None = None):
        self.peer_id = peer_id
        self.keys = keys
        self.members = members
        self.ledger = ledger
        self.expected_payload = expected_payload
        self.endorsed = 0
        self.rejected = 0

    def endorse(self, proposal: TransactionProposal) -> Endorsement:
        """Sign the proposal digest, or raise :class:`Rejected`."""
        reason = check_proposal(proposal, self.members, self.expected_payload)
        if reason is None and self.ledger.has_tx(proposal.tx_id):
            reason = "duplicate"
        if reason is not None:
            self.rejected += 1
            raise Rejected(reason, proposal.tx_id)
        self.endorsed += 1
        return Endorsement(self.peer_id, crypto.sign(self.keys.secret, proposal.digest()))


# -- ordering ----------------------------------------------------------------

@dataclass
class OrdererConfig:
    block_size_b: int = 30
    batch_timeout: int = seconds(2)
    block_proc_base: int = ms(50)
    block_proc_per_tx: int = ms(10)
    # Cost per configured block slot; zero keeps the cost linear in |txs| only.
    block_proc_per_slot: int = 0

    def violations(self) -> list[str]:
        out = []
        if self.block_size_b < 1:
            out.append(f"ledger.block_size={self.block_size_b} must be >= 1")
        if self.batch_timeout <= 0:
            out.append(f"ledger.batch_timeout={self.batch_timeout} must be > 0")
        for name in ("block_proc_base", "block_proc_per_tx", "block_proc_per_slot"):
            if getattr(self, name) < 0:
                out.append(f"ledger.{name}={getattr(self, name)} must be >= 0")
        return out

    def processing_time(self, n_txs: int) -> int:
        return (self.block_proc_base + self.block_proc_per_tx * n_txs
                + self.block_proc_per_slot * self.block_size_b)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[EndorsedTransaction, ...]
    block_hash: bytes

    @classmethod
    def build(cls, height: int, prev_hash: bytes, txs: Iterable[EndorsedTransaction]) -> Block:
        txs = tuple(txs)
        return cls(height, prev_hash, txs, crypto.digest(encode_block_body(height, prev_hash, txs)))

    def serialize(self) -> bytes:
        return encode_block_body(self.height, self.prev_hash, self.txs) + self.block_hash


GENESIS_HASH = bytes(DIGEST_LEN)
_HDR = struct.Struct(">3sQ32sI")


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def encode_block_body(height: int, prev_hash: bytes, txs: tuple[EndorsedTransaction, ...]) -> bytes:
    parts = [_HDR.pack(b"BLK", height, prev_hash, len(txs))]
    for etx in txs:
        p = etx.proposal
        parts.append(bytes.fromhex(p.tx_id))
        parts.append(_lp(p.content()))
        parts.append(_lp(p.signature))
        parts.append(struct.pack(">H", len(etx.endorsements)))
        for e in etx.endorsements:
            parts.append(_lp(e.peer_id.encode()))
            parts.append(_lp(e.signature))
    return b"".join(parts)


def verify_chain_bytes(blocks: list[bytes]) -> bool:
    """Check every block hash and every back-link, starting from genesis."""
    prev = GENESIS_HASH
    for i, raw in enumerate(blocks):
        if len(raw) < _HDR.size + DIGEST_LEN:
            return False
        body, h = raw[:-DIGEST_LEN], raw[-DIGEST_LEN:]
        if crypto.digest(body) != h:
            return False
        magic, height, prev_hash, _ = _HDR.unpack_from(body)
        if magic != b"BLK" or height != i or prev_hash != prev:
            return False
        prev = h
    return True


@dataclass
class PendingTx:
    arrival: int
    etx: EndorsedTransaction


class Orderer:
    """Single logical ordering service cutting blocks by size or timeout."""

    def __init__(self, cfg: OrdererConfig, policy: EndorsementPolicy, members: Membership):
        self.cfg = cfg
        self.policy = policy
        self.members = members
        self.pending: deque[PendingTx] = deque()
        self.height = 0
        self.tip = GENESIS_HASH
        self.accepted = 0
        self.rejected = 0
        self.busy_until = 0

    def submit_to_orderer(self, etx: EndorsedTransaction, now: int) -> None:
        if count_valid_endorsements(etx, self.policy, self.members) < self.policy.required_E:
            self.rejected += 1
            raise Rejected("insufficient_endorsements", etx.tx_id)
        self.accepted += 1
        self.pending.append(PendingTx(now, etx))

    def cut_due(self, now: int) -> bool:
        if not self.pending:
            return False
        return (len(self.pending) >= self.cfg.block_size_b
                or now - self.pending[0].arrival >= self.cfg.batch_timeout)

    def timeout_at(self) -> int | None:
        return self.pending[0].arrival + self.cfg.batch_timeout if self.pending else None

    def cut_block(self, now: int) -> Block | None:
        if not self.cut_due(now):
            return None
        n = min(len(self.pending), self.cfg.block_size_b)
        txs = [self.pending.popleft().etx for _ in range(n)]
        block = Block.build(self.height, self.tip, txs)
        self.height += 1
        self.tip = block.block_hash
        return block

    def ready_time(self, block: Block, cut_time: int) -> int:
        """Blocks are processed one at a time, so delivery order equals cut order."""
        ready = max(cut_time, self.busy_until) + self.cfg.processing_time(len(block.txs))
        self.busy_until = ready
        return ready


# -- commit ------------------------------------------------------------------

class WorldState:
    def __init__(self) -> None:
        self._data: dict[str, object] = {}

    def put(self, key: str, value) -> None:
        self._data[key] = value

    def get(self, key: str, default=None):
        return self._data.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def items(self):
        return self._data.items()


def query(state: WorldState, key: str):
    return state.get(key)


@dataclass(frozen=True)
class AlarmEvent:
    sensor: str
    mean: float
    threshold: float
    n_readings: int


def evaluate_contract(window, threshold: float, window_len: int,
                      sensor: str = "") -> AlarmEvent | None:
    """Alarm if the mean of the last ``window_len`` readings exceeds ``threshold``.

    Fewer than ``window_len`` readings are averaged as they are.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    recent = list(window)[-window_len:]
    if not recent:
        return None
    mean = sum(recent) / len(recent)
    if mean > threshold:
        return AlarmEvent(sensor, mean, threshold, len(recent))
    return None


class AverageAlarmContract:
    """Per-sensor sliding-window average with a threshold alarm."""

    def __init__(self, threshold: float, window_len: int):
        if window_len < 1:
            raise ValueError("window_len must be >= 1")
        self.threshold = threshold
        self.window_len = window_len
        self.windows: dict[str, deque] = {}

    def observe(self, sensor: str, value: float) -> None:
        w = self.windows.get(sensor)
        if w is None:
            w = self.windows[sensor] = deque(maxlen=self.window_len)
        w.append(value)

    def evaluate(self, sensor: str) -> AlarmEvent | None:
        return evaluate_contract(self.windows.get(sensor, ()), self.threshold, self.window_len, sensor)

    def mean(self, sensor: str) -> float | None:
        w = self.windows.get(sensor)
        return sum(w) / len(w) if w else None


@dataclass
class CommitResult:
    height: int
    valid: list[bool]
    reasons: list[str | None]
    alarms: list[AlarmEvent] = field(default_factory=list)

    @property
    def committed(self) -> int:
        return sum(self.valid)


class Ledger:
    """The peers' copy of the chain plus world state."""

    def __init__(self, policy: EndorsementPolicy, members: Membership,
                 contract: AverageAlarmContract | None = None):
        self.policy = policy
        self.members = members
        self.contract = contract
        self.blocks: list[Block] = []
        self.validity: list[list[bool]] = []
        self.state = WorldState()
        self._committed: set[str] = set()
        self.alarm_log: list[tuple[int, AlarmEvent]] = []

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> bytes:
        return self.blocks[-1].block_hash if self.blocks else GENESIS_HASH

    def has_tx(self, tx_id: str) -> bool:
        return tx_id in self._committed

    def validate_tx(self, etx: EndorsedTransaction, seen: set[str]) -> str | None:
        if etx.tx_id in self._committed or etx.tx_id in seen:
            return "duplicate"
        reason = check_proposal(etx.proposal, self.members, None)
        if reason is not None:
            return reason
        if count_valid_endorsements(etx, self.policy, self.members) < self.policy.required_E:
            return "endorsement_policy"
        return None

    def validate_and_commit(self, block: Block) -> CommitResult:
        if block.prev_hash != self.tip or block.height != self.height:
            raise ChainError(f"block {block.height} does not extend tip at height {self.height}")
        if crypto.digest(encode_block_body(block.height, block.prev_hash, block.txs)) != block.block_hash:
            raise ChainError(f"block {block.height} hash mismatch")
        seen: set[str] = set()
        valid, reasons = [], []
        for etx in block.txs:
            reason = self.validate_tx(etx, seen)
            seen.add(etx.tx_id)
            valid.append(reason is None)
            reasons.append(reason)
        self.blocks.append(block)
        self.validity.append(valid)
        touched: list[str] = []
        for etx, ok in zip(block.txs, valid):
            if not ok:
                continue
            self._committed.add(etx.tx_id)
            self._apply(etx, touched)
        result = CommitResult(block.height, valid, reasons)
        if self.contract is not None:
            for sensor in touched:
                alarm = self.contract.evaluate(sensor)
                self.state.put(f"avg/{sensor}", self.contract.mean(sensor))
                if alarm is not None:
                    result.alarms.append(alarm)
                    self.alarm_log.append((block.height, alarm))
        return result

    def _apply(self, etx: EndorsedTransaction, touched: list[str]) -> None:
        p = etx.proposal
        if p.client == CONTRACT_CLIENT:
            _, idx, mean, thr = _ALARM.unpack_from(p.payload)
            self.state.put(f"alarm/{idx}", {"mean": mean, "threshold": thr, "tx_id": p.tx_id})
            return
        reading = decode_reading(p.payload)
        self.state.put(f"sensor/{p.client}", reading[1])
        self.state.put(f"tx/{p.client}", p.tx_id)
        if self.contract is not None:
            self.contract.observe(p.client, reading[1])
            if p.client not in touched:
                touched.append(p.client)

    def committed_tx_ids(self) -> list[str]:
        return [etx.tx_id for blk, ok in zip(self.blocks, self.validity)
                for etx, v in zip(blk.txs, ok) if v]

    def serialized_blocks(self) -> list[bytes]:
        return [b.serialize() for b in self.blocks]

    def verify_chain(self) -> bool:
        return verify_chain_bytes(self.serialized_blocks())

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.jsonl())

    def jsonl(self) -> str:
        lines = []
        for blk, ok in zip(self.blocks, self.validity):
            rec = {
                "height": blk.height,
                "prev_hash": blk.prev_hash.hex(),
                "block_hash": blk.block_hash.hex(),
                "txs": [{
                    "tx_id": etx.tx_id,
                    "client": etx.proposal.client,
                    "ts": etx.proposal.timestamp,
                    "payload_size": etx.proposal.payload_bytes,
                    "endorsers": [e.peer_id for e in etx.endorsements],
                    "valid": v,
                } for etx, v in zip(blk.txs, ok)],
            }
            lines.append(json.dumps(rec, sort_keys=True) + "\n")
        return "".join(lines)


# -- confirmations -----------------------------------------------------------

class ConfirmationMode(str, Enum):
    PER_TX = "per_tx"
    PER_K_TX = "per_k_tx"
    PER_BLOCK = "per_block"


@dataclass
class ConfirmationPolicy:
    mode: ConfirmationMode = ConfirmationMode.PER_TX
    k: int = 1
    dl_payload_bytes: int = 31

    def violations(self) -> list[str]:
        out = []
        if self.k < 1:
            out.append(f"ledger.confirmation_k={self.k} must be >= 1")
        if self.dl_payload_bytes < 0:
            out.append(f"ledger.dl_payload_bytes={self.dl_payload_bytes} must be >= 0")
        return out


@dataclass
class Confirmation:
    client: str
    tx_ids: list[str]


class Confirmer:
    """Groups committed transactions into confirmation messages per client."""

    def __init__(self, policy: ConfirmationPolicy):
        self.policy = policy
        self._waiting: dict[str, list[str]] = {}

    def emit(self, committed: Iterable[tuple[str, str]]) -> list[Confirmation]:
        """``committed`` holds ``(tx_id, client)`` pairs of one block, in block order."""
        mode = self.policy.mode
        out: list[Confirmation] = []
        if mode is ConfirmationMode.PER_TX:
            return [Confirmation(client, [tx]) for tx, client in committed]
        if mode is ConfirmationMode.PER_BLOCK:
            by_client: dict[str, list[str]] = {}
            for tx, client in committed:
                by_client.setdefault(client, []).append(tx)
            return [Confirmation(c, txs) for c, txs in by_client.items()]
        for tx, client in committed:
            group = self._waiting.setdefault(client, [])
            group.append(tx)
            if len(group) == self.policy.k:
                out.append(Confirmation(client, group))
                self._waiting[client] = []
        return out

    def unconfirmed(self) -> dict[str, list[str]]:
        return {c: list(txs) for c, txs in self._waiting.items() if txs}


def emit_confirmations(committed: Iterable[tuple[str, str]], policy: ConfirmationPolicy,
                       header_bytes: int = 0, src: str = "committer"):
    """Stateless form of :class:`Confirmer` returning DL radio messages."""
    return [RadioMessage(Direction.DL, policy.dl_payload_bytes, header_bytes, MsgClass.CONFIRMATION,
                         src, c.client, tx_id=c.tx_ids[-1], body=c)
            for c in Confirmer(policy).emit(committed)]
