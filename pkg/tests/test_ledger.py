import dataclasses
import json
import random
from collections import Counter

import pytest
from ledger_net import Net

from nbiotdlt.crypto import SIGNATURE_LEN
from nbiotdlt.ledger import (GENESIS_HASH, Block, ChainError, ConfirmationMode, ConfirmationPolicy,
                             Confirmer, EndorsedTransaction, Endorsement, EndorsementPolicy,
                             EndorseResponse, OrdererConfig, Rejected, WorldState,
                             decode_reading, emit_confirmations, encode_reading,
                             endorsement_response_bytes, evaluate_contract, proposal_wire_bytes,
                             query, select_peers, submit_wire_bytes, verify_chain_bytes)
from nbiotdlt.sim import ms, seconds

POOL = [f"peer-{i}" for i in range(4)]


# -- peer selection ----------------------------------------------------------

def test_select_whole_pool():
    assert sorted(select_peers(EndorsementPolicy(4, POOL), random.Random(0))) == POOL


def test_select_one_is_uniform():
    rng = random.Random(1)
    counts = Counter(select_peers(EndorsementPolicy(1, POOL), rng)[0] for _ in range(10**4))
    for p in POOL:
        assert abs(counts[p] / 10**4 - 0.25) < 0.02


def test_select_two_distinct():
    rng = random.Random(2)
    for _ in range(1000):
        a, b = select_peers(EndorsementPolicy(2, POOL), rng)
        assert a != b


def test_policy_bounds():
    assert EndorsementPolicy(5, POOL).violations()
    assert EndorsementPolicy(0, POOL).violations()
    assert not EndorsementPolicy(4, POOL).violations()


# -- payloads and wire sizes -------------------------------------------------

def test_reading_round_trip():
    raw = encode_reading(7, 451.5, 50)
    assert len(raw) == 50
    assert decode_reading(raw) == (7, 451.5)
    with pytest.raises(ValueError):
        encode_reading(1, 1.0, 8)


def test_wire_sizes():
    assert proposal_wire_bytes(50) == 50 + SIGNATURE_LEN
    assert endorsement_response_bytes(50, EndorseResponse.DIGEST) == 104
    assert endorsement_response_bytes(50, EndorseResponse.FULL_PROPOSAL) == 50 + 2 * SIGNATURE_LEN
    assert submit_wire_bytes(50, 3) == 50 + SIGNATURE_LEN + 3 * SIGNATURE_LEN


# -- endorsement -------------------------------------------------------------

def test_endorse_fresh_proposal():
    net = Net()
    p = net.proposal()
    e = net.endorsers["peer-0"].endorse(p)
    assert isinstance(e, Endorsement) and len(e.signature) == SIGNATURE_LEN
    assert net.members.verify("peer-0", p.digest(), e.signature)


def test_endorse_rejects_committed_tx():
    net = Net()
    etx = net.tx()
    net.commit([etx])
    with pytest.raises(Rejected) as r:
        net.endorsers["peer-2"].endorse(etx.proposal)
    assert r.value.reason == "duplicate"


def test_endorse_rejects_tampered_payload():
    net = Net()
    p = net.proposal()
    payload = bytearray(p.payload)
    payload[5] ^= 0x01
    with pytest.raises(Rejected) as r:
        net.endorsers["peer-0"].endorse(dataclasses.replace(p, payload=bytes(payload)))
    assert r.value.reason == "bad_signature"


def test_endorse_rejects_malformed():
    net = Net(payload=50)
    other = Net(payload=60, tag="net")
    with pytest.raises(Rejected) as r:
        net.endorsers["peer-0"].endorse(other.proposal())
    assert r.value.reason == "malformed"
    with pytest.raises(Rejected) as r:
        net.endorsers["peer-0"].endorse(dataclasses.replace(net.proposal(), client="stranger"))
    assert r.value.reason == "malformed"
    with pytest.raises(Rejected) as r:
        net.endorsers["peer-0"].endorse(dataclasses.replace(net.proposal(), tx_id="zz" * 32))
    assert r.value.reason == "malformed"


# -- ordering ----------------------------------------------------------------

def test_submit_two_valid():
    net = Net(E=2)
    net.orderer.submit_to_orderer(net.tx(), 0)
    assert len(net.orderer.pending) == 1


def test_submit_one_endorsement_rejected():
    net = Net(E=2)
    etx = net.endorse(net.proposal(), ["peer-0"])
    with pytest.raises(Rejected) as r:
        net.orderer.submit_to_orderer(etx, 0)
    assert r.value.reason == "insufficient_endorsements"
    assert not net.orderer.pending


def test_submit_corrupted_endorsement_rejected():
    net = Net(E=2)
    etx = net.tx()
    bad = Endorsement(etx.endorsements[1].peer_id, bytes(SIGNATURE_LEN))
    with pytest.raises(Rejected):
        net.orderer.submit_to_orderer(EndorsedTransaction(etx.proposal, (etx.endorsements[0], bad)), 0)


def test_cut_by_size():
    net = Net(orderer_cfg=OrdererConfig(block_size_b=30))
    for i in range(30):
        assert net.orderer.cut_block(ms(i)) is None
        net.orderer.submit_to_orderer(net.tx(seq=i), ms(i))
    block = net.orderer.cut_block(ms(29))
    assert len(block.txs) == 30
    assert net.orderer.cut_block(ms(29)) is None


def test_cut_by_timeout():
    net = Net(orderer_cfg=OrdererConfig(block_size_b=100, batch_timeout=seconds(2)))
    net.orderer.submit_to_orderer(net.tx(), ms(500))
    assert net.orderer.timeout_at() == ms(2500)
    assert net.orderer.cut_block(ms(2499)) is None
    assert len(net.orderer.cut_block(ms(2500)).txs) == 1


def test_block_processing_time():
    cfg = OrdererConfig(block_size_b=10)
    assert cfg.processing_time(10) == ms(150)
    slot = OrdererConfig(block_size_b=100, block_proc_per_slot=ms(4))
    assert slot.processing_time(1) == ms(50 + 10 + 400)


def test_blocks_processed_in_cut_order():
    net = Net(orderer_cfg=OrdererConfig(block_size_b=1))
    readies = []
    for i in range(3):
        net.orderer.submit_to_orderer(net.tx(seq=i), 0)
        readies.append(net.orderer.ready_time(net.orderer.cut_block(0), 0))
    assert readies == [ms(60), ms(120), ms(180)]


def test_block_size_bounds():
    net = Net(orderer_cfg=OrdererConfig(block_size_b=4))
    for i in range(10):
        net.orderer.submit_to_orderer(net.tx(seq=i), 0)
    sizes = []
    while (b := net.orderer.cut_block(seconds(5))) is not None:
        sizes.append(len(b.txs))
    assert sizes == [4, 4, 2]


# -- commit ------------------------------------------------------------------

def test_commit_three_valid():
    net = Net()
    etxs = [net.tx("ue-0", 440.0), net.tx("ue-1", 460.0), net.tx("ue-0", 470.0)]
    res = net.commit(etxs)
    assert net.ledger.height == 1 and res.valid == [True] * 3
    assert query(net.ledger.state, "sensor/ue-0") == 470.0
    assert query(net.ledger.state, "sensor/ue-1") == 460.0
    assert query(net.ledger.state, "tx/ue-0") == etxs[2].tx_id


def test_duplicate_in_block_second_invalid():
    net = Net()
    etx = net.tx()
    res = net.commit([etx, etx])
    assert res.valid == [True, False] and res.reasons[1] == "duplicate"
    assert net.ledger.committed_tx_ids() == [etx.tx_id]


def test_duplicate_across_blocks():
    net = Net()
    etx = net.tx()
    net.commit([etx])
    assert net.commit([etx]).valid == [False]


def test_wrong_prev_hash_aborts():
    net = Net()
    net.commit([net.tx()])
    before = (net.ledger.height, net.ledger.tip, dict(net.ledger.state.items()))
    bad = Block.build(1, GENESIS_HASH, [net.tx()])
    with pytest.raises(ChainError):
        net.ledger.validate_and_commit(bad)
    assert (net.ledger.height, net.ledger.tip, dict(net.ledger.state.items())) == before


def test_forged_block_hash_aborts():
    net = Net()
    good = net.block([net.tx()])
    forged = dataclasses.replace(good, block_hash=bytes(32))
    with pytest.raises(ChainError):
        net.ledger.validate_and_commit(forged)
    assert net.ledger.height == 0


def test_chain_verifies_and_detects_mutation():
    net = Net()
    for i in range(5):
        net.commit([net.tx(seq=i), net.tx("ue-1", seq=i)])
    blobs = net.ledger.serialized_blocks()
    assert verify_chain_bytes(blobs)
    rng = random.Random(3)
    for _ in range(200):
        i = rng.randrange(len(blobs))
        j = rng.randrange(len(blobs[i]))
        mutated = bytearray(blobs[i])
        mutated[j] ^= rng.randrange(1, 256)
        assert not verify_chain_bytes(blobs[:i] + [bytes(mutated)] + blobs[i + 1:])


def test_world_state_query():
    st = WorldState()
    assert query(st, "sensor/x") is None
    st.put("sensor/x", 1.0)
    st.put("sensor/x", 2.0)
    assert query(st, "sensor/x") == 2.0


def test_latest_block_wins():
    net = Net()
    net.commit([net.tx(value=400.0)])
    net.commit([net.tx(value=420.0)])
    assert query(net.ledger.state, "sensor/ue-0") == 420.0


def test_ledger_dump(tmp_path):
    net = Net()
    net.commit([net.tx(), net.tx("ue-1")])
    p = tmp_path / "ledger.jsonl"
    net.ledger.dump_jsonl(p)
    rec = json.loads(p.read_text().splitlines()[0])
    assert set(rec) >= {"height", "prev_hash", "block_hash", "txs"}
    assert set(rec["txs"][0]) >= {"tx_id", "client", "ts", "payload_size", "endorsers"}
    assert rec["txs"][0]["payload_size"] == 50


# -- confirmations -----------------------------------------------------------

def _pairs(n, client="ue-0"):
    return [(f"tx{i}", client) for i in range(n)]


def test_per_tx_confirmations():
    msgs = emit_confirmations(_pairs(5), ConfirmationPolicy())
    assert len(msgs) == 5 and all(m.app_payload_bytes == 31 for m in msgs)


def test_per_k_confirmations():
    pol = ConfirmationPolicy(ConfirmationMode.PER_K_TX, k=5)
    assert len(emit_confirmations(_pairs(10), pol)) == 2
    c = Confirmer(pol)
    assert c.emit(_pairs(3)) == []
    assert len(c.emit(_pairs(3))) == 1
    assert c.unconfirmed() == {"ue-0": ["tx2"]}


def test_per_block_confirmations():
    pol = ConfirmationPolicy(ConfirmationMode.PER_BLOCK)
    msgs = emit_confirmations(_pairs(3, "ue-0") + _pairs(2, "ue-1"), pol)
    assert sorted(m.dst for m in msgs) == ["ue-0", "ue-1"]


# -- contract ----------------------------------------------------------------

def test_contract_examples():
    assert evaluate_contract([400, 600], 450, 6).mean == 500
    assert evaluate_contract([400, 400], 450, 6) is None
    assert evaluate_contract([], 450, 6) is None


def _brute(stream, threshold, w):
    out = []
    for i in range(len(stream)):
        window = stream[max(0, i - w + 1):i + 1]
        total = 0.0
        for v in window:
            total += v
        out.append(total / len(window) > threshold)
    return out


def test_contract_matches_brute_force_window():
    rng = random.Random(10)
    stream = [rng.choice([400.0, 1400.0]) for _ in range(10)]
    net = Net(threshold=900.0, window=6)
    got = []
    for v in stream:
        net.contract.observe("s", v)
        got.append(net.contract.evaluate("s") is not None)
    assert got == _brute(stream, 900.0, 6)


def test_contract_alarm_at_commit():
    net = Net(threshold=1000.0, window=2)
    net.commit([net.tx(value=450.0)])
    assert not net.ledger.alarm_log
    net.commit([net.tx(value=1600.0)])
    (height, alarm), = net.ledger.alarm_log
    assert height == 1 and alarm.sensor == "ue-0" and alarm.mean == 1025.0
