import pytest

from nbiotdlt.metrics import (PER_TX_COLUMNS, SUMMARY_COLUMNS, DoubleRecordError, LatencyRecord,
                              RunSummary, TrafficLedger, e2e_stats, export_csv, ratio_of_totals,
                              ul_dl_ratio)
from nbiotdlt.radio import Direction, MsgClass, RadioMessage
from nbiotdlt.sim import ms, seconds


def _msg(direction, payload, header=0, cls=MsgClass.PROPOSAL, tx="t0"):
    src, dst = ("ue-0", "gw") if direction is Direction.UL else ("gw", "ue-0")
    return RadioMessage(direction, payload, header, cls, src, dst, tx)


def test_ul_data_message_counted():
    led = TrafficLedger()
    led.record_message(_msg(Direction.UL, 50, 60), "t0")
    assert led.total_bytes(Direction.UL, data_only=True) == 110
    assert led.per_tx["t0"].ul_bytes == 110


def test_signaling_kept_out_of_data():
    led = TrafficLedger()
    led.record_message(_msg(Direction.UL, 7, 0, MsgClass.SIGNALING), "t0")
    assert led.total_bytes(data_only=True) == 0
    assert led.signaling_bytes == 7
    assert "t0" not in led.per_tx


def test_double_record_forbidden():
    led = TrafficLedger()
    m = _msg(Direction.UL, 10)
    led.record_message(m)
    with pytest.raises(DoubleRecordError):
        led.record_message(m)


def test_ratio_half():
    led = TrafficLedger()
    for i in range(5):
        led.record_message(_msg(Direction.UL, 100, tx=f"t{i}"), f"t{i}")
        led.record_message(_msg(Direction.DL, 200, tx=f"t{i}"), f"t{i}")
    assert ul_dl_ratio(led) == 0.5
    assert ratio_of_totals(led) == 0.5


def test_ratio_absent_without_dl():
    led = TrafficLedger()
    led.record_message(_msg(Direction.UL, 100), "t0")
    assert ul_dl_ratio(led) is None and ratio_of_totals(led) is None


def test_per_tx_mean_differs_from_totals():
    led = TrafficLedger()
    led.record_message(_msg(Direction.UL, 100, tx="a"), "a")
    led.record_message(_msg(Direction.DL, 100, tx="a"), "a")
    led.record_message(_msg(Direction.UL, 100, tx="b"), "b")
    led.record_message(_msg(Direction.DL, 300, tx="b"), "b")
    assert ul_dl_ratio(led) == pytest.approx((1 + 1 / 3) / 2)
    assert ratio_of_totals(led) == 0.5


def test_e2e_single():
    st = e2e_stats([LatencyRecord("t", "u", 0, t_confirmed=ms(900))])
    assert st.mean == pytest.approx(0.9) and st.p95 == pytest.approx(0.9) and st.count == 1


def test_e2e_p95_nearest_rank():
    recs = [LatencyRecord(f"t{i}", "u", 0, t_confirmed=seconds(i)) for i in range(1, 101)]
    st = e2e_stats(recs)
    assert st.p95 == 95.0
    assert st.mean == 50.5
    assert st.histogram[0].sum() == 100


def test_e2e_needs_completed():
    with pytest.raises(ValueError):
        e2e_stats([LatencyRecord("t", "u", 0)])


def test_latency_stage_order():
    r = LatencyRecord("t", "u", 0, t_ul_delivered=5, t_committed=9, t_confirmed=12)
    assert r.stages_ordered()
    r.t_committed = 3
    assert not r.stages_ordered()


def _summary(**kw):
    base = dict(scenario="s", seed=1, payload_bytes=50, endorsements=2, block_size=30, mode="dlt",
                ratio_mean=0.5, ratio_totals=0.5, e2e_mean_s=1.0, e2e_p95_s=1.5, generated=3,
                committed=2, rejected=1, dropped=0, ra_failures=0, blocks=1)
    base.update(kw)
    return RunSummary(**base)


def test_summary_balance():
    assert _summary().balanced()
    assert not _summary(dropped=1).balanced()


def test_export_empty_run_is_header_only(tmp_path):
    s, p = export_csv(None, [], TrafficLedger(), tmp_path)
    assert s.read_text() == ",".join(SUMMARY_COLUMNS) + "\n"
    assert p.read_text() == ",".join(PER_TX_COLUMNS) + "\n"


def test_export_rows_and_replay(tmp_path):
    led = TrafficLedger()
    recs = []
    for i in range(1000):
        recs.append(LatencyRecord(f"t{i}", "ue-0", i, t_committed=i + 5, t_confirmed=i + 9))
        led.record_message(_msg(Direction.UL, 50, tx=f"t{i}"), f"t{i}")
    s1, p1 = export_csv(_summary(), recs, led, tmp_path / "a")
    s2, p2 = export_csv(_summary(), recs, led, tmp_path / "b")
    assert len(p1.read_text().splitlines()) == 1001
    assert p1.read_bytes() == p2.read_bytes() and s1.read_bytes() == s2.read_bytes()
    assert p1.read_text().splitlines()[1] == "t0,ue-0,0,5,9,50,0"
