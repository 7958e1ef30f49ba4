import dataclasses

import pytest

from nbiotdlt.config import (CONFIG_KEYS, PROFILES, ConfigError, Mode, ScenarioConfig, SensorKind,
                             SensorModel, apply_defaults, explain_config, get_profile, load_config,
                             parse_config_text)
from nbiotdlt.ledger import ConfirmationMode
from nbiotdlt.radio import MsgClass
from nbiotdlt.sim import ms, seconds


def test_minimal_file_gets_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("scenario.payload_bytes = 100\n")
    cfg = load_config(p)
    assert cfg.payload_bytes == 100
    assert cfg.report_interval == seconds(10)
    assert cfg.n_transactions == 1000
    assert cfg.mode is Mode.DLT


def test_endorsements_above_pool_rejected():
    with pytest.raises(ConfigError) as e:
        parse_config_text("ledger.endorsements = 5\nledger.peers = 4\n")
    assert any("ledger.endorsements=5" in v and "[1, 4]" in v for v in e.value.violations)


def test_zero_block_size_rejected():
    with pytest.raises(ConfigError) as e:
        parse_config_text("ledger.block_size = 0\n")
    assert any("ledger.block_size" in v for v in e.value.violations)


def test_all_violations_reported():
    with pytest.raises(ConfigError) as e:
        parse_config_text("ledger.block_size = 0\nscenario.n_ues = 0\nbogus = 1\nno equals\n")
    assert len(e.value.violations) == 4


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/file.cfg")


def test_parsing_units_and_enums():
    cfg = parse_config_text(
        "cell.nprach_period_ms = 40\nscenario.report_interval_s = 5\n"
        "ledger.confirmation = per_k_tx\nledger.confirmation_k = 3\nue.cp_ciot = yes\n"
        "calibration.header.proposal = 77  # trailing comment\n")
    assert cfg.cell.nprach_period == ms(40)
    assert cfg.report_interval == seconds(5)
    assert cfg.confirmation.mode is ConfirmationMode.PER_K_TX and cfg.confirmation.k == 3
    assert cfg.cp_ciot is True
    assert cfg.calibration.header(MsgClass.PROPOSAL, uplink=True) == 77


def test_bad_value_named():
    with pytest.raises(ConfigError) as e:
        parse_config_text("scenario.n_ues = two\n")
    assert "scenario.n_ues" in e.value.violations[0]


def test_unknown_profile():
    with pytest.raises(ConfigError):
        parse_config_text("scenario.profile = nope\n")
    with pytest.raises(ConfigError):
        get_profile("nope")


def test_profiles_valid():
    assert {"default", "fig5", "fig6"} <= set(PROFILES)
    for p in PROFILES.values():
        assert p.violations() == []


def test_apply_defaults_respects_explicit_keys():
    cfg = parse_config_text("scenario.n_ues = 3\n")
    apply_defaults(cfg, {"scenario.n_ues": "2", "scenario.profile": "fig6"})
    assert cfg.n_ues == 3 and cfg.profile == "fig6"


def test_explain_lists_every_key():
    text = explain_config()
    for name in CONFIG_KEYS:
        assert name in text
    # round trip: the generated reference parses back to the defaults
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines()
                     if line.split("=", 1)[1].split("#", 1)[0].strip())
    back, default = parse_config_text(body), ScenarioConfig()
    # explicit per-class headers equal to the defaults are the same profile
    for cls in MsgClass:
        for up in (True, False):
            assert back.calibration.header(cls, up) == default.calibration.header(cls, up)
    headers = dict(back.calibration_overrides)
    headers.pop("header_overrides")
    assert dataclasses.replace(default.calibration, **headers) == default.calibration
    back.calibration_overrides = {}
    assert back == default


def test_sensor_models():
    import random
    rng = random.Random(0)
    assert SensorModel(SensorKind.CONSTANT, value=3.0).reading(0, rng) == 3.0
    step = SensorModel(SensorKind.CONSTANT, value=450.0, step_after=4)
    assert [step.reading(i, rng) for i in range(6)] == [450.0] * 4 + [1200.0] * 2
    xs = [SensorModel().reading(i, rng) for i in range(5000)]
    assert abs(sum(xs) / len(xs) - 450) < 2


def test_trace_file_sensor(tmp_path):
    p = tmp_path / "tr.csv"
    p.write_text("# ppm\n0,400\n1,500\n")
    cfg = parse_config_text(f"sensor.kind = trace_file\nsensor.trace_file = {p}\n")
    assert [cfg.sensor.reading(i, None) for i in range(3)] == [400.0, 500.0, 400.0]
    with pytest.raises(ConfigError):
        parse_config_text("sensor.kind = trace_file\n")
