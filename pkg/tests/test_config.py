from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema
import pytest

from shopfloor.config import (
    ATV, ConfigError, Schedule, config_from_dict, config_to_dict, default_config, dump_config,
    explicit_keys, load_config, provenance,
)
from shopfloor.satisfaction import Scale, Transition

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "config.schema.json").read_text())


def test_defaults_validate():
    for dept in ("atv", "ww"):
        default_config(dept).validate()


def test_published_atv_values():
    assert ATV.arrival_rate == 70
    assert ATV.p_need_help == 0.38
    assert ATV.p_buy_after_browse == 0.37
    assert ATV.p_buy_after_help == 0.56
    assert ATV.browse == (1.0, 7.0, 15.0)
    assert ATV.help_duration == (3.0, 15.0, 30.0)
    assert ATV.pay_patience == (5.0, 12.0, 20.0)


def test_round_trip_through_dict():
    cfg = default_config("ww").with_overrides({"practice.p_learn": 0.5, "run.weight_scenario": {"kind": "scale", "value": 10}})
    back = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
    assert back == cfg
    assert back.run.weight_scenario == Scale(10)
    assert back.digest() == cfg.digest()


def test_digest_tracks_content():
    a = default_config()
    assert a.digest() == default_config().digest()
    assert a.digest() != a.with_overrides({"staffing.cashiers": 4}).digest()


@pytest.mark.parametrize("key,value", [
    ("department.p_need_help", 1.5),
    ("department.browse", [5, 3, 8]),
    ("department.arrival_rate", 0),
    ("staffing.cashiers", 0),
    ("staffing.normals", -1),
    ("practice.p_learn", -0.1),
    ("practice.k_max", 0),
    ("run.weeks", 0),
    ("run.days_per_week", 8),
])
def test_invalid_values_name_the_key(key, value):
    with pytest.raises(ConfigError) as err:
        default_config().with_overrides({key: value})
    assert err.value.key == key


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"staffing": {"janitors": 2}})
    assert err.value.key == "staffing.janitors"
    with pytest.raises(ConfigError):
        config_from_dict({"extras": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"weights": {"help.dance": 1}})


def test_base_profile_selection():
    cfg = config_from_dict({"department": {"base": "ww", "arrival_rate": 99}})
    assert cfg.department.name == "ww"
    assert cfg.department.arrival_rate == 99
    with pytest.raises(ConfigError):
        config_from_dict({"department": {"base": "toys"}})


def test_weights_override():
    cfg = config_from_dict({"weights": {"pay.completion": 8}})
    assert cfg.weights[Transition.PAY_COMPLETION] == 8
    assert cfg.effective_weights()[Transition.PAY_COMPLETION] == 8


def test_effective_weights_apply_scenario():
    cfg = default_config().with_overrides({"run.weight_scenario": {"kind": "scale", "value": 100}})
    assert cfg.effective_weights()[Transition.PAY_COMPLETION] == 400


def test_provenance_tags():
    tags = provenance(default_config(), {"staffing.cashiers"})
    assert tags["department.arrival_rate"] == "paper"
    assert tags["department.p_escalate"] == "default"
    assert tags["staffing.cashiers"] == "config"
    assert set(tags.values()) <= {"paper", "default", "config"}


def test_explicit_keys():
    assert explicit_keys({"department": {"base": "ww", "p_escalate": 0.1}, "run": {"weeks": 2}}) == {
        "department.p_escalate", "run.weeks"}


def test_file_round_trip(tmp_path):
    cfg = default_config().with_overrides({"staffing.experts": 2})
    path = tmp_path / "c.json"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_malformed_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_promotion_points():
    p = default_config().practice
    assert p.promotion_points == 70
    cfg = default_config().with_overrides({"practice.threshold_fraction": 0.2})
    assert cfg.practice.promotion_points == math.ceil(0.2 * 70)
    assert default_config().with_overrides({"practice.threshold_fraction": 0.0}).practice.promotion_points == 1


def test_dumped_configs_match_schema():
    for dept in ("atv", "ww"):
        jsonschema.validate(config_to_dict(default_config(dept)), SCHEMA)


def test_schema_rejects_bad_probability():
    d = config_to_dict(default_config())
    d["department"]["p_escalate"] = 2
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(d, SCHEMA)


def test_schedule_open_minutes():
    s = Schedule(weeks=2, days_per_week=5, open_minutes=600.0)
    assert list(s.open_days()) == [0, 1, 2, 3, 4, 7, 8, 9, 10, 11]
    assert s.total_open_minutes == 6000.0
    assert s.end_time == 2 * 7 * 1440.0
    assert s.open_overlap(0.0, s.end_time) == 6000.0
    # 500..1940 covers 100 min of day 0 and 500 of day 1
    assert s.open_overlap(500.0, 1940.0) == 600.0
    assert s.open_overlap(5 * 1440.0, 7 * 1440.0) == 0.0
