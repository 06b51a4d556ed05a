import json

import pytest

from igae.config import ConfigError, RunConfig, config_from_dict, load_config


def test_defaults_round_trip_through_json():
    cfg = RunConfig()
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_partial_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"ls_iters": 10, "weights": {"tv": 0.5}},
                                "ae": {"l": 2, "channels": [8]}}))
    cfg = load_config(path)
    assert cfg.train.ls_iters == 10 and cfg.train.weights.tv == 0.5
    assert cfg.train.weights.latent == 1.0
    assert cfg.ae.l == 2 and cfg.ae.channels == (8,)


@pytest.mark.parametrize("doc,msg", [
    ({"train": {"bogus": 1}}, "unknown key"),
    ({"nope": {}}, "unknown key"),
    ({"train": {"ls_iters": "many"}}, "train.ls_iters: expected an integer"),
    ({"train": {"no_3d": 1}}, "expected a boolean"),
    ({"train": {"weights": {"tv": -1.0}}}, "nonnegative"),
    ({"train": {"ls_iters": -3}}, "nonnegative"),
    ({"ae": {"l": 3}}, "power of two"),
    ({"train": []}, "expected an object"),
])
def test_schema_errors(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_rates_are_schedules():
    cfg = config_from_dict({"train": {"rates": {"encoder": {"base": 0.5, "gamma": 0.9}}}})
    assert cfg.train.rates.encoder.rate(0) == 0.5
    assert cfg.train.rates.encoder.rate(2) == pytest.approx(0.5 * 0.81)
