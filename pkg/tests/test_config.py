import json

import numpy as np
import pytest

from cqbound.config import ScenarioConfig, load_config
from cqbound.errors import ConfigError


def test_defaults_are_the_desk_scenario():
    cfg = ScenarioConfig()
    assert (cfg.steps, cfg.T, cfg.trials, cfg.n_particles, cfg.k_active * cfg.node_grid**2) == (50, 1.0, 20, 500, 27)
    np.testing.assert_array_equal(cfg.prior_cov, np.diag([900.0, 9, 900, 9]))


@pytest.mark.parametrize("bad", [dict(trials=0), dict(mode="nope"), dict(quant_lo=1.0, quant_hi=1.0),
                                 dict(bits=0), dict(n_particles=1), dict(prior_std=(1, 1, 1)),
                                 dict(ess_threshold=1.5), dict(epsilon=-0.1), dict(motion="spiral")])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig(**bad)


def test_round_trip(tmp_path):
    cfg = ScenarioConfig(bits=5, mode="raw", prior_std=(1, 2, 3, 4))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text(json.dumps({"bitz": 3}))
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_replace_validates():
    with pytest.raises(ConfigError):
        ScenarioConfig().replace(steps=-1)
    with pytest.raises(ConfigError):
        ScenarioConfig().replace(colour="red")


def test_mode_flags():
    assert ScenarioConfig(mode="centralized_quantized").quantized
    assert ScenarioConfig(mode="centralized_raw").centralized
    assert not ScenarioConfig(mode="raw").quantized
