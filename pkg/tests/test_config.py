import json

import numpy as np
import pytest

from isac_pcrb.config import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    db_to_linear,
    dbm_to_watt,
    load_config,
    loads_config,
)


def test_unit_conversions():
    assert dbm_to_watt(10.0) == pytest.approx(0.01)
    assert dbm_to_watt(-90.0) == pytest.approx(1e-12)
    assert db_to_linear(-30.0) == pytest.approx(1e-3)


def test_default_scenario_values(scenario):
    assert scenario.power == pytest.approx(0.01)
    assert scenario.comm_noise == pytest.approx(1e-12)
    assert scenario.alpha_sq == pytest.approx(10 ** -0.8 * 1e-12 / (0.01 * 25))
    assert scenario.geom.n_tx == 16 and scenario.geom.n_rx == 20
    assert scenario.mrt_capacity == pytest.approx(8.7991, abs=1e-4)
    assert scenario.angles.elevation == pytest.approx(np.arcsin(-0.1))


def test_round_trip(cfg):
    text = cfg.dumps()
    again = loads_config(text)
    assert again.dumps() == text
    assert again == cfg


def test_shipped_default_equals_dataclass_defaults(cfg):
    assert cfg.to_dict() == ExperimentConfig().to_dict()


def test_rate_grid(cfg):
    grid = cfg.rate_grid()
    assert len(grid) == 20
    assert grid[0] == pytest.approx(0.1)
    assert grid[-1] == pytest.approx(0.99 * cfg.scenario.mrt_capacity)


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"prior": {"components": [{"mean_rad": 0, "concentration": 1, "weight": 0.4}]}}, "prior.components"),
        ({"prior": {"components": [{"mean_rad": 0, "concentration": -1, "weight": 1}]}},
         "prior.components[0].concentration"),
        ({"prior": {"components": [{"mean_rad": 0, "weight": 1}]}}, "prior.components[0].concentration"),
        ({"link": {"symbols": 2.5}}, "link.symbols"),
        ({"link": {"power_dbm": "ten"}}, "link.power_dbm"),
        ({"link": {"bogus": 1}}, "link.bogus"),
        ({"extra": {}}, "extra"),
        ({"target": {"range_m": 5.0}}, "target.range_m"),
        ({"sweep": {"rate_targets_bpshz": [1.0, 50.0]}}, "sweep.rate_targets_bpshz[1]"),
        ({"sweep": {"schemes": ["proposed", "b9"]}}, "sweep.schemes"),
        ({"sweep": {"min_bpshz": 20.0}}, "sweep.min_bpshz"),
        ({"mc": {"grid_size": 16}}, "mc.grid_size"),
        ({"tolerances": {"nope": 1e-3}}, "tolerances.nope"),
        ({"tolerances": {"kkt": -1}}, "tolerances.kkt"),
        ({"user": {"range_m": 0}}, "user.range_m"),
    ],
)
def test_errors_carry_field_paths(patch, path):
    with pytest.raises(ConfigError) as err:
        config_from_dict(patch)
    assert err.value.path == path


def test_parse_and_io_errors(tmp_path):
    with pytest.raises(ConfigError):
        loads_config("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        loads_config("[1, 2]")


def test_partial_file_fills_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"link": {"power_dbm": 20}, "tolerances": {"kkt": 1e-5}}))
    cfg = load_config(p)
    assert cfg.scenario.power == pytest.approx(0.1)
    assert cfg.scenario.tol.kkt == 1e-5
    assert cfg.geometry.tx_rows == 4
