from __future__ import annotations

from pathlib import Path

import pytest

from mmwave_relq.config import (
    apply_overrides,
    config_from_mapping,
    fold_keys,
    load_experiment_config,
    with_point,
)
from mmwave_relq.errors import ConfigError
from mmwave_relq.paths import CONFIGS_DIR
from mmwave_relq.pipeline import PMF_CONFIGS, SWEEP_CONFIGS


def write_config(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "experiment.env"
    path.write_text(text, encoding="utf-8")
    return path


def test_empty_config_is_default_point():
    cfg = config_from_mapping({})
    assert cfg.name == "experiment"
    assert cfg.grid() == [None]
    assert cfg.traffic_models() == ["spp"]
    assert cfg.radio.usable_prbs == 66
    assert cfg.system.service_rate == pytest.approx(1 / 30)
    assert cfg.sim.replications == 20


def test_dotted_keys_are_typed(tmp_path):
    path = write_config(
        tmp_path,
        "# comment\n"
        "name=demo\n"
        "radio.blocker_density=0.2\n"
        "traffic.model=poisson\n"
        "demand.session_rate_bps=20e6\n"
        "system.prbs=12\n"
        "sweep.parameter=arrival_rate\n"
        "sweep.values=0.1, 0.2,0.3\n"
        "sweep.traffic=poisson,spp\n",
    )
    cfg = load_experiment_config(path)
    assert cfg.name == "demo"
    assert cfg.radio.blocker_density == 0.2
    assert cfg.demand.session_rate_bps == 20e6
    assert cfg.system.prbs == 12
    assert cfg.grid() == [0.1, 0.2, 0.3]
    assert cfg.traffic_models() == ["poisson", "spp"]


def test_json_values(tmp_path):
    path = write_config(
        tmp_path,
        'demand.source=explicit\n'
        'demand.pmf={"1": 0.5, "3": 0.5}\n'
        "traffic.model=map\n"
        "traffic.lambda0=[[-2, 1], [1, -3]]\n"
        "traffic.lambda1=[[1, 0], [0, 2]]\n",
    )
    cfg = load_experiment_config(path)
    assert cfg.demand.pmf == {1: 0.5, 3: 0.5}
    assert cfg.traffic.lambda1 == [[1.0, 0.0], [0.0, 2.0]]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("radio.bogus=1\n", "radio.bogus"),
        ("traffic.beta=1.5\n", "traffic.beta"),
        ("demand.pmf={oops\n", "demand.pmf"),
        ("traffic.model=map\n", "lambda0"),
        ("sweep.parameter=beta\n", "sweep.values"),
        ("sweep.parameter=bogus\nsweep.values=1\n", "sweep.parameter"),
        ("demand.source=explicit\n", "demand.pmf"),
    ],
)
def test_invalid_configs_name_the_key(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        load_experiment_config(write_config(tmp_path, text))


def test_fold_keys_conflicts():
    assert fold_keys({"a.b": "1", "a.c": "2"}) == {"a": {"b": "1", "c": "2"}}
    with pytest.raises(ConfigError):
        fold_keys({"radio": "1", "radio.f_c_ghz": "2"})
    with pytest.raises(ConfigError):
        fold_keys({"radio.f_c_ghz": "2", "radio": "1"})
    with pytest.raises(ConfigError, match="missing value"):
        fold_keys({"name": None})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_experiment_config(tmp_path / "nope.env")


def test_mcs_table_path_is_relative_to_config(tmp_path):
    cfg = load_experiment_config(write_config(tmp_path, "demand.mcs_table=tables/mcs.csv\n"))
    assert cfg.demand.mcs_table == tmp_path / "tables" / "mcs.csv"


def test_cli_overrides_win(tmp_path):
    cfg = config_from_mapping({"method": "analytic", "sim": {"seed": "3"}})
    out = tmp_path / "out.csv"
    updated = apply_overrides(cfg, seed=11, method="both", out=out, jobs=4)
    assert updated.sim.seed == 11
    assert updated.method == "both"
    assert updated.output.path == out
    assert updated.jobs == 4
    assert apply_overrides(cfg) == cfg
    with pytest.raises(ConfigError):
        apply_overrides(cfg, seed=-1)
    with pytest.raises(ConfigError):
        apply_overrides(cfg, jobs=0)


def test_with_point_updates_the_right_section():
    cfg = config_from_mapping({})
    assert with_point(cfg, "arrival_rate", 0.3).traffic.arrival_rate == 0.3
    assert with_point(cfg, "service_rate", 0.05).system.service_rate == 0.05
    assert with_point(cfg, "blocker_density", 0.1).radio.blocker_density == 0.1
    assert with_point(cfg, "session_rate", 20e6).demand.session_rate_bps == 20e6
    radio = with_point(cfg, "bs_elements", 8).radio
    assert (radio.bs_elements_h, radio.bs_elements_v) == (8, 8)
    assert with_point(cfg, "none", None) is cfg
    with pytest.raises(ConfigError, match="beta"):
        with_point(cfg, "beta", 1.5)


@pytest.mark.parametrize("name", [*PMF_CONFIGS, *SWEEP_CONFIGS, "default_point.env"])
def test_bundled_configs_load(name):
    cfg = load_experiment_config(CONFIGS_DIR / name)
    assert cfg.name == Path(name).stem
    assert cfg.grid()
