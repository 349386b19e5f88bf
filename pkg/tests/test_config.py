import json

import pytest

from opticloud._validation import ConfigurationError
from opticloud.config import (
    OpuSection,
    Scenario,
    load_device_file,
    load_scenario,
    scenario_dir,
    scenario_hash,
)
from opticloud.convnet.serialize import fixture_root

SHIPPED = ["fig4c_link", "fig4e_precision", "fig4f_addition", "fig4g_kernels", "fig5a_mnist",
           "fig5d_firstlayer", "power_report", "peak_tops", "cluster_pool"]


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_load(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert scenario_hash(sc) == scenario_hash(load_scenario(name))


def test_device_file_builds_opu():
    path = fixture_root() / "devices" / "opu_8port.json"
    device = load_device_file(path)
    awgr, mzms, pd = device.parts()
    assert awgr.port_count == 8 and len(mzms) == 1 and pd.responsivity == 0.65
    cfg = OpuSection(device_file=str(path), baud=50).build(seed=2)
    assert cfg.baud == 50 and cfg.awgr.port_count == 8


def test_device_file_conflicts_with_inline_ports():
    with pytest.raises(ValueError, match="device_file"):
        OpuSection(device_file="x.json", port_count=16)


def test_bad_device_file(tmp_path):
    path = tmp_path / "dev.json"
    path.write_text(json.dumps({"awgr": {"port_count": 0}}))
    with pytest.raises(ConfigurationError, match="awgr.port_count"):
        load_device_file(path)


def test_unknown_keys_rejected():
    with pytest.raises(ValueError):
        Scenario.model_validate({"name": "x", "experiment": "power", "colour": "red"})


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        load_scenario(str(path))


def test_scenario_dir_follows_fixture_env(monkeypatch, tmp_path):
    monkeypatch.setenv("OPTICLOUD_FIXTURES", str(tmp_path))
    assert scenario_dir() == tmp_path / "scenarios"
