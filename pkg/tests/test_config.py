import logging
from pathlib import Path

import pytest
import yaml

from src.config.load_config import DEFAULT_CONFIG_PATH, RunConfig, load_run_config
from src.config.logging_config import setup_logging
from src.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_PATH = ROOT / DEFAULT_CONFIG_PATH


def _default_data():
    return yaml.safe_load(DEFAULT_PATH.read_text())


def _write(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_default_configuration_loads():
    config = load_run_config(str(DEFAULT_PATH))
    assert config.cavity.sqrt_r1 == pytest.approx(0.99783)
    assert config.cavity.fsr_hz == pytest.approx(713e6)
    assert config.detuning.omega_d_hz == pytest.approx(-11.098e6)
    assert config.detection.to_detection().eta_c == pytest.approx(0.765)
    freqs = config.measurement.grid.frequencies()
    assert len(freqs) == 151
    assert freqs[-1] == pytest.approx(20e6)


def test_default_fit_spec():
    spec = load_run_config(str(DEFAULT_PATH)).fit_spec()
    assert spec.float_params == ("sqrt_r1", "sqrt_r1r2r3", "omega_d_hz", "pump_x", "escape_purity")
    assert spec.fixed_params["eta_c"] == pytest.approx(0.765)
    assert spec.fixed_params["fsr_hz"] == pytest.approx(713e6)
    assert spec.rbw_hz == pytest.approx(100e3)
    assert spec.reference_linewidth_hz == pytest.approx(856e3)


def test_extra_masks_and_quadratures():
    spec = load_run_config(str(DEFAULT_PATH)).fit_spec(extra_masks=[(13e6, 13.6e6)], quadratures=(2,))
    assert spec.masks == ((13e6, 13.6e6),)
    assert spec.quadratures == (2,)


def test_environment_variables_are_expanded(tmp_path, monkeypatch):
    text = DEFAULT_PATH.read_text().replace("seed: 1", "seed: ${SQZCAV_TEST_SEED}")
    path = tmp_path / "run.yaml"
    path.write_text(text)
    monkeypatch.setenv("SQZCAV_TEST_SEED", "17")
    assert load_run_config(str(path)).measurement.seed == 17


def test_config_path_from_environment(tmp_path, monkeypatch):
    data = _default_data()
    data["measurement"]["seed"] = 99
    monkeypatch.setenv("SQZCAV_CONFIG", _write(tmp_path, data))
    assert load_run_config().measurement.seed == 99


def test_invalid_reflectivity_names_the_field(tmp_path):
    data = _default_data()
    data["cavity"]["sqrt_r1"] = 1.5
    with pytest.raises(ConfigError, match="cavity.sqrt_r1"):
        load_run_config(_write(tmp_path, data))


def test_product_above_mirror_is_rejected(tmp_path):
    data = _default_data()
    data["cavity"]["sqrt_r1r2r3"] = 0.999
    with pytest.raises(ConfigError, match="cavity"):
        load_run_config(_write(tmp_path, data))


def test_heisenberg_violation_is_rejected(tmp_path):
    data = _default_data()
    data["squeezing"] = {"kind": "constant", "v1_a": 0.5, "v2_a": 1.5}
    data["fit"]["float_params"] = ["sqrt_r1", "sqrt_r1r2r3", "omega_d_hz"]
    with pytest.raises(ConfigError, match="squeezing"):
        load_run_config(_write(tmp_path, data))


def test_unknown_fit_parameter_is_rejected(tmp_path):
    data = _default_data()
    data["fit"]["float_params"] = ["sqrt_r1", "bogus"]
    with pytest.raises(ConfigError, match="bogus"):
        load_run_config(_write(tmp_path, data))


def test_unknown_keys_are_rejected(tmp_path):
    data = _default_data()
    data["cavity"]["colour"] = "red"
    with pytest.raises(ConfigError, match="cavity.colour"):
        load_run_config(_write(tmp_path, data))


def test_explicit_efficiencies_and_budget_are_exclusive(tmp_path):
    data = _default_data()
    data["detection"]["eta_c"] = 0.8
    with pytest.raises(ConfigError, match="detection"):
        load_run_config(_write(tmp_path, data))


def test_top_level_must_be_a_mapping(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_resolved_configuration_fills_defaults():
    resolved = RunConfig.from_mapping(_default_data()).resolved()
    assert resolved["cavity"]["carrier_hz"] == pytest.approx(2.8176e14, rel=1e-4)
    assert resolved["measurement"]["spur"]["enabled"] is False
    assert RunConfig.from_mapping(resolved).resolved() == resolved


def test_setup_logging_honours_environment(monkeypatch):
    root = logging.getLogger()
    previous = root.level
    monkeypatch.setenv("LOG_LEVEL", "debug")
    try:
        setup_logging()
        assert root.level == logging.DEBUG
        setup_logging("WARNING")
        assert root.level == logging.WARNING
    finally:
        root.setLevel(previous)


def test_unset_environment_variable_names_the_variable(tmp_path, monkeypatch):
    monkeypatch.delenv("SQZCAV_MISSING_SEED", raising=False)
    text = DEFAULT_PATH.read_text().replace("seed: 1", "seed: ${SQZCAV_MISSING_SEED}")
    path = tmp_path / "run.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError, match="SQZCAV_MISSING_SEED"):
        load_run_config(str(path))


def test_references_inside_comments_are_ignored(tmp_path, monkeypatch):
    monkeypatch.delenv("SQZCAV_UNUSED", raising=False)
    path = tmp_path / "run.yaml"
    path.write_text("# seed may come from ${SQZCAV_UNUSED}\n" + DEFAULT_PATH.read_text())
    assert load_run_config(str(path)).measurement.seed == 1


def test_unknown_log_level_falls_back_to_info(monkeypatch):
    root = logging.getLogger()
    previous = root.level
    monkeypatch.setenv("LOG_LEVEL", "chatty")
    try:
        assert setup_logging() == logging.INFO
        assert root.level == logging.INFO
    finally:
        root.setLevel(previous)


def test_third_party_loggers_stay_quiet_at_debug():
    root = logging.getLogger()
    previous = root.level
    try:
        assert setup_logging("debug") == logging.DEBUG
        assert logging.getLogger("joblib").level == logging.WARNING
    finally:
        root.setLevel(previous)
        logging.captureWarnings(False)
