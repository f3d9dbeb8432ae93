import pytest

from app.core.config import load_run_config, validate_run_config
from app.core.errors import ConfigError, DomainError
from app.models.external import ExternalPreset

MINIMAL = """
[profile]
omega = 0.8
"""


def _write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def test_minimal_config_fills_defaults(tmp_path):
    config = load_run_config(_write(tmp_path, MINIMAL))
    assert config.schema_version == 1
    assert config.profile.omega == 0.8
    assert config.potential.coefficients == (1.0, 4.0)
    assert config.external.preset == ExternalPreset.VACUUM
    assert config.grid.grid().n == 64


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_run_config(_write(tmp_path, "[profile]\nomega = 0.8\nomgea = 0.7\n"))
    keys = [problem["key"] for problem in info.value.detail["invalid_config"]]
    assert keys == ["profile.omgea"]
    assert info.value.status_code == 1


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError) as info:
        validate_run_config({"profile": {"e": 0.1}})
    assert [p["key"] for p in info.value.detail["invalid_config"]] == ["profile.omega"]


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_run_config(_write(tmp_path, "[profile\nomega = 0.8\n"))
    assert "malformed TOML" in info.value.detail


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_run_config(tmp_path / "absent.toml")
    assert info.value.to_body() == {
        "error": "ConfigError",
        "detail": f"config file not found: {tmp_path / 'absent.toml'}",
        "status_code": 1,
    }


def test_schema_version_is_checked():
    with pytest.raises(ConfigError):
        validate_run_config({"schema_version": 2, "profile": {"omega": 0.8}})


def test_external_delta_follows_coupling():
    config = validate_run_config(
        {"profile": {"omega": 0.8, "e": 0.0625}, "external": {"preset": "uniform-E", "amplitude": 1.0, "k_exponent": 0.25}}
    )
    spec = config.external.spec(config.profile.e)
    assert spec.delta == pytest.approx(0.0625**0.75)
    explicit = validate_run_config(
        {"profile": {"omega": 0.8}, "external": {"preset": "uniform-E", "delta": 0.5}}
    ).external.spec(0.1)
    assert explicit.delta == 0.5


def test_initial_parameters_from_evolve_section():
    config = validate_run_config({"profile": {"omega": 0.8}, "evolve": {"theta": 0.2, "u": [0.1, 0.0, 0.0]}})
    lam0 = config.evolve.lam0(config.profile.omega)
    assert (lam0.omega, lam0.theta, lam0.u) == (0.8, 0.2, (0.1, 0.0, 0.0))
    assert config.evolve.config().snapshot_stride == 10


def test_physics_errors_use_exit_code_two():
    config = validate_run_config({"profile": {"omega": 1.2}})
    with pytest.raises(DomainError) as info:
        config.profile.radial_grid(config.potential.m)
    assert info.value.status_code == 2
