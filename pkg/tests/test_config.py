import json
import os

import pytest

from config import ConfigManager, RunConfig, load_run_config, parse_override, run_schema
from utils.config_schema import FieldType
from utils.error_handler import ConfigError


def test_defaults_are_valid():
    rc = RunConfig()
    rc.validate()
    assert rc.spatial.k == 4
    assert rc.thresholds.A == 9e-4
    assert rc.cache.similarity_threshold is None
    assert rc.suite.episodes == 50
    assert rc.suite.step_limit == 15


def test_round_trip_through_dict():
    rc = RunConfig().with_overrides({'spatial.k': 2, 'cache.enabled': False})
    again = RunConfig.from_dict(json.loads(json.dumps(rc.to_dict())))
    assert again == rc
    assert again.spatial.k == 2


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({'spatial': {'kk': 3}})
    assert exc.value.field == 'spatial.kk'
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'telemetry': {}})
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({'spatial': 3})


@pytest.mark.parametrize("override", [
    {'spatial.k': -1},
    {'spatial.k': 2.5},
    {'spatial.k': True},
    {'thresholds.A': -0.001},
    {'thresholds.T0': 0.0},
    {'cache.n_bits': 0},
    {'cache.metric': 'l1'},
    {'corruption.kind': 'spatter'},
    {'corruption.severity': 6},
    {'corruption.denoise_kernel': 4},
    {'suite.min_hops': 9},
    {'pipeline.mode': 'fast'},
    {'encoder.profile': 'vit_b16'},
])
def test_invalid_values(override):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(override)


def test_integers_are_accepted_for_floats():
    assert RunConfig().with_overrides({'agent.stop_threshold': 1}).agent.stop_threshold == 1


def test_max_pairs_may_be_null():
    assert RunConfig().with_overrides({'cache.max_pairs': None}).cache.max_pairs is None
    assert RunConfig().with_overrides({'cache.max_pairs': 100}).cache.max_pairs == 100


def test_parse_override():
    assert parse_override("spatial.k=3") == {'spatial.k': 3}
    assert parse_override("cache.enabled=false") == {'cache.enabled': False}
    assert parse_override("corruption.kind=speckle") == {'corruption.kind': 'speckle'}
    with pytest.raises(ConfigError):
        parse_override("spatial.k")


def test_load_run_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({'spatial': {'k': 2}, 'suite': {'episodes': 5}}))
    rc = load_run_config(str(path), ["spatial.k=6", "thresholds.A=0.0015"])
    assert rc.spatial.k == 6
    assert rc.suite.episodes == 5
    assert rc.thresholds.A == 0.0015


def test_load_run_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))


def test_schema_covers_every_field():
    for section, values in RunConfig().to_dict().items():
        for key in values:
            assert run_schema.get_schema(section, key) is not None, f"{section}.{key}"
    assert run_schema.get_schema('pipeline', 'mode').field_type == FieldType.CHOICE


def test_every_field_type_is_in_use():
    used = {schema.field_type for schema in run_schema.schemas.values()}
    assert used == set(FieldType)


def test_nullable_threshold_rejects_lists():
    assert run_schema.validate_field_value('cache', 'similarity_threshold', None) == []
    assert run_schema.validate_field_value('cache', 'similarity_threshold', [0.9]) != []
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({'cache.similarity_threshold': [0.9]})


def test_environment_settings(monkeypatch):
    monkeypatch.setenv('NAV_JOBS', '3')
    monkeypatch.setenv('NAV_LOG_LEVEL', 'DEBUG')
    manager = ConfigManager()
    assert manager.config.jobs == 3
    assert manager.config.logging.level == 'DEBUG'
    assert manager.validate() == []


def test_environment_validation(monkeypatch):
    monkeypatch.setenv('NAV_JOBS', '0')
    monkeypatch.setenv('NAV_LOG_LEVEL', 'LOUD')
    issues = ConfigManager().validate()
    assert len(issues) == 2
    monkeypatch.setenv('NAV_JOBS', 'many')
    with pytest.raises(ConfigError):
        ConfigManager()


def test_example_config_is_complete():
    path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'examples_config.json')
    rc = load_run_config(path)
    assert rc.with_overrides({'env.path': ''}) == RunConfig()
