import hashlib
import json

import numpy as np
import pytest

from env_store import ENV_SCHEMA_VERSION, env_bytes, env_from_dict, env_to_dict, load_env, save_env
from simenv import generate_env
from utils.error_handler import ConfigError


def test_saved_environment_reloads_exactly(small_env, tmp_path):
    path = save_env(small_env, str(tmp_path / "env.json"))
    loaded = load_env(path)
    assert loaded.params == small_env.params
    assert np.array_equal(loaded.positions, small_env.positions)
    assert np.array_equal(loaded.pano_latents, small_env.pano_latents)
    assert loaded.edges == small_env.edges
    assert loaded.navigable == small_env.navigable
    assert env_bytes(loaded) == env_bytes(small_env)


def test_loaded_environment_renders_the_same(small_env, tmp_path):
    loaded = load_env(save_env(small_env, str(tmp_path / "env.json")))
    assert np.array_equal(loaded.panorama(3).view(7).data, small_env.panorama(3).view(7).data)
    assert loaded.geodesic(0, 5) == small_env.geodesic(0, 5)


def test_same_seed_same_checksum():
    a = hashlib.sha256(env_bytes(generate_env(nodes=10, branching=2, seed=8))).hexdigest()
    b = hashlib.sha256(env_bytes(generate_env(nodes=10, branching=2, seed=8))).hexdigest()
    assert a == b


def test_missing_file():
    with pytest.raises(ConfigError):
        load_env("/nonexistent/env.json")
    with pytest.raises(ConfigError):
        load_env("")


def test_schema_checks(small_env, tmp_path):
    data = env_to_dict(small_env)
    with pytest.raises(ConfigError):
        env_from_dict(dict(data, schema="other"))
    with pytest.raises(ConfigError):
        env_from_dict(dict(data, schema_version=ENV_SCHEMA_VERSION + 1))
    with pytest.raises(ConfigError):
        env_from_dict({k: v for k, v in data.items() if k != 'edges'})
    with pytest.raises(ConfigError):
        env_from_dict(dict(data, params=dict(data['params'], colour=1)))
    with pytest.raises(ConfigError):
        env_from_dict(dict(data, positions=data['positions'][:-1]))

    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigError):
        load_env(str(broken))


def test_document_is_plain_json(small_env):
    document = json.loads(env_bytes(small_env))
    assert document['schema'] == "navsim.env"
    assert document['params']['seed'] == small_env.params.seed
