"""
Environment files: one JSON document per generated environment.

Keys are sorted and floats are written at repr precision, so loading a saved
environment gives back the exact arrays and the same seed always produces the
same bytes.
"""

import json
import logging
import os
from dataclasses import asdict, fields
from typing import Any, Dict

import numpy as np

from simenv import EnvGraph, EnvParams
from utils.error_handler import ConfigError, validate_required_fields

logger = logging.getLogger(__name__)

ENV_SCHEMA = "navsim.env"
ENV_SCHEMA_VERSION = 1

REQUIRED_KEYS = ['schema', 'schema_version', 'params', 'positions', 'edges',
                 'navigable', 'pano_latents', 'place_latents']


def env_to_dict(env: EnvGraph) -> Dict[str, Any]:
    return {
        'schema': ENV_SCHEMA,
        'schema_version': ENV_SCHEMA_VERSION,
        'params': asdict(env.params),
        'positions': env.positions.tolist(),
        'edges': [[u, v, length] for u, v, length in env.edges],
        'navigable': {str(node): {str(view): nb for view, nb in sorted(views.items())}
                      for node, views in sorted(env.navigable.items())},
        'pano_latents': env.pano_latents.tolist(),
        'place_latents': env.place_latents.tolist(),
    }


def env_bytes(env: EnvGraph) -> bytes:
    return (json.dumps(env_to_dict(env), sort_keys=True, separators=(',', ':')) + '\n').encode('utf-8')


def save_env(env: EnvGraph, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(env_bytes(env))
    logger.info(f"Saved environment ({env.node_count} nodes) to {path}")
    return path


def env_from_dict(data: Dict[str, Any]) -> EnvGraph:
    if not isinstance(data, dict):
        raise ConfigError("Environment document must be a JSON object", "env.path")
    validate_required_fields(data, REQUIRED_KEYS)
    if data['schema'] != ENV_SCHEMA:
        raise ConfigError(f"Not an environment file (schema {data['schema']!r})", "env.path")
    if data['schema_version'] != ENV_SCHEMA_VERSION:
        raise ConfigError(
            f"Environment schema version {data['schema_version']} is not supported "
            f"(expected {ENV_SCHEMA_VERSION})", "env.path")

    known = {f.name for f in fields(EnvParams)}
    unknown = set(data['params']) - known
    if unknown:
        raise ConfigError(f"Unknown environment parameters: {sorted(unknown)}", "env.path")
    params = EnvParams(**data['params'])
    positions = np.array(data['positions'], dtype=np.float64).reshape(-1, 2)
    pano = np.array(data['pano_latents'], dtype=np.float64)
    place = np.array(data['place_latents'], dtype=np.float64)
    n = positions.shape[0]
    if n != params.nodes or pano.shape[:2] != (n, 36) or place.shape[0] != n:
        raise ConfigError("Environment arrays do not match its node count", "env.path")

    return EnvGraph(
        params=params,
        positions=positions,
        edges=[(int(u), int(v), float(length)) for u, v, length in data['edges']],
        navigable={int(node): {int(view): int(nb) for view, nb in views.items()}
                   for node, views in data['navigable'].items()},
        pano_latents=pano,
        place_latents=place,
    )


def load_env(path: str) -> EnvGraph:
    if not path:
        raise ConfigError("No environment file given", "env.path")
    if not os.path.exists(path):
        raise ConfigError(f"Environment file not found: {path}", "env.path")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Environment file {path} is not valid JSON: {e}", "env.path")
    env = env_from_dict(data)
    logger.debug(f"Loaded environment ({env.node_count} nodes) from {path}")
    return env
