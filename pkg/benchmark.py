"""
Episode suites, named presets, ablation sweeps and the corruption study.
"""

import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from config import RunConfig
from core import NUM_VIEWS, SeededStream, ViewImage
from encoder import saturation_curve
from flops import CostLedger, baseline_step_cost
from lsh_cache import CacheStats
from pipeline import Disposition, Episode, PipelineSettings, check_compatible, run_episode
from simenv import (
    CORRUPTIONS,
    EnvGraph,
    EpisodeSpec,
    MetricsReport,
    compute_metrics,
    generate_from_params,
    render_view,
)
from utils.error_handler import ConfigError, UsageError

logger = logging.getLogger(__name__)

# Overrides applied on top of a base RunConfig
PRESETS: Dict[str, Dict[str, Any]] = {
    'baseline': {'pipeline.mode': 'full'},
    'mue': {'pipeline.mode': 'static'},
    'k_only': {'pipeline.mode': 'adaptive', 'thresholds.enabled': False, 'cache.enabled': False},
    'adaptive': {'pipeline.mode': 'adaptive', 'spatial.k': 4, 'thresholds.A': 9e-4, 'cache.enabled': True},
}

SWEEP_KEYS = {
    'k': 'spatial.k',
    'A': 'thresholds.A',
    'similarity_threshold': 'cache.similarity_threshold',
    'metric': 'cache.metric',
}

DEFAULT_GRIDS: Dict[str, List[Any]] = {
    'k': [1, 2, 3, 4, 5, 6],
    'A': [0.0, 7e-4, 9e-4, 1.5e-3, 2.2e-3],
    'similarity_threshold': [0.75, 0.85, 0.95],
    'rho_temporal': [0.0, 0.4, 0.8, 1.0],
    'metric': ['cosine', 'ssim'],
    'mechanisms': [list(combo) for combo in itertools.product([False, True], repeat=3)],
}

SWEEPS = tuple(DEFAULT_GRIDS)


def apply_preset(rc: RunConfig, name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset: {name} (choose from {', '.join(PRESETS)})", "preset")
    return rc.with_overrides(PRESETS[name])


def sample_episodes(env: EnvGraph, count: int, seed: int = 0, min_hops: int = 3, max_hops: int = 8,
                    success_radius: float = 3.0, step_limit: int = 15) -> List[EpisodeSpec]:
    """Seeded (start, goal) pairs with a hop count in range and the goal outside the success radius"""
    candidates: List[Tuple[int, int]] = []
    for start in range(env.node_count):
        for goal in range(env.node_count):
            hops = env.hops(start, goal)
            if hops is None or not min_hops <= hops <= max_hops:
                continue
            if env.geodesic(start, goal) > success_radius:
                candidates.append((start, goal))
    if not candidates:
        raise ConfigError(
            f"No start/goal pair has {min_hops}..{max_hops} hops and lies beyond {success_radius} m",
            "suite.min_hops")
    picks = SeededStream(seed).fork("episodes").integers(0, len(candidates), count)
    return [
        EpisodeSpec(start=s, goal=g, shortest_path=env.geodesic(s, g), success_radius=success_radius,
                    step_limit=step_limit, episode_id=i)
        for i, (s, g) in enumerate(candidates[int(p)] for p in picks)
    ]


@dataclass
class SuiteResult:
    config: RunConfig
    episodes: List[Episode]
    metrics: MetricsReport
    ledger: CostLedger = field(default_factory=CostLedger)
    cache: CacheStats = field(default_factory=CacheStats)

    @property
    def total_gflops(self) -> float:
        return self.ledger.total

    def dispositions(self) -> Dict[str, int]:
        histogram = {d.value: 0 for d in Disposition}
        for episode in self.episodes:
            for key, value in episode.disposition_histogram().items():
                histogram[key] += value
        return histogram

    def baseline_gflops(self) -> float:
        """Cost of processing every observed panorama fully, for the same steps"""
        cost_cfg = PipelineSettings.from_run_config(self.config).cost_encoder
        return len(self.ledger.steps) * baseline_step_cost(cost_cfg)


# Worker state for the process pool; set once per worker by the initializer
_worker_env: Optional[EnvGraph] = None
_worker_settings: Optional[PipelineSettings] = None


def _init_worker(env: EnvGraph, settings: PipelineSettings) -> None:
    global _worker_env, _worker_settings
    _worker_env = env
    _worker_settings = settings


def _run_in_worker(spec: EpisodeSpec) -> Episode:
    return run_episode(_worker_env, spec, _worker_settings)


def run_suite(env: EnvGraph, rc: RunConfig, jobs: int = 1, progress: bool = False) -> SuiteResult:
    """Run the configured episode suite; results come back in episode order for any job count"""
    settings = PipelineSettings.from_run_config(rc)
    suite = rc.suite
    check_compatible(env, settings)
    specs = sample_episodes(env, suite.episodes, suite.seed, suite.min_hops, suite.max_hops,
                            suite.success_radius, suite.step_limit)
    bar = dict(total=len(specs), desc="episodes", file=sys.stderr, disable=not progress, leave=False)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(env, settings)) as executor:
            episodes = list(tqdm(executor.map(_run_in_worker, specs), **bar))
    else:
        episodes = [run_episode(env, spec, settings) for spec in tqdm(specs, **bar)]

    ledger = CostLedger()
    cache = CacheStats()
    for episode in episodes:
        ledger.extend(episode.ledger)
        cache = cache.merge(episode.cache_stats)
    metrics = compute_metrics(episodes)
    logger.info(
        f"Suite of {len(episodes)} episodes ({settings.mode}, k={settings.k}): "
        f"SR={metrics.SR:.3f} SPL={metrics.SPL:.3f} total={ledger.total:.1f} GFLOPs")
    return SuiteResult(rc, episodes, metrics, ledger, cache)


def summary_row(result: SuiteResult) -> Dict[str, Any]:
    totals = result.ledger.totals()
    row: Dict[str, Any] = dict(result.metrics.aggregate())
    row.update({
        'total_gflops': totals['total_gflops'],
        'per_step_gflops': totals['per_step_mean'],
        'encoder_gflops': totals['encoder_gflops'],
        'hit_rate': result.cache.hit_rate,
        'steps': totals['steps'],
    })
    return row


# Ablations ----------------------------------------------------------------

def _mechanism_overrides(flags: Sequence[bool]) -> Dict[str, Any]:
    spatial, thresholds, cache = (bool(f) for f in flags)
    return {'pipeline.mode': 'adaptive', 'spatial.enabled': spatial,
            'thresholds.enabled': thresholds, 'cache.enabled': cache}


def _mechanism_label(flags: Sequence[bool]) -> str:
    names = [n for n, on in zip(("k", "A", "cache"), flags) if on]
    return "+".join(names) if names else "none"


def ablate(env: EnvGraph, rc: RunConfig, sweep: str, grid: Optional[Sequence[Any]] = None,
           jobs: int = 1, progress: bool = False) -> List[Dict[str, Any]]:
    """One suite per grid point; rows carry the swept value, metrics and compute"""
    if sweep not in DEFAULT_GRIDS:
        raise UsageError(f"Unknown sweep: {sweep} (choose from {', '.join(SWEEPS)})")
    values = list(DEFAULT_GRIDS[sweep] if grid is None else grid)
    if not values:
        raise UsageError(f"Sweep over {sweep} needs a non-empty grid")

    rows = []
    for value in tqdm(values, desc=f"sweep {sweep}", file=sys.stderr, disable=not progress):
        point_env = env
        if sweep == 'rho_temporal':
            point_env = generate_from_params(replace(env.params, rho_temporal=float(value)))
            point_rc = rc
            label = value
        elif sweep == 'mechanisms':
            point_rc = rc.with_overrides(_mechanism_overrides(value))
            label = _mechanism_label(value)
        else:
            point_rc = rc.with_overrides({SWEEP_KEYS[sweep]: value})
            label = value
        result = run_suite(point_env, point_rc, jobs)
        rows.append({'sweep': sweep, 'value': label, **summary_row(result)})
    return rows


def corruption_suite(env: EnvGraph, rc: RunConfig, severity: int = 3,
                     kinds: Sequence[str] = CORRUPTIONS,
                     presets: Sequence[str] = ('baseline', 'adaptive'),
                     denoise_kernel: int = 0, jobs: int = 1,
                     progress: bool = False) -> List[Dict[str, Any]]:
    """Clean run plus every corruption kind per preset, with deltas against the clean run"""
    rows = []
    for preset in presets:
        base = apply_preset(rc, preset)
        clean = summary_row(run_suite(env, base.with_overrides(
            {'corruption.kind': 'none', 'corruption.denoise_kernel': 0}), jobs))
        rows.append(_corruption_row(preset, 'none', 0, 0, clean, clean))
        settings = [(kind, 0) for kind in kinds]
        if denoise_kernel:
            settings += [(kind, denoise_kernel) for kind in kinds]
        for kind, kernel in tqdm(settings, desc=f"corruptions {preset}", file=sys.stderr,
                                 disable=not progress):
            point = base.with_overrides({'corruption.kind': kind, 'corruption.severity': severity,
                                         'corruption.denoise_kernel': kernel})
            rows.append(_corruption_row(preset, kind, severity, kernel,
                                        summary_row(run_suite(env, point, jobs)), clean))
    return rows


def _corruption_row(preset: str, kind: str, severity: int, kernel: int,
                    row: Dict[str, Any], clean: Dict[str, Any]) -> Dict[str, Any]:
    return {
        'preset': preset,
        'corruption': kind,
        'severity': severity,
        'denoise_kernel': kernel,
        'SR': row['SR'],
        'SPL': row['SPL'],
        'total_gflops': row['total_gflops'],
        'sr_delta': row['SR'] - clean['SR'],
        'gflops_delta': row['total_gflops'] - clean['total_gflops'],
    }


# Saturation ---------------------------------------------------------------

def saturation_sample(env: EnvGraph, count: int, seed: int = 0) -> List[ViewImage]:
    """`count` views drawn from random nodes and headings of the environment"""
    stream = SeededStream(seed).fork("saturation")
    nodes = stream.integers(0, env.node_count, count)
    views = stream.integers(1, NUM_VIEWS + 1, count)
    return [render_view(env.view_latent(int(n), int(v)), env.resolution) for n, v in zip(nodes, views)]


def run_saturation(env: EnvGraph, rc: RunConfig, count: int = 64) -> List[float]:
    settings = PipelineSettings.from_run_config(rc)
    return saturation_curve(saturation_sample(env, count, rc.suite.seed), settings.encoder)
