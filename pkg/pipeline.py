"""
Per-step input-adaptive panorama processing and the episode loop.

Navigable views are always encoded in full. Views within k of a navigable view
are first looked up in the episode's SimHash cache; misses are encoded in one
budgeted batch with rank-decayed exit thresholds and then cached. All other
views are masked with the zero embedding.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional

from adaptive_threshold import ThresholdPolicy, schedule_for_plan
from config import RunConfig
from core import NUM_VIEWS, Embedding, Panorama, SeededStream, ViewImage, median_filter, require_navigable
from encoder import EncoderConfig, encode_full, get_profile, run_budgeted_batch
from flops import SUBGOAL_MACS_PER_STEP, CostLedger, StepCost, ledger_step
from lsh_cache import CONTINUOUS_THRESHOLD, STANDARD_THRESHOLD, CacheStats, CacheTable, HashFamily
from simenv import (
    STOP,
    EnvGraph,
    EpisodeSpec,
    Trajectory,
    corrupt,
    corruption_stream,
    greedy_policy,
)
from spatial import SelectionPlan, ViewClass, build_plan
from subgoal import nearest_view, scan_to_subgoals
from utils.error_handler import ConfigError, InvalidEpisode

logger = logging.getLogger(__name__)

POLICY_LABEL = "greedy goal-embedding policy (stand-in for a cross-modal policy)"
ALL_VIEWS_K = NUM_VIEWS - 1


class Disposition(str, Enum):
    FULL = "FULL"
    EXITED = "EXITED"
    CACHED = "CACHED"
    MASKED = "MASKED"


@dataclass(frozen=True)
class ViewOutcome:
    index: int
    disposition: Disposition
    exit_layer: Optional[int] = None

    def label(self) -> str:
        if self.disposition == Disposition.EXITED:
            return f"EXITED({self.exit_layer})"
        return self.disposition.value


@dataclass
class StepOutput:
    embeddings: List[Embedding]
    outcomes: List[ViewOutcome]
    cost: StepCost
    plan: SelectionPlan
    cache_hits: List[int] = field(default_factory=list)
    layer_executions: int = 0
    cache_lookups: int = 0

    def counts(self) -> Dict[str, int]:
        result = {d.value: 0 for d in Disposition}
        for outcome in self.outcomes:
            result[outcome.disposition.value] += 1
        return result


@dataclass(frozen=True)
class PipelineSettings:
    """Everything process_panorama and run_episode need, resolved from a RunConfig"""
    encoder: EncoderConfig
    cost_encoder: EncoderConfig
    mode: str = "adaptive"
    k: int = 4
    circular: bool = False
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    static_exit_threshold: float = 0.998
    cache_enabled: bool = True
    n_bits: int = 10
    similarity_threshold: float = STANDARD_THRESHOLD
    max_pairs: Optional[int] = None
    metric: str = "cosine"
    stop_threshold: float = 0.99
    context_weight: float = 0.0
    subgoal_mode: str = "graph"
    clearance_deg: float = 8.0
    min_depth: float = 0.5
    max_sector_deg: float = 90.0
    corruption: str = "none"
    severity: int = 3
    denoise_kernel: int = 0
    seed: int = 0

    @classmethod
    def from_run_config(cls, rc: RunConfig) -> "PipelineSettings":
        encoder = get_profile(rc.encoder.profile, rc.encoder.seed)
        cost_encoder = get_profile(rc.encoder.cost_profile)
        if cost_encoder.layers != encoder.layers:
            raise ConfigError(
                f"Cost profile '{cost_encoder.name}' has {cost_encoder.layers} layers but the "
                f"executed encoder has {encoder.layers}", "encoder.cost_profile")
        mode = rc.pipeline.mode
        k = rc.spatial.k if rc.spatial.enabled else ALL_VIEWS_K
        policy = ThresholdPolicy(rc.thresholds.T0, rc.thresholds.A, rc.thresholds.round_decimals,
                                 rc.thresholds.full_compute_cutoff)
        if not rc.thresholds.enabled:
            policy = ThresholdPolicy(rc.thresholds.T0, 0.0, rc.thresholds.round_decimals,
                                     rc.thresholds.full_compute_cutoff)
        cache_enabled = rc.cache.enabled
        if mode == "full":
            k, policy, cache_enabled = ALL_VIEWS_K, ThresholdPolicy.disabled(), False
        elif mode == "static":
            k, cache_enabled = ALL_VIEWS_K, False
        threshold = rc.cache.similarity_threshold
        if threshold is None:
            threshold = CONTINUOUS_THRESHOLD if rc.subgoal.mode == "scan" else STANDARD_THRESHOLD
        return cls(
            encoder=encoder,
            cost_encoder=cost_encoder,
            mode=mode,
            k=k,
            circular=rc.spatial.circular,
            policy=policy,
            static_exit_threshold=rc.thresholds.static_exit_threshold,
            cache_enabled=cache_enabled,
            n_bits=rc.cache.n_bits,
            similarity_threshold=threshold,
            max_pairs=rc.cache.max_pairs,
            metric=rc.cache.metric,
            stop_threshold=rc.agent.stop_threshold,
            context_weight=rc.agent.context_weight,
            subgoal_mode=rc.subgoal.mode,
            clearance_deg=rc.subgoal.clearance_deg,
            min_depth=rc.subgoal.min_depth,
            max_sector_deg=rc.subgoal.max_sector_deg,
            corruption=rc.corruption.kind,
            severity=rc.corruption.severity,
            denoise_kernel=rc.corruption.denoise_kernel,
            seed=rc.suite.seed,
        )


def process_panorama(P: Panorama, cfg: EncoderConfig, policy: ThresholdPolicy,
                     table: Optional[CacheTable], k: int, cost_cfg: Optional[EncoderConfig] = None,
                     navigable: Optional[FrozenSet[int]] = None, circular: bool = False,
                     subgoal_macs: int = 0) -> StepOutput:
    """One step of input-adaptive processing; `table=None` disables the cache"""
    cost_cfg = cost_cfg or cfg
    nav = require_navigable(P.navigable if navigable is None else navigable)
    plan = build_plan(nav, k, circular)
    schedule = schedule_for_plan(plan, policy)
    embeddings: List[Optional[Embedding]] = [None] * NUM_VIEWS
    outcomes: List[Optional[ViewOutcome]] = [None] * NUM_VIEWS

    for j in sorted(nav):
        embeddings[j - 1], _ = encode_full(P.view(j), cfg)
        outcomes[j - 1] = ViewOutcome(j, Disposition.FULL)

    hits: List[int] = []
    misses: List[int] = []
    for j in sorted(schedule):
        cached = table.find_similar(P.view(j)) if table is not None else None
        if cached is not None:
            embeddings[j - 1] = cached
            outcomes[j - 1] = ViewOutcome(j, Disposition.CACHED)
            hits.append(j)
        else:
            misses.append(j)

    batch = run_budgeted_batch([P.view(j) for j in misses], [schedule[j] for j in misses], cfg)
    exits: Dict[int, int] = {}
    inserts = 0
    for j, record in zip(misses, batch.records):
        embeddings[j - 1] = record.embedding
        outcomes[j - 1] = ViewOutcome(j, Disposition.EXITED, record.exit_layer)
        exits[j] = record.exit_layer
        if table is not None:
            table.insert(P.view(j), record.embedding)
            inserts += 1

    for j in plan.indices(ViewClass.MASKED):
        embeddings[j - 1] = Embedding.masked(cfg.embedding_dim)
        outcomes[j - 1] = ViewOutcome(j, Disposition.MASKED)

    hash_ops = (len(schedule) + inserts) if table is not None else 0
    n_bits = table.family.n if table is not None else 0
    cost = ledger_step(plan, exits, hits, cost_cfg, hash_ops=hash_ops, n_bits=n_bits,
                       subgoal_macs=subgoal_macs)
    logger.debug(f"Step: {len(nav)} full, {len(exits)} exited, {len(hits)} cached, "
                 f"{plan.count(ViewClass.MASKED)} masked, {cost.total:.2f} GFLOPs")
    lookups = len(schedule) if table is not None else 0
    return StepOutput(embeddings, outcomes, cost, plan, hits,
                      batch.layer_executions + len(nav) * cfg.layers, lookups)


def process_panorama_static(P: Panorama, cfg: EncoderConfig, threshold: float,
                            cost_cfg: Optional[EncoderConfig] = None,
                            navigable: Optional[FrozenSet[int]] = None,
                            subgoal_macs: int = 0) -> StepOutput:
    """Uniform-threshold early exit on all 36 views, navigable ones included"""
    cost_cfg = cost_cfg or cfg
    nav = require_navigable(P.navigable if navigable is None else navigable)
    plan = build_plan(nav, ALL_VIEWS_K)
    indices = list(range(1, NUM_VIEWS + 1))
    batch = run_budgeted_batch([P.view(j) for j in indices], [threshold] * NUM_VIEWS, cfg)
    embeddings = [r.embedding for r in batch.records]
    outcomes = [ViewOutcome(j, Disposition.EXITED, r.exit_layer) for j, r in zip(indices, batch.records)]
    exits = {j: r.exit_layer for j, r in zip(indices, batch.records)}
    cost = ledger_step(plan, exits, [], cost_cfg, subgoal_macs=subgoal_macs)
    return StepOutput(embeddings, outcomes, cost, plan, [], batch.layer_executions)


# Episodes -----------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    node: int
    navigable: List[int]
    action: int
    dispositions: List[str]
    cost: Dict[str, float]
    cache_hits: int
    flags: List[str] = field(default_factory=list)
    cache_lookups: int = 0

    @property
    def hit_rate(self) -> float:
        return self.cache_hits / self.cache_lookups if self.cache_lookups else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            'step': self.step,
            'node': self.node,
            'navigable': list(self.navigable),
            'action': 'STOP' if self.action == STOP else self.action,
            'dispositions': list(self.dispositions),
            'cost': dict(self.cost),
            'cache_hits': self.cache_hits,
            'cache_lookups': self.cache_lookups,
            'hit_rate': self.hit_rate,
            'flags': list(self.flags),
        }


@dataclass
class Episode:
    spec: EpisodeSpec
    trajectory: Trajectory
    steps: List[StepRecord]
    ledger: CostLedger
    cache_stats: CacheStats
    policy_label: str = POLICY_LABEL

    @property
    def flags(self) -> List[str]:
        flags = []
        if self.trajectory.forced_stop:
            flags.append("forced_stop")
        for step in self.steps:
            flags.extend(f"step{step.step}:{flag}" for flag in step.flags)
        return flags

    def disposition_histogram(self) -> Dict[str, int]:
        histogram = {d.value: 0 for d in Disposition}
        for step in self.steps:
            for label in step.dispositions:
                histogram[label.split('(')[0]] += 1
        return histogram


def observe(env: EnvGraph, node: int, settings: PipelineSettings, episode_id: int, step: int) -> Panorama:
    """Render the node's panorama, then apply corruption and optional denoising"""
    panorama = env.panorama(node, settings.encoder.image_side)
    if settings.corruption == "none" and not settings.denoise_kernel:
        return panorama
    views: List[ViewImage] = []
    for j, view in enumerate(panorama.views, 1):
        if settings.corruption != "none":
            stream = corruption_stream(settings.seed, episode_id, step, j)
            view = corrupt(view, settings.corruption, settings.severity, stream)
        if settings.denoise_kernel:
            view = median_filter(view, settings.denoise_kernel)
        views.append(view)
    return Panorama(tuple(views), panorama.navigable)


def check_compatible(env: EnvGraph, settings: PipelineSettings) -> None:
    if env.resolution != settings.encoder.image_side:
        raise ConfigError(
            f"Environment renders {env.resolution}px views but the encoder expects "
            f"{settings.encoder.image_side}px", "encoder.profile")


def run_episode(env: EnvGraph, spec: EpisodeSpec, settings: PipelineSettings) -> Episode:
    """Observe, process, act until STOP or the step limit; the cache lives for one episode"""
    for node in (spec.start, spec.goal):
        if not 0 <= node < env.node_count:
            raise InvalidEpisode(f"Node {node} is not in the environment", spec.start, spec.goal)
    if env.geodesic(spec.start, spec.goal) == float('inf'):
        raise InvalidEpisode(f"Goal {spec.goal} is unreachable from {spec.start}", spec.start, spec.goal)
    check_compatible(env, settings)

    enc = settings.encoder
    table = None
    if settings.cache_enabled:
        family = HashFamily(enc.input_length, settings.n_bits,
                            SeededStream(settings.seed).fork("hash").fork(spec.episode_id))
        table = CacheTable(family, settings.similarity_threshold, settings.max_pairs, settings.metric)
    goal_embedding, _ = encode_full(env.goal_view(spec.goal, enc.image_side), enc)

    ledger = CostLedger()
    steps: List[StepRecord] = []
    node = spec.start
    path = [node]
    distances = [env.geodesic(node, spec.goal)]
    length = 0.0
    stopped = False
    subgoal_macs = SUBGOAL_MACS_PER_STEP if settings.subgoal_mode == "scan" else 0

    for step in range(1, spec.step_limit + 1):
        flags: List[str] = []
        if settings.subgoal_mode == "scan":
            predicted = scan_to_subgoals(env.scan(node), settings.clearance_deg,
                                         settings.min_depth, settings.max_sector_deg)
            navigable = frozenset(predicted.views)
        else:
            navigable = env.navigable_views(node)
        if not navigable:
            flags.append("empty_subgoal_prediction")
            logger.warning(f"Episode {spec.episode_id} step {step}: no subgoal detected at node {node}; stopping")
            steps.append(StepRecord(step, node, [], STOP, [], StepCost().to_dict(), 0, flags))
            stopped = True
            break

        panorama = observe(env, node, settings, spec.episode_id, step)
        if settings.mode == "static":
            output = process_panorama_static(panorama, enc, settings.static_exit_threshold,
                                             settings.cost_encoder, navigable, subgoal_macs)
        else:
            output = process_panorama(panorama, enc, settings.policy, table, settings.k,
                                      settings.cost_encoder, navigable, settings.circular, subgoal_macs)
        ledger.record(output.cost)
        action = greedy_policy(output.embeddings, goal_embedding, sorted(navigable),
                               settings.stop_threshold, settings.context_weight)
        steps.append(StepRecord(step, node, sorted(navigable), action,
                                [o.label() for o in output.outcomes], output.cost.to_dict(),
                                len(output.cache_hits), flags, output.cache_lookups))
        if action == STOP:
            stopped = True
            break

        if settings.subgoal_mode == "scan":
            action = nearest_view(env.navigable_views(node), action)
        nxt = env.view_to_neighbor(node, action)
        length += env.edge_length(node, nxt)
        node = nxt
        path.append(node)
        distances.append(env.geodesic(node, spec.goal))

    forced = not stopped
    trajectory = Trajectory(spec, path, distances, length, stopped=True, forced_stop=forced)
    stats = table.stats if table is not None else CacheStats()
    logger.debug(f"Episode {spec.episode_id}: {len(steps)} steps, {len(path) - 1} moves, "
                 f"{ledger.total:.1f} GFLOPs, final distance {distances[-1]:.2f} m")
    return Episode(spec, trajectory, steps, ledger, stats)
