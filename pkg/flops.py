"""
Analytical compute model and per-component ledger.

All costs are multiply-accumulate counts divided by 1e9 and reported under the
name "GFLOPs", the convention of common MAC-counting profilers. The convention
string travels with every report.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping

from core import CHANNELS, NUM_VIEWS
from encoder import EncoderConfig
from spatial import SelectionPlan, ViewClass
from utils.error_handler import RangeError

logger = logging.getLogger(__name__)

COST_CONVENTION = "GFLOPs = multiply-accumulate operations / 1e9 (MAC convention)"
GIGA = 1e9

# Visual encoder share of a full-panorama step; everything else (policy,
# history) is charged as one per-step constant.
ENCODER_SHARE = 0.9950
POLICY_COST_RATIO = (1.0 - ENCODER_SHARE) / ENCODER_SHARE

SCAN_BINS = 360
SUBGOAL_MACS_PER_STEP = 2 * SCAN_BINS

COMPONENTS = ("encoder", "policy", "hash", "subgoal")


def layer_macs(cfg: EncoderConfig) -> int:
    n, d, m = cfg.tokens, cfg.hidden, cfg.mlp_dim
    # QKV + output projections, attention matmuls, MLP
    return 4 * n * d * d + 2 * n * n * d + 2 * n * d * m


def patch_embed_macs(cfg: EncoderConfig) -> int:
    return (cfg.tokens - 1) * cfg.hidden * CHANNELS * cfg.patch * cfg.patch


def cost_full_view(cfg: EncoderConfig) -> float:
    return (patch_embed_macs(cfg) + cfg.layers * layer_macs(cfg)) / GIGA


def cost_exit(cfg: EncoderConfig, exit_layer: int) -> float:
    if not 1 <= exit_layer <= cfg.layers:
        raise RangeError(f"Exit layer {exit_layer} outside 1..{cfg.layers}", exit_layer)
    return (patch_embed_macs(cfg) + exit_layer * layer_macs(cfg)) / GIGA


def policy_step_cost(cfg: EncoderConfig) -> float:
    """Fixed per-decision cost standing in for the cross-modal policy and history encoder"""
    return POLICY_COST_RATIO * NUM_VIEWS * cost_full_view(cfg)


def hash_op_cost(cfg: EncoderConfig, n_bits: int) -> float:
    """One SimHash key over a view of the cost profile's size"""
    return n_bits * CHANNELS * cfg.image_side * cfg.image_side / GIGA


@dataclass
class StepCost:
    encoder: float = 0.0
    policy: float = 0.0
    hash: float = 0.0
    subgoal: float = 0.0

    @property
    def total(self) -> float:
        return self.encoder + self.policy + self.hash + self.subgoal

    def to_dict(self) -> Dict[str, float]:
        return {
            'encoder_gflops': self.encoder,
            'policy_gflops': self.policy,
            'hash_gflops': self.hash,
            'subgoal_gflops': self.subgoal,
            'total_gflops': self.total,
        }


def ledger_step(plan: SelectionPlan, exits: Mapping[int, int], cache_hits: Iterable[int],
                cfg: EncoderConfig, hash_ops: int = 0, n_bits: int = 10,
                include_policy: bool = True, subgoal_macs: int = 0) -> StepCost:
    """
    Cost of one panorama. `exits` maps each early-exit encoded view to its exit
    layer; navigable views not in `exits` are costed as full passes; cache hits
    and masked views cost no encoder compute.
    """
    hits = set(cache_hits)
    encoder_cost = 0.0
    for view in plan.views:
        if view.index in hits or view.kind == ViewClass.MASKED:
            continue
        if view.index in exits:
            encoder_cost += cost_exit(cfg, exits[view.index])
        elif view.kind == ViewClass.NAVIGABLE:
            encoder_cost += cost_full_view(cfg)
    return StepCost(
        encoder=encoder_cost,
        policy=policy_step_cost(cfg) if include_policy else 0.0,
        hash=hash_ops * hash_op_cost(cfg, n_bits),
        subgoal=subgoal_macs / GIGA,
    )


@dataclass
class CostLedger:
    """Per-component accumulator; totals are sums of recorded steps"""
    steps: List[StepCost] = field(default_factory=list)

    def record(self, step: StepCost) -> None:
        self.steps.append(step)

    def extend(self, other: "CostLedger") -> None:
        self.steps.extend(other.steps)

    def component(self, name: str) -> float:
        return sum(getattr(step, name) for step in self.steps)

    @property
    def total(self) -> float:
        return sum(step.total for step in self.steps)

    def totals(self) -> Dict[str, float]:
        result = {f"{name}_gflops": self.component(name) for name in COMPONENTS}
        result['total_gflops'] = self.total
        result['per_step_mean'] = self.total / len(self.steps) if self.steps else 0.0
        result['steps'] = len(self.steps)
        return result

    def shares(self) -> Dict[str, float]:
        total = self.total
        if total <= 0.0:
            return {name: 0.0 for name in COMPONENTS}
        return {name: self.component(name) / total for name in COMPONENTS}


def baseline_step_cost(cfg: EncoderConfig, include_policy: bool = True) -> float:
    """Full processing of all 36 views plus the policy constant"""
    return NUM_VIEWS * cost_full_view(cfg) + (policy_step_cost(cfg) if include_policy else 0.0)
