"""Rank-decayed early-exit thresholds: T = T0 * exp(-A * R), rounded, with a full-compute cutoff."""

import logging
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict

from spatial import SelectionPlan
from utils.error_handler import ConfigError, NavigableNeedsNoThreshold, RangeError

logger = logging.getLogger(__name__)

FULL_COMPUTE = 1.0


@dataclass(frozen=True)
class ThresholdPolicy:
    T0: float = 1.0
    A: float = 9e-4
    round_decimals: int = 3
    full_compute_cutoff: float = 0.998

    def __post_init__(self):
        if not 0.0 < self.T0 <= 1.0:
            raise ConfigError(f"T0 must lie in (0, 1], got {self.T0}", "thresholds.T0")
        if self.A < 0.0:
            raise ConfigError(f"A must be non-negative, got {self.A}", "thresholds.A")
        if not 0.0 < self.full_compute_cutoff <= 1.0:
            raise ConfigError(f"Cutoff must lie in (0, 1], got {self.full_compute_cutoff}",
                              "thresholds.full_compute_cutoff")
        if self.round_decimals < 0:
            raise ConfigError("round_decimals must be non-negative", "thresholds.round_decimals")

    @classmethod
    def disabled(cls) -> "ThresholdPolicy":
        """Every rank maps to full compute"""
        return cls(A=0.0)


def raw_threshold(R: int, policy: ThresholdPolicy) -> float:
    return policy.T0 * math.exp(-policy.A * R)


def round_half_up(value: float, decimals: int) -> float:
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def threshold_for_rank(R: int, policy: ThresholdPolicy) -> float:
    if R == 0:
        raise NavigableNeedsNoThreshold()
    if R < 0:
        raise RangeError(f"Rank must be positive, got {R}", R)
    rounded = round_half_up(raw_threshold(R, policy), policy.round_decimals)
    if rounded >= policy.full_compute_cutoff:
        return FULL_COMPUTE
    # keep the result in (0, 1]
    return max(rounded, 10.0 ** -policy.round_decimals)


def schedule_for_plan(plan: SelectionPlan, policy: ThresholdPolicy) -> Dict[int, float]:
    """Exit threshold for each EXTENDED view of the plan"""
    return {index: threshold_for_rank(R, policy) for index, R in plan.extended.items()}
