"""k-extension view selection and rank computation."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Tuple

from core import NUM_VIEWS, circular_view_distance, require_navigable
from utils.error_handler import RangeError

logger = logging.getLogger(__name__)


class ViewClass(str, Enum):
    NAVIGABLE = "navigable"
    EXTENDED = "extended"
    MASKED = "masked"


@dataclass(frozen=True)
class ViewPlan:
    index: int
    kind: ViewClass
    rank: int = 0
    anchor: int = 0


@dataclass(frozen=True)
class SelectionPlan:
    """Classification of every view 1..36 for one panorama"""
    k: int
    navigable: FrozenSet[int]
    views: Tuple[ViewPlan, ...]
    circular: bool = False

    def get(self, index: int) -> ViewPlan:
        return self.views[index - 1]

    def indices(self, kind: ViewClass) -> List[int]:
        return [v.index for v in self.views if v.kind == kind]

    @property
    def extended(self) -> Dict[int, int]:
        """EXTENDED index -> rank"""
        return {v.index: v.rank for v in self.views if v.kind == ViewClass.EXTENDED}

    def count(self, kind: ViewClass) -> int:
        return sum(1 for v in self.views if v.kind == kind)


def _distance(a: int, b: int, circular: bool) -> int:
    return circular_view_distance(a, b) if circular else abs(a - b)


def k_extension(navigable: Iterable[int], k: int, circular: bool = False) -> FrozenSet[int]:
    """Union of the clamped intervals [max(1, i-k), min(i+k, 36)] over navigable i"""
    nav = require_navigable(navigable)
    if k < 0:
        raise RangeError(f"k must be non-negative, got {k}", k)
    selected = set()
    for i in nav:
        if circular:
            selected.update(j for j in range(1, NUM_VIEWS + 1) if circular_view_distance(i, j) <= k)
        else:
            selected.update(range(max(1, i - k), min(i + k, NUM_VIEWS) + 1))
    return frozenset(selected)


def rank(j: int, navigable: Iterable[int], circular: bool = False) -> Tuple[int, int]:
    """(distance to the closest navigable view, that view); ties go to the smaller index"""
    nav = require_navigable(navigable)
    best = min(sorted(nav), key=lambda i: _distance(j, i, circular))
    return _distance(j, best, circular), best


def build_plan(navigable: Iterable[int], k: int, circular: bool = False) -> SelectionPlan:
    nav = require_navigable(navigable)
    selected = k_extension(nav, k, circular)
    views = []
    for j in range(1, NUM_VIEWS + 1):
        if j in nav:
            views.append(ViewPlan(j, ViewClass.NAVIGABLE, 0, j))
        elif j in selected:
            r, anchor = rank(j, nav, circular)
            views.append(ViewPlan(j, ViewClass.EXTENDED, r, anchor))
        else:
            views.append(ViewPlan(j, ViewClass.MASKED))
    plan = SelectionPlan(k=k, navigable=nav, views=tuple(views), circular=circular)
    logger.debug(
        f"Plan k={k}: {len(nav)} navigable, {plan.count(ViewClass.EXTENDED)} extended, "
        f"{plan.count(ViewClass.MASKED)} masked")
    return plan
