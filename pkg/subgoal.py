"""
Scan-only subgoal prediction and Sinkhorn-divergence evaluation.

Subgoals are the midpoints of free angular sectors in a 360-bin range scan.
Bin b covers headings [b-1, b) degrees, counter-clockwise from +x, in the
same frame as the panorama's view headings.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import ot
from scipy.optimize import minimize

from core import SeededStream, circular_view_distance, heading_to_view
from utils.error_handler import ConfigError, ConvergenceError, NotADistribution, ShapeError

logger = logging.getLogger(__name__)

NUM_BINS = 360
MASS_TOLERANCE = 1e-9
MARGINAL_TOLERANCE = 1e-6
SOLVER_TOLERANCE = 1e-10
ANNEAL_FACTOR = 0.5
ANNEAL_ITERS = 100


@dataclass(frozen=True, eq=False)
class OccupancyScan:
    readings: np.ndarray
    max_range: float

    def __post_init__(self):
        readings = np.array(self.readings, dtype=np.float64, copy=True).reshape(-1)
        if readings.shape[0] != NUM_BINS:
            raise ShapeError(f"Scan needs {NUM_BINS} bins, got {readings.shape[0]}",
                             NUM_BINS, readings.shape[0])
        if self.max_range <= 0:
            raise ShapeError(f"max_range must be positive, got {self.max_range}")
        if np.any(readings <= 0) or np.any(readings > self.max_range) or not np.all(np.isfinite(readings)):
            raise ShapeError(f"Scan readings must lie in (0, {self.max_range}]")
        readings.setflags(write=False)
        object.__setattr__(self, 'readings', readings)

    def rotated(self, bins: int) -> "OccupancyScan":
        """Scan seen after turning the sensor frame by -bins degrees"""
        return OccupancyScan(np.roll(self.readings, bins), self.max_range)


@dataclass(frozen=True)
class Subgoal:
    view: int
    heading: float
    width: float
    depth: float


@dataclass
class SubgoalSet:
    subgoals: List[Subgoal] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)

    @property
    def views(self) -> List[int]:
        return [s.view for s in self.subgoals]

    def __len__(self) -> int:
        return len(self.subgoals)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 2)
        masses = np.array(self.masses, dtype=np.float64, copy=True).reshape(-1)
        if points.shape[0] != masses.shape[0]:
            raise ShapeError("Each support point needs one mass", points.shape[0], masses.shape[0])
        if masses.size == 0:
            raise NotADistribution("Distribution has no support", 0.0)
        total = float(masses.sum())
        if np.any(masses < 0) or abs(total - 1.0) > MASS_TOLERANCE:
            raise NotADistribution(f"Masses must be non-negative and sum to 1, got {total}", total)
        points.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'masses', masses)

    @classmethod
    def uniform(cls, points: np.ndarray) -> "DiscreteDistribution":
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))


# Detection ----------------------------------------------------------------

def _free_runs(free: np.ndarray) -> List[Tuple[int, int]]:
    """(start_bin, length) of maximal circular runs of free bins, 0-based starts"""
    if free.all():
        return [(0, NUM_BINS)]
    if not free.any():
        return []
    # start scanning just after a blocked bin so wrapping runs stay whole
    offset = int(np.argmin(free)) + 1
    runs = []
    length = 0
    start = None
    for step in range(NUM_BINS):
        b = (offset + step) % NUM_BINS
        if free[b]:
            if start is None:
                start = b
            length += 1
        elif start is not None:
            runs.append((start, length))
            start, length = None, 0
    if start is not None:
        runs.append((start, length))
    return sorted(runs)


def scan_to_subgoals(scan: OccupancyScan, clearance_deg: float = 8.0, min_depth: float = 0.5,
                     max_sector_deg: float = 90.0) -> SubgoalSet:
    """
    Maximal runs of bins reading at least `min_depth` and at least `clearance_deg`
    wide become subgoals at their midpoint heading. Runs wider than
    `max_sector_deg` are split into equal sectors. Weights are proportional to width.
    """
    if max_sector_deg <= 0:
        raise ConfigError("max_sector_deg must be positive", "subgoal.max_sector_deg")
    free = scan.readings >= min_depth
    subgoals: List[Subgoal] = []
    for start, length in _free_runs(free):
        if length < clearance_deg:
            continue
        pieces = max(1, math.ceil(length / max_sector_deg))
        piece_width = length / pieces
        for p in range(pieces):
            lo = start + p * piece_width
            hi = lo + piece_width
            heading = ((lo + hi) / 2.0) % 360.0
            first = int(math.floor(lo))
            last = int(math.ceil(hi))
            bins = [(b % NUM_BINS) for b in range(first, last)]
            depth = float(np.mean(scan.readings[bins]))
            subgoals.append(Subgoal(heading_to_view(heading), heading, piece_width, depth))
    subgoals = _merge_by_view(subgoals)
    total = sum(s.width for s in subgoals)
    weights = [s.width / total for s in subgoals] if subgoals else []
    return SubgoalSet(subgoals, weights)


def _merge_by_view(subgoals: List[Subgoal]) -> List[Subgoal]:
    """One subgoal per view: widths add up, the widest piece keeps its heading and depth"""
    by_view: Dict[int, List[Subgoal]] = {}
    for s in subgoals:
        by_view.setdefault(s.view, []).append(s)
    merged = []
    for view in sorted(by_view):
        pieces = by_view[view]
        widest = max(pieces, key=lambda s: s.width)
        merged.append(Subgoal(view, widest.heading, sum(s.width for s in pieces), widest.depth))
    return merged


def subgoal_distribution(subgoals: SubgoalSet) -> Optional[DiscreteDistribution]:
    """Support points at each subgoal's heading and mean free depth"""
    if not subgoals.subgoals:
        return None
    points = [(s.depth * math.cos(math.radians(s.heading)), s.depth * math.sin(math.radians(s.heading)))
              for s in subgoals.subgoals]
    masses = np.array(subgoals.weights)
    return DiscreteDistribution(np.array(points), masses / masses.sum())


def nearest_view(views: Sequence[int], target: int) -> int:
    """Member of `views` circularly closest to `target`, ties to the lower index"""
    return min(sorted(views), key=lambda v: circular_view_distance(v, target))


# Sinkhorn -----------------------------------------------------------------

def _positive_support(dist: DiscreteDistribution) -> Tuple[np.ndarray, np.ndarray]:
    keep = dist.masses > 0
    return dist.points[keep], dist.masses[keep]


def _annealing_schedule(epsilon: float, cost: np.ndarray) -> List[float]:
    """Regularisations halving from the cost scale down to just above epsilon"""
    schedule = []
    reg = float(cost.max())
    while reg > epsilon:
        schedule.append(reg)
        reg *= ANNEAL_FACTOR
    return schedule


def _marginal_residual(plan: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return max(float(np.abs(plan.sum(axis=1) - a).max()), float(np.abs(plan.sum(axis=0) - b).max()))


def _newton_polish(a: np.ndarray, b: np.ndarray, cost: np.ndarray, f: np.ndarray, g: np.ndarray,
                   epsilon: float, max_iters: int) -> np.ndarray:
    """
    Trust-region Newton on the dual, started from Sinkhorn potentials.
    The dual gradient is the marginal violation, so weakly coupled blocks that
    leave Sinkhorn crawling are settled in a few steps. The last g is pinned
    to zero to remove the constant shift between f and g.
    """
    n = len(a)
    log_ab = np.log(a)[:, None] + np.log(b)[None, :]
    x0 = np.concatenate([f + g[-1], g[:-1] - g[-1]])

    def plan_of(x: np.ndarray) -> np.ndarray:
        gg = np.append(x[n:], 0.0)
        return np.exp(np.minimum(log_ab + (x[:n, None] + gg[None, :] - cost) / epsilon, 700.0))

    def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
        plan = plan_of(x)
        value = epsilon * float(plan.sum()) - float(a @ x[:n]) - float(b[:-1] @ x[n:])
        grad = np.concatenate([plan.sum(axis=1) - a, (plan.sum(axis=0) - b)[:-1]])
        return value, grad

    def hessian(x: np.ndarray) -> np.ndarray:
        plan = plan_of(x)
        top = np.hstack([np.diag(plan.sum(axis=1)), plan[:, :-1]])
        bottom = np.hstack([plan[:, :-1].T, np.diag(plan.sum(axis=0)[:-1])])
        return np.vstack([top, bottom]) / epsilon

    result = minimize(objective, x0, jac=True, hess=hessian, method='trust-exact',
                      options={'gtol': SOLVER_TOLERANCE, 'maxiter': max_iters})
    return plan_of(result.x)


def _entropic_ot(mu: DiscreteDistribution, nu: DiscreteDistribution, epsilon: float,
                 max_iters: int) -> float:
    """
    Entropic OT value <P, C> + eps * KL(P | a x b) with squared-Euclidean cost.
    Log-stabilised Sinkhorn is warm-started through a halving epsilon schedule;
    `max_iters` bounds the iterations at the target epsilon and, when the
    marginals are still off, the Newton steps that follow.
    """
    x, a = _positive_support(mu)
    y, b = _positive_support(nu)
    cost = ot.dist(x, y, metric='sqeuclidean')
    warmstart = (np.zeros(len(a)), np.zeros(len(b)))
    for reg in _annealing_schedule(epsilon, cost):
        _, log = ot.bregman.sinkhorn_stabilized(a, b, cost, reg, numItermax=ANNEAL_ITERS,
                                                stopThr=SOLVER_TOLERANCE, warmstart=warmstart,
                                                log=True, warn=False)
        warmstart = (log['alpha'], log['beta'])
    plan, log = ot.bregman.sinkhorn_stabilized(a, b, cost, epsilon, numItermax=max_iters,
                                               stopThr=SOLVER_TOLERANCE, warmstart=warmstart,
                                               print_period=1, log=True, warn=False)
    residual = _marginal_residual(plan, a, b)
    if residual > MARGINAL_TOLERANCE and len(a) > 1 and len(b) > 1:
        logger.debug(f"Sinkhorn residual {residual:.2e} after {max_iters} iterations; refining with Newton")
        f = log['alpha'] - epsilon * np.log(a)
        g = log['beta'] - epsilon * np.log(b)
        plan = _newton_polish(a, b, cost, f, g, epsilon, max_iters)
        residual = _marginal_residual(plan, a, b)
    if residual > MARGINAL_TOLERANCE:
        raise ConvergenceError(
            f"Sinkhorn did not reach marginal tolerance in {max_iters} iterations",
            residual, max_iters)
    support = plan > 0
    reference = np.outer(a, b)
    kl = float(np.sum(plan[support] * np.log(plan[support] / reference[support]))
               - plan.sum() + reference.sum())
    return float(np.sum(plan * cost)) + epsilon * kl


def _canonical_key(dist: DiscreteDistribution) -> Tuple:
    return (dist.points.shape[0], dist.points.tobytes(), dist.masses.tobytes())


def sinkhorn_divergence(mu: DiscreteDistribution, nu: DiscreteDistribution,
                        epsilon: float = 0.05, max_iters: int = 500) -> float:
    """Debiased S = OT(mu, nu) - OT(mu, mu)/2 - OT(nu, nu)/2 with squared-Euclidean cost"""
    if epsilon <= 0:
        raise ConfigError(f"Sinkhorn epsilon must be positive, got {epsilon}", "subgoal.epsilon")
    if max_iters < 1:
        raise ConfigError(f"Sinkhorn needs at least one iteration, got {max_iters}", "subgoal.max_iters")
    for dist in (mu, nu):
        total = float(dist.masses.sum())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise NotADistribution(f"Masses sum to {total}", total)
    if _canonical_key(nu) < _canonical_key(mu):
        mu, nu = nu, mu
    cross = _entropic_ot(mu, nu, epsilon, max_iters)
    self_mu = _entropic_ot(mu, mu, epsilon, max_iters)
    self_nu = _entropic_ot(nu, nu, epsilon, max_iters)
    return cross - 0.5 * self_mu - 0.5 * self_nu


# Evaluation ---------------------------------------------------------------

@dataclass
class SgmEvaluation:
    mean_divergence: float
    divergences: List[float]
    empty_predictions: List[int]
    shuffled_divergence: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            'mean_divergence': self.mean_divergence,
            'nodes': len(self.divergences),
            'empty_predictions': list(self.empty_predictions),
            'shuffled_divergence': self.shuffled_divergence,
        }


def truth_distribution(env, node: int) -> DiscreteDistribution:
    return DiscreteDistribution.uniform(env.neighbor_offsets(node))


def predicted_distribution(env, node: int, clearance_deg: float = 8.0, min_depth: float = 0.5,
                           max_sector_deg: float = 90.0) -> Optional[DiscreteDistribution]:
    return subgoal_distribution(scan_to_subgoals(env.scan(node), clearance_deg, min_depth, max_sector_deg))


def evaluate_sgm(env, nodes: Optional[Sequence[int]] = None, epsilon: float = 0.05,
                 max_iters: int = 500, clearance_deg: float = 8.0, min_depth: float = 0.5,
                 max_sector_deg: float = 90.0, predictor=None, shuffle_seed: Optional[int] = None) -> SgmEvaluation:
    """
    Mean divergence between predicted and true subgoal distributions over `nodes`.
    An empty prediction is scored against a uniform-over-truth fallback and flagged.
    With `shuffle_seed`, also scores predictions against a permutation of the
    truths as a baseline.
    """
    nodes = list(range(env.node_count)) if nodes is None else list(nodes)
    if predictor is None:
        predictor = lambda n: predicted_distribution(env, n, clearance_deg, min_depth, max_sector_deg)
    truths = [truth_distribution(env, n) for n in nodes]
    predictions = []
    empty = []
    for node, truth in zip(nodes, truths):
        prediction = predictor(node)
        if prediction is None:
            logger.warning(f"Empty subgoal prediction at node {node}; using uniform-over-truth fallback")
            empty.append(node)
            prediction = truth
        predictions.append(prediction)

    divergences = [sinkhorn_divergence(p, t, epsilon, max_iters) for p, t in zip(predictions, truths)]
    shuffled = None
    if shuffle_seed is not None and len(nodes) > 1:
        order = [int(i) for i in SeededStream(shuffle_seed).fork("shuffle").permutation(len(nodes))]
        # cyclic pairing: no prediction is scored against its own truth
        shuffled = float(np.mean([
            sinkhorn_divergence(predictions[order[k]], truths[order[(k + 1) % len(order)]],
                                epsilon, max_iters)
            for k in range(len(order))]))
    mean = float(np.mean(divergences)) if divergences else 0.0
    logger.info(f"Subgoal evaluation over {len(nodes)} nodes: mean divergence {mean:.4f}")
    return SgmEvaluation(mean, divergences, empty, shuffled)


# Fixture files ------------------------------------------------------------

def save_scans(path: str, scans: Sequence[OccupancyScan]) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# {NUM_BINS} range readings (m) followed by max_range, one scan per line\n")
        for scan in scans:
            values = [repr(float(v)) for v in scan.readings] + [repr(float(scan.max_range))]
            f.write(','.join(values) + "\n")


def load_scans(path: str) -> List[OccupancyScan]:
    scans = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            try:
                values = [float(v) for v in line.split(',')]
            except ValueError:
                raise ConfigError(f"{path}:{line_number}: non-numeric scan value", "scan")
            if len(values) != NUM_BINS + 1:
                raise ConfigError(
                    f"{path}:{line_number}: expected {NUM_BINS + 1} values, got {len(values)}", "scan")
            scans.append(OccupancyScan(np.array(values[:NUM_BINS]), values[NUM_BINS]))
    return scans
