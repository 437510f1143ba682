"""
Procedural navigation environments.

Nodes are points in the plane joined by a nearest-neighbour graph. Every node
carries a 36-view panorama: the view aimed at a neighbour shows that
neighbour's place, every other view shows a texture latent. Texture latents
are correlated along the ring (spatial locality) and shared across edges
(temporal locality), so consecutive panoramas repeat views.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from core import (
    NUM_VIEWS,
    Embedding,
    Panorama,
    SeededStream,
    ViewImage,
    circular_view_distance,
    cosine_similarity,
    heading_to_view,
)
from subgoal import NUM_BINS, OccupancyScan
from utils.error_handler import ConfigError, GenError, PolicyDegenerate

logger = logging.getLogger(__name__)

STOP = 0  # action code; view actions are 1..36

RENDER_SEED = 20240917
RENDER_BASIS = 48
RENDER_GAIN = 1.2
COLOR_GAIN = 0.3

WALL_MIN = 0.2
WALL_MAX = 0.45
DOORWAY_HALF_WIDTH = 0.45
MIN_OPENING_DEG = 10.0

CORRUPTIONS = ("speckle", "low_light", "defocus", "motion_blur")


@dataclass(frozen=True)
class EnvParams:
    nodes: int = 40
    branching: int = 4
    sigma_spatial: float = 0.5
    rho_temporal: float = 0.8
    seed: int = 0
    extent: float = 12.0
    min_spacing: float = 0.75
    latent_dim: int = 64
    jitter: float = 0.05
    place_scale: float = 6.0
    resolution: int = 32
    max_range: float = 10.0

    def validate(self) -> None:
        if self.nodes < 2:
            raise GenError(f"Environment needs at least 2 nodes, got {self.nodes}")
        if self.branching < 1:
            raise GenError(f"Branching must be at least 1, got {self.branching}")
        if self.branching >= self.nodes:
            raise GenError(f"Branching {self.branching} must be below the node count {self.nodes}")
        if not 0.0 <= self.sigma_spatial <= 1.0:
            raise GenError(f"sigma_spatial must lie in [0, 1], got {self.sigma_spatial}")
        if not 0.0 <= self.rho_temporal <= 1.0:
            raise GenError(f"rho_temporal must lie in [0, 1], got {self.rho_temporal}")
        if self.extent <= 0 or self.min_spacing < 0:
            raise GenError("Extent must be positive and spacing non-negative")
        if self.latent_dim < 1 or self.resolution < 1:
            raise GenError("Latent dimension and resolution must be positive")
        if self.jitter < 0 or self.place_scale <= 0 or self.max_range <= 0:
            raise GenError("jitter, place_scale and max_range must be positive")


@dataclass
class EnvGraph:
    """Navigation graph with panorama latents; everything derives from params.seed"""
    params: EnvParams
    positions: np.ndarray
    edges: List[Tuple[int, int, float]]
    navigable: Dict[int, Dict[int, int]]
    pano_latents: np.ndarray
    place_latents: np.ndarray
    _graph: Optional[nx.Graph] = field(default=None, repr=False, compare=False)
    _geodesic: Optional[Dict[int, Dict[int, float]]] = field(default=None, repr=False, compare=False)
    _hops: Optional[Dict[int, Dict[int, int]]] = field(default=None, repr=False, compare=False)

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]

    @property
    def resolution(self) -> int:
        return self.params.resolution

    @property
    def graph(self) -> nx.Graph:
        if self._graph is None:
            g = nx.Graph()
            g.add_nodes_from(range(self.node_count))
            for u, v, length in self.edges:
                g.add_edge(u, v, length=length)
            self._graph = g
        return self._graph

    def neighbors(self, node: int) -> List[int]:
        return sorted(self.graph.neighbors(node))

    def edge_length(self, u: int, v: int) -> float:
        return self.graph[u][v]['length']

    def navigable_views(self, node: int) -> FrozenSet[int]:
        return frozenset(self.navigable[node])

    def view_to_neighbor(self, node: int, view: int) -> Optional[int]:
        return self.navigable[node].get(view)

    def geodesic(self, u: int, v: int) -> float:
        if self._geodesic is None:
            self._geodesic = dict(nx.all_pairs_dijkstra_path_length(self.graph, weight='length'))
        return self._geodesic[u].get(v, math.inf)

    def hops(self, u: int, v: int) -> Optional[int]:
        if self._hops is None:
            self._hops = dict(nx.all_pairs_shortest_path_length(self.graph))
        return self._hops[u].get(v)

    def heading(self, node: int, other: int) -> float:
        dx, dy = self.positions[other] - self.positions[node]
        return math.degrees(math.atan2(dy, dx)) % 360.0

    def view_latent(self, node: int, view: int) -> np.ndarray:
        neighbor = self.view_to_neighbor(node, view)
        if neighbor is not None:
            return self.place_latents[neighbor]
        return self.pano_latents[node, view - 1]

    def panorama(self, node: int, resolution: Optional[int] = None) -> Panorama:
        resolution = resolution or self.resolution
        views = tuple(render_view(self.view_latent(node, j), resolution)
                      for j in range(1, NUM_VIEWS + 1))
        return Panorama(views, self.navigable_views(node))

    def goal_view(self, goal: int, resolution: Optional[int] = None) -> ViewImage:
        return render_view(self.place_latents[goal], resolution or self.resolution)

    def scan(self, node: int) -> OccupancyScan:
        stream = SeededStream(self.params.seed).fork("scan").fork(node)
        readings = stream.uniform(WALL_MIN, WALL_MAX, NUM_BINS)
        centers = np.arange(NUM_BINS) + 0.5
        for neighbor in self.neighbors(node):
            length = self.edge_length(node, neighbor)
            heading = self.heading(node, neighbor)
            width = max(math.degrees(2.0 * math.atan(DOORWAY_HALF_WIDTH / length)), MIN_OPENING_DEG)
            offset = np.abs((centers - heading + 180.0) % 360.0 - 180.0)
            readings[offset <= width / 2.0] = min(length, self.params.max_range)
        return OccupancyScan(readings, self.params.max_range)

    def neighbor_offsets(self, node: int) -> np.ndarray:
        return np.array([self.positions[n] - self.positions[node] for n in self.neighbors(node)])


# Generation ---------------------------------------------------------------

def _place_nodes(params: EnvParams, stream: SeededStream) -> np.ndarray:
    points: List[np.ndarray] = []
    attempts = 0
    max_attempts = 2000 * params.nodes
    while len(points) < params.nodes:
        attempts += 1
        if attempts > max_attempts:
            raise GenError(
                f"Cannot place {params.nodes} nodes {params.min_spacing} m apart "
                f"in a {params.extent} m square")
        candidate = stream.uniform(0.0, params.extent, 2)
        if all(np.linalg.norm(candidate - p) >= params.min_spacing for p in points):
            points.append(candidate)
    return np.array(points)


def _build_edges(positions: np.ndarray, branching: int) -> nx.Graph:
    dist = cdist(positions, positions)
    g = nx.Graph()
    g.add_nodes_from(range(len(positions)))
    for u in range(len(positions)):
        order = [v for v in np.argsort(dist[u], kind='stable') if v != u]
        for v in order[:branching]:
            g.add_edge(u, int(v), length=float(dist[u, v]))

    components = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    while len(components) > 1:
        first = components[0]
        rest = [n for c in components[1:] for n in c]
        sub = dist[np.ix_(first, rest)]
        i, j = np.unravel_index(np.argmin(sub), sub.shape)
        u, v = first[i], rest[j]
        g.add_edge(u, v, length=float(dist[u, v]))
        components = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    return g


def _assign_views(positions: np.ndarray, graph: nx.Graph) -> Dict[int, Dict[int, int]]:
    navigable: Dict[int, Dict[int, int]] = {}
    for node in graph.nodes:
        neighbors = sorted(graph.neighbors(node), key=lambda n: (graph[node][n]['length'], n))
        if len(neighbors) > NUM_VIEWS:
            raise GenError(f"Node {node} has more than {NUM_VIEWS} neighbours")
        views: Dict[int, int] = {}
        for n in neighbors:
            dx, dy = positions[n] - positions[node]
            view = heading_to_view(math.degrees(math.atan2(dy, dx)))
            if view in views:
                free = [j for j in range(1, NUM_VIEWS + 1) if j not in views]
                view = min(free, key=lambda j: (circular_view_distance(j, view), j))
            views[view] = n
        navigable[node] = dict(sorted(views.items()))
    return navigable


def _find(parent: List[int], x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def _texture_latents(params: EnvParams, edges: List[Tuple[int, int, float]],
                     stream: SeededStream) -> np.ndarray:
    """
    Per-node AR(1) chains around the ring whose innovations are shared by the
    nodes a slot is carried between. Adjacent slots of one node correlate at
    sigma_spatial for every rho_temporal; nodes sharing a run of carried slots
    converge to the same latents.
    """
    n, d = params.nodes, params.latent_dim
    sigma = params.sigma_spatial
    innovations = stream.fork("texture").normal(0.0, 1.0, (n, NUM_VIEWS, d))
    carry = stream.fork("temporal").uniform(0.0, 1.0, (len(edges), NUM_VIEWS)) < params.rho_temporal

    shared = np.empty_like(innovations)
    for j in range(NUM_VIEWS):
        parent = list(range(n))
        for e, (u, v, _) in enumerate(edges):
            if carry[e, j]:
                ru, rv = _find(parent, u), _find(parent, v)
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)
        roots = [_find(parent, node) for node in range(n)]
        shared[:, j] = innovations[roots, j]

    latents = np.empty_like(shared)
    latents[:, 0] = shared[:, 0]
    for j in range(1, NUM_VIEWS):
        latents[:, j] = sigma * latents[:, j - 1] + math.sqrt(1.0 - sigma * sigma) * shared[:, j]

    jitter = stream.fork("jitter").normal(0.0, 1.0, (n, NUM_VIEWS, d))
    return latents + params.jitter * jitter


def _place_latents(params: EnvParams, positions: np.ndarray, stream: SeededStream) -> np.ndarray:
    """Random Fourier features of position, unit variance per entry"""
    omega = stream.normal(0.0, 1.0 / params.place_scale, (params.latent_dim, 2))
    phase = stream.uniform(0.0, 2.0 * math.pi, params.latent_dim)
    return math.sqrt(2.0) * np.cos(positions @ omega.T + phase)


def generate_env(nodes: int = 40, branching: int = 4, sigma_spatial: float = 0.5,
                 rho_temporal: float = 0.8, seed: int = 0, **kwargs) -> EnvGraph:
    params = EnvParams(nodes=nodes, branching=branching, sigma_spatial=sigma_spatial,
                       rho_temporal=rho_temporal, seed=seed, **kwargs)
    return generate_from_params(params)


def generate_from_params(params: EnvParams) -> EnvGraph:
    params.validate()
    stream = SeededStream(params.seed).fork("env")
    positions = _place_nodes(params, stream.fork("positions"))
    graph = _build_edges(positions, params.branching)
    edges = sorted((min(u, v), max(u, v), data['length']) for u, v, data in graph.edges(data=True))
    env = EnvGraph(
        params=params,
        positions=positions,
        edges=edges,
        navigable=_assign_views(positions, graph),
        pano_latents=_texture_latents(params, edges, stream.fork("pano")),
        place_latents=_place_latents(params, positions, stream.fork("place")),
    )
    degrees = [len(v) for v in env.navigable.values()]
    logger.info(
        f"Generated env seed={params.seed}: {params.nodes} nodes, {len(edges)} edges, "
        f"mean degree {np.mean(degrees):.2f}")
    return env


# Rendering ----------------------------------------------------------------

@lru_cache(maxsize=4)
def _render_weights(latent_dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    stream = SeededStream(RENDER_SEED).fork("render")
    magnitude = stream.uniform(0.5, 3.0, RENDER_BASIS)
    angle = stream.uniform(0.0, 2.0 * math.pi, RENDER_BASIS)
    freqs = np.stack([magnitude * np.cos(angle), magnitude * np.sin(angle)], axis=1)
    phases = stream.uniform(0.0, 2.0 * math.pi, RENDER_BASIS)
    projection = stream.normal(0.0, 1.0 / math.sqrt(latent_dim), (3, RENDER_BASIS, latent_dim))
    color = stream.normal(0.0, COLOR_GAIN / math.sqrt(latent_dim), (3, latent_dim))
    return freqs, phases, projection, color


@lru_cache(maxsize=8)
def _render_basis(latent_dim: int, resolution: int) -> np.ndarray:
    freqs, phases, _, _ = _render_weights(latent_dim)
    coords = (np.arange(resolution) + 0.5) / resolution
    u, v = np.meshgrid(coords, coords, indexing='ij')
    grid = np.stack([u.reshape(-1), v.reshape(-1)], axis=1)
    return np.sin(2.0 * math.pi * (grid @ freqs.T) + phases).T


def render_view(latent: np.ndarray, resolution: int) -> ViewImage:
    """Deterministic smooth image keyed by the latent"""
    latent = np.asarray(latent, dtype=np.float64).reshape(-1)
    _, _, projection, color = _render_weights(latent.shape[0])
    basis = _render_basis(latent.shape[0], resolution)
    amplitudes = projection @ latent
    signal = RENDER_GAIN * math.sqrt(2.0 / RENDER_BASIS) * (amplitudes @ basis)
    signal += (color @ latent)[:, None]
    pixels = 0.5 + 0.45 * np.tanh(signal)
    return ViewImage(pixels.reshape(3, resolution, resolution))


# Corruptions --------------------------------------------------------------

def corrupt(img: ViewImage, kind: str, severity: int, stream: Optional[SeededStream] = None) -> ViewImage:
    if kind not in CORRUPTIONS:
        raise ConfigError(f"Unknown corruption kind: {kind}", "corruption.kind")
    if isinstance(severity, bool) or not isinstance(severity, (int, np.integer)) or not 1 <= severity <= 5:
        raise ConfigError(f"Corruption severity must be an integer in 1..5, got {severity}",
                          "corruption.severity")
    s = int(severity)
    x = img.data
    if kind == "speckle":
        stream = stream or SeededStream(0).fork("corrupt")
        out = x * (1.0 + s * stream.normal(0.0, 1.0, x.shape))
    elif kind == "low_light":
        out = x * (1.0 - 0.15 * s)
    elif kind == "defocus":
        out = ndimage.uniform_filter(x, size=(1, 2 * s + 1, 2 * s + 1), mode='nearest')
    else:
        out = ndimage.uniform_filter1d(x, size=2 * s + 1, axis=2, mode='nearest')
    return ViewImage.clamped(out)


def corruption_stream(seed: int, episode: int, step: int, view: int) -> SeededStream:
    return SeededStream(seed).fork("corrupt").fork(episode).fork(step).fork(view)


# Policy -------------------------------------------------------------------

def greedy_policy(embeddings: Sequence[Embedding], goal_embedding: Embedding,
                  navigable: Sequence[int], stop_threshold: float,
                  context_weight: float = 0.0) -> int:
    """
    STOP when some navigable view matches the goal above `stop_threshold`,
    otherwise the navigable view most similar to the goal (ties to the lowest index).
    With context_weight > 0 each candidate is scored with the mean of its two
    ring neighbours added.
    """
    candidates = [i for i in sorted(navigable) if not embeddings[i - 1].is_masked]
    if not candidates:
        raise PolicyDegenerate()
    direct = {i: cosine_similarity(embeddings[i - 1], goal_embedding) for i in candidates}
    if max(direct.values()) > stop_threshold:
        return STOP
    if context_weight > 0.0:
        scores = {i: _context_score(embeddings, i, goal_embedding, context_weight) for i in candidates}
    else:
        scores = direct
    best = candidates[0]
    for i in candidates[1:]:
        if scores[i] > scores[best]:
            best = i
    return best


def _context_score(embeddings: Sequence[Embedding], i: int, goal: Embedding, weight: float) -> float:
    ring = [embeddings[(i - 2) % NUM_VIEWS], embeddings[i % NUM_VIEWS]]
    context = [e.values for e in ring if not e.is_masked]
    vector = embeddings[i - 1].values
    if context:
        vector = vector + weight * np.mean(context, axis=0)
    return cosine_similarity(vector, goal)


# Episodes and metrics -----------------------------------------------------

@dataclass(frozen=True)
class EpisodeSpec:
    start: int
    goal: int
    shortest_path: float
    success_radius: float = 3.0
    step_limit: int = 15
    episode_id: int = 0


@dataclass
class Trajectory:
    """Visited nodes and their geodesic distances to the goal"""
    spec: EpisodeSpec
    path: List[int]
    goal_distances: List[float]
    length: float
    stopped: bool
    forced_stop: bool = False


@dataclass
class EpisodeMetrics:
    episode_id: int
    TL: float
    OSR: float
    SR: float
    SPL: float
    GP: float


@dataclass
class MetricsReport:
    episodes: List[EpisodeMetrics]
    TL: float
    OSR: float
    SR: float
    SPL: float
    GP: float

    def aggregate(self) -> Dict[str, float]:
        return {'TL': self.TL, 'OSR': self.OSR, 'SR': self.SR, 'SPL': self.SPL, 'GP': self.GP}


def episode_metrics(trajectory: Trajectory) -> EpisodeMetrics:
    spec = trajectory.spec
    radius = spec.success_radius
    final = trajectory.goal_distances[-1]
    osr = 1.0 if any(d <= radius for d in trajectory.goal_distances) else 0.0
    sr = 1.0 if trajectory.stopped and final <= radius else 0.0
    denominator = max(trajectory.length, spec.shortest_path)
    spl = sr * (spec.shortest_path / denominator) if denominator > 0 else sr
    gp = trajectory.goal_distances[0] - final
    return EpisodeMetrics(spec.episode_id, trajectory.length, osr, sr, spl, gp)


def compute_metrics(episodes: Sequence) -> MetricsReport:
    """Per-episode and mean metrics; accepts trajectories or objects carrying one"""
    per_episode = [episode_metrics(getattr(e, 'trajectory', e)) for e in episodes]
    if not per_episode:
        return MetricsReport([], 0.0, 0.0, 0.0, 0.0, 0.0)
    mean = lambda name: float(np.mean([getattr(m, name) for m in per_episode]))
    return MetricsReport(per_episode, mean('TL'), mean('OSR'), mean('SR'), mean('SPL'), mean('GP'))
