"""
SimHash cache of (view, embedding) pairs.

Views are hashed with n random hyperplanes; a lookup scans only the query's
bucket and reuses the stored embedding whose view is most similar to the
query, provided that similarity exceeds the table threshold.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import Embedding, SeededStream, ViewImage, cosine_similarity
from utils.error_handler import ConfigError, ShapeError

logger = logging.getLogger(__name__)

BYTES_PER_VALUE = 4
STANDARD_THRESHOLD = 0.85
CONTINUOUS_THRESHOLD = 0.95


class HashFamily:
    """n standard-normal hyperplanes over the flattened view"""

    def __init__(self, dim: int, n: int = 10, stream: Optional[SeededStream] = None):
        if n < 1:
            raise ConfigError(f"Hash family needs at least one hyperplane, got {n}", "cache.n_bits")
        self.dim = int(dim)
        self.n = int(n)
        stream = stream or SeededStream(0).fork("hash")
        self.hyperplanes = stream.normal(0.0, 1.0, (self.n, self.dim))
        self.hyperplanes.setflags(write=False)

    def signature(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] != self.dim:
            raise ShapeError(f"Hash family expects length {self.dim}, got {vector.shape[0]}",
                             self.dim, vector.shape[0])
        # a dot product of exactly 0 hashes to bit 0
        return self.hyperplanes @ vector > 0

    def key(self, vector: np.ndarray) -> str:
        return ''.join('1' if bit else '0' for bit in self.signature(vector))


# Similarity metrics for reuse ----------------------------------------------

SimilarityMetric = Callable[[ViewImage, ViewImage], float]

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def cosine_metric(a: ViewImage, b: ViewImage) -> float:
    return cosine_similarity(a, b)


def ssim_metric(a: ViewImage, b: ViewImage) -> float:
    """Global structural similarity over all pixels, data range 1"""
    x = a.flatten()
    y = b.flatten()
    if x.shape != y.shape:
        raise ShapeError("SSIM needs views of equal shape", a.shape, b.shape)
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = np.mean((x - mx) * (y - my))
    value = ((2 * mx * my + _SSIM_C1) * (2 * cov + _SSIM_C2)) / \
            ((mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2))
    return float(value)


METRICS: Dict[str, SimilarityMetric] = {
    "cosine": cosine_metric,
    "ssim": ssim_metric,
}


def get_metric(name: str) -> SimilarityMetric:
    if name not in METRICS:
        raise ConfigError(f"Unknown similarity metric: {name}", "cache.metric")
    return METRICS[name]


# Storage ------------------------------------------------------------------

def pair_bytes(view_shape: Sequence[int], embedding_len: int) -> int:
    """Bytes for one stored pair at 4 bytes per value"""
    return (int(np.prod(view_shape)) + int(embedding_len)) * BYTES_PER_VALUE


def projected_storage(steps: int, views_per_step: int, view_shape: Sequence[int],
                      embedding_len: int) -> int:
    """Worst-case bytes if every processed view of every step were stored"""
    return steps * views_per_step * pair_bytes(view_shape, embedding_len)


# Table --------------------------------------------------------------------

@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    inserted: int = 0
    rejected: int = 0
    bytes: int = 0
    reuse_similarities: List[float] = field(default_factory=list)

    @property
    def lookups(self) -> int:
        return self.hits + self.misses

    @property
    def hit_rate(self) -> float:
        return self.hits / self.lookups if self.lookups else 0.0

    def merge(self, other: "CacheStats") -> "CacheStats":
        return CacheStats(
            hits=self.hits + other.hits,
            misses=self.misses + other.misses,
            inserted=self.inserted + other.inserted,
            rejected=self.rejected + other.rejected,
            bytes=self.bytes + other.bytes,
            reuse_similarities=self.reuse_similarities + other.reuse_similarities,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            'hits': self.hits,
            'misses': self.misses,
            'lookups': self.lookups,
            'inserted': self.inserted,
            'rejected': self.rejected,
            'bytes': self.bytes,
            'hit_rate': self.hit_rate,
            'min_reuse_similarity': min(self.reuse_similarities) if self.reuse_similarities else None,
        }


@dataclass
class CacheEntry:
    view: ViewImage
    embedding: Embedding


class CacheTable:
    """Bucketed (view, embedding) store keyed by SimHash"""

    def __init__(self, family: HashFamily, similarity_threshold: float = STANDARD_THRESHOLD,
                 max_pairs: Optional[int] = None, metric: str = "cosine"):
        self.family = family
        self.similarity_threshold = float(similarity_threshold)
        self.max_pairs = max_pairs
        self.metric_name = metric
        self.metric = get_metric(metric)
        self.buckets: Dict[str, List[CacheEntry]] = {}
        self.stats = CacheStats()
        self._warned_full = False

    def __len__(self) -> int:
        return sum(len(bucket) for bucket in self.buckets.values())

    def key(self, view: ViewImage) -> str:
        return self.family.key(view.flatten())

    def insert(self, view: ViewImage, emb: Embedding) -> bool:
        """Append the pair to its bucket; returns False when the pair cap rejects it"""
        if self.max_pairs is not None and self.stats.inserted >= self.max_pairs:
            self.stats.rejected += 1
            if not self._warned_full:
                logger.warning(f"Cache reached its cap of {self.max_pairs} pairs; rejecting inserts")
                self._warned_full = True
            return False
        key = self.key(view)
        self.buckets.setdefault(key, []).append(CacheEntry(view, emb))
        self.stats.inserted += 1
        self.stats.bytes += pair_bytes(view.shape, len(emb))
        return True

    def lookup(self, view: ViewImage) -> Tuple[Optional[Embedding], Optional[float]]:
        """(embedding, similarity) of the best bucket match above threshold, else (None, best)"""
        bucket = self.buckets.get(self.key(view), [])
        best_entry = None
        best_sim = None
        for entry in bucket:
            sim = self.metric(view, entry.view)
            if best_sim is None or sim > best_sim:
                best_entry, best_sim = entry, sim
        if best_entry is not None and best_sim > self.similarity_threshold:
            self.stats.hits += 1
            self.stats.reuse_similarities.append(best_sim)
            return best_entry.embedding, best_sim
        self.stats.misses += 1
        return None, best_sim

    def find_similar(self, view: ViewImage) -> Optional[Embedding]:
        return self.lookup(view)[0]


def hash_view(view: ViewImage, family: HashFamily) -> str:
    return family.key(view.flatten())


def insert(table: CacheTable, view: ViewImage, emb: Embedding) -> CacheTable:
    table.insert(view, emb)
    return table


def find_similar(table: CacheTable, view: ViewImage) -> Optional[Embedding]:
    return table.find_similar(view)


def hash_cost(family: HashFamily) -> int:
    """Multiply-accumulates for one key computation"""
    return family.n * family.dim
