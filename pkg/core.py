"""
Core numeric primitives and shared domain types.

View indices are 1-based (1..36) in every public API. Images are stored as
float64 arrays of shape (3, height, width) with values in [0, 1].
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from utils.error_handler import (
    DegenerateVector,
    InvalidImage,
    InvalidKernel,
    NoNavigableViews,
    ShapeError,
)

logger = logging.getLogger(__name__)

NUM_VIEWS = 36
VIEW_DEGREES = 360.0 / NUM_VIEWS
CHANNELS = 3


@dataclass(frozen=True, eq=False)
class ViewImage:
    """One RGB view of a panorama"""
    data: np.ndarray

    def __post_init__(self):
        array = np.array(self.data, dtype=np.float64, copy=True)
        if array.ndim != 3 or array.shape[0] != CHANNELS:
            raise InvalidImage(f"View data must have shape (3, h, w), got {array.shape}")
        if array.shape[1] < 1 or array.shape[2] < 1:
            raise InvalidImage(f"View must have positive size, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise InvalidImage("View data contains non-finite values")
        if array.min() < 0.0 or array.max() > 1.0:
            raise InvalidImage(f"View values must lie in [0, 1], got [{array.min()}, {array.max()}]")
        array.setflags(write=False)
        object.__setattr__(self, 'data', array)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def flatten(self) -> np.ndarray:
        return self.data.reshape(-1)

    @classmethod
    def clamped(cls, data: np.ndarray) -> "ViewImage":
        return cls(np.clip(data, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class Embedding:
    """Encoder output vector; the exact zero vector marks a masked view"""
    values: np.ndarray

    def __post_init__(self):
        array = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(array)):
            raise ShapeError("Embedding contains non-finite values")
        array.setflags(write=False)
        object.__setattr__(self, 'values', array)

    @classmethod
    def masked(cls, length: int) -> "Embedding":
        return cls(np.zeros(length))

    @property
    def is_masked(self) -> bool:
        return not np.any(self.values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Panorama:
    """36 views plus the navigable index set, both 1-based"""
    views: Tuple[ViewImage, ...]
    navigable: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        views = tuple(self.views)
        if len(views) != NUM_VIEWS:
            raise ShapeError(f"Panorama needs {NUM_VIEWS} views, got {len(views)}",
                             NUM_VIEWS, len(views))
        shapes = {view.shape for view in views}
        if len(shapes) != 1:
            raise ShapeError(f"Panorama views differ in shape: {sorted(shapes)}")
        navigable = frozenset(int(i) for i in self.navigable)
        validate_indices(navigable)
        object.__setattr__(self, 'views', views)
        object.__setattr__(self, 'navigable', navigable)

    def view(self, index: int) -> ViewImage:
        return self.views[index - 1]


def validate_indices(indices: Iterable[int]) -> None:
    for i in indices:
        if not 1 <= i <= NUM_VIEWS:
            raise ShapeError(f"View index {i} outside 1..{NUM_VIEWS}")


def require_navigable(navigable: Iterable[int]) -> FrozenSet[int]:
    nav = frozenset(int(i) for i in navigable)
    if not nav:
        raise NoNavigableViews()
    validate_indices(nav)
    return nav


def heading_to_view(heading_deg: float) -> int:
    """Heading in degrees to view index ceil(h/10), with 0 mapped to 36"""
    h = float(heading_deg) % 360.0
    index = int(np.ceil(h / VIEW_DEGREES))
    return NUM_VIEWS if index == 0 else index


def circular_view_distance(a: int, b: int) -> int:
    d = abs(a - b) % NUM_VIEWS
    return min(d, NUM_VIEWS - d)


# Randomness ---------------------------------------------------------------

def _label_key(label: Union[str, int]) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(label).encode('utf-8'), digest_size=4).digest()
    return int.from_bytes(digest, 'little')


class SeededStream:
    """Deterministic generator of uniform and normal draws with labeled forks"""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.path = tuple(path)
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=self.path)
        self._rng = np.random.Generator(np.random.PCG64(sequence))

    def fork(self, label: Union[str, int]) -> "SeededStream":
        """Independent sub-stream; forking does not advance this stream"""
        return SeededStream(self.seed, self.path + (_label_key(label),))

    @property
    def generator(self) -> np.random.Generator:
        return self._rng

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._rng.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._rng.normal(loc, scale, size)

    def integers(self, low: int, high: int = None, size=None):
        return self._rng.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._rng.permutation(n)


def seeded_stream(seed: int) -> SeededStream:
    return SeededStream(seed)


# Kernels ------------------------------------------------------------------

VectorLike = Union[Embedding, ViewImage, np.ndarray, Sequence[float]]


def as_vector(value: VectorLike) -> np.ndarray:
    if isinstance(value, Embedding):
        return value.values
    if isinstance(value, ViewImage):
        return value.flatten()
    return np.asarray(value, dtype=np.float64).reshape(-1)


def cosine_similarity(a: VectorLike, b: VectorLike) -> float:
    x = as_vector(a)
    y = as_vector(b)
    if x.shape != y.shape:
        raise ShapeError(f"Length mismatch: {x.shape[0]} vs {y.shape[0]}", x.shape, y.shape)
    norm_x = np.linalg.norm(x)
    norm_y = np.linalg.norm(y)
    if norm_x == 0.0 or norm_y == 0.0:
        raise DegenerateVector()
    value = float(np.dot(x, y) / (norm_x * norm_y))
    return min(1.0, max(-1.0, value))


def median_filter(img: ViewImage, kernel: int) -> ViewImage:
    """Per-channel spatial median with edge replication"""
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidKernel(f"Median kernel must be odd and >= 1, got {kernel}", kernel)
    if kernel > min(img.height, img.width):
        raise InvalidKernel(
            f"Median kernel {kernel} exceeds image size {img.height}x{img.width}", kernel)
    if kernel == 1:
        return img
    filtered = ndimage.median_filter(img.data, size=(1, kernel, kernel), mode='nearest')
    return ViewImage(filtered)
