"""
Small seeded transformer encoder with per-layer pooled outputs.

Each residual branch is rescaled per token to alpha_l * rms(x) * f / rms(f),
with alpha_l = residual_scale * residual_decay ** (l - 1). Later layers therefore
move the representation less and consecutive pooled states saturate, which is
the behaviour the layer-similarity exit relies on.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import CHANNELS, Embedding, SeededStream, ViewImage, cosine_similarity
from utils.error_handler import BatchShapeError, ConfigError, EmptySample, RangeError, ShapeError

logger = logging.getLogger(__name__)

MIN_EXIT_LAYER = 2


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder geometry; weights are fully determined by `seed`"""
    name: str = "desk"
    layers: int = 12
    image_side: int = 32
    patch: int = 8
    hidden: int = 64
    mlp_dim: int = 256
    heads: int = 4
    seed: int = 0
    residual_scale: float = 0.5
    residual_decay: float = 0.6
    executable: bool = True

    def __post_init__(self):
        if self.layers < 2:
            raise ConfigError(f"Encoder needs at least 2 layers, got {self.layers}", "layers")
        if self.patch < 1 or self.image_side % self.patch != 0:
            raise ConfigError(
                f"Image side {self.image_side} must be a multiple of patch {self.patch}", "patch")
        if self.hidden <= 0 or self.mlp_dim <= 0:
            raise ConfigError("Hidden and MLP sizes must be positive", "hidden")
        if self.heads < 1 or self.hidden % self.heads != 0:
            raise ConfigError(f"Hidden size {self.hidden} must divide into {self.heads} heads", "heads")

    @property
    def tokens(self) -> int:
        return (self.image_side // self.patch) ** 2 + 1

    @property
    def embedding_dim(self) -> int:
        return self.hidden

    @property
    def input_length(self) -> int:
        return CHANNELS * self.image_side * self.image_side

    def alpha(self, layer: int) -> float:
        return self.residual_scale * self.residual_decay ** (layer - 1)


ENCODER_PROFILES: Dict[str, EncoderConfig] = {
    "desk": EncoderConfig(),
    # costed only, never executed
    "vit_b16": EncoderConfig(name="vit_b16", layers=12, image_side=224, patch=16,
                             hidden=768, mlp_dim=3072, heads=12, executable=False),
}


def get_profile(name: str, seed: int = 0) -> EncoderConfig:
    if name not in ENCODER_PROFILES:
        raise ConfigError(f"Unknown encoder profile: {name}", "encoder.profile")
    base = ENCODER_PROFILES[name]
    if seed == base.seed:
        return base
    return EncoderConfig(**{**base.__dict__, 'seed': seed})


@dataclass(frozen=True, eq=False)
class LayerTrace:
    pooled: Tuple[Embedding, ...]
    similarities: Tuple[float, ...]

    @property
    def layers(self) -> int:
        return len(self.pooled)


@dataclass(frozen=True, eq=False)
class ExitRecord:
    exit_layer: int
    threshold: float
    embedding: Embedding


@dataclass
class _LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass
class _Weights:
    patch: np.ndarray
    cls: np.ndarray
    pos: np.ndarray
    layers: List[_LayerWeights] = field(default_factory=list)


@lru_cache(maxsize=8)
def _weights(cfg: EncoderConfig) -> _Weights:
    if not cfg.executable:
        raise ConfigError(f"Encoder profile '{cfg.name}' is cost-only and cannot be executed",
                          "encoder.profile")
    stream = SeededStream(cfg.seed).fork("encoder")
    d, m = cfg.hidden, cfg.mlp_dim
    patch_len = CHANNELS * cfg.patch * cfg.patch
    embed = stream.fork("embed")
    weights = _Weights(
        patch=embed.normal(0.0, 1.0 / np.sqrt(patch_len), (patch_len, d)),
        cls=embed.normal(0.0, 1.0, d),
        pos=embed.normal(0.0, 0.5, (cfg.tokens, d)),
    )
    for layer in range(1, cfg.layers + 1):
        block = stream.fork(f"layer{layer}")
        scale = 1.0 / np.sqrt(d)
        weights.layers.append(_LayerWeights(
            wq=block.normal(0.0, scale, (d, d)),
            wk=block.normal(0.0, scale, (d, d)),
            wv=block.normal(0.0, scale, (d, d)),
            wo=block.normal(0.0, scale, (d, d)),
            w1=block.normal(0.0, scale, (d, m)),
            w2=block.normal(0.0, 1.0 / np.sqrt(m), (m, d)),
        ))
    return weights


def _layer_norm(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-6)


def _rms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(x * x, axis=-1, keepdims=True))


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _scaled_residual(x: np.ndarray, update: np.ndarray, alpha: float) -> np.ndarray:
    return x + alpha * _rms(x) * update / (_rms(update) + 1e-12)


def _embed(img: ViewImage, cfg: EncoderConfig) -> np.ndarray:
    w = _weights(cfg)
    if img.shape != (CHANNELS, cfg.image_side, cfg.image_side):
        raise ShapeError(
            f"Image shape {img.shape} does not match encoder input "
            f"{(CHANNELS, cfg.image_side, cfg.image_side)}",
            (CHANNELS, cfg.image_side, cfg.image_side), img.shape)
    p = cfg.patch
    g = cfg.image_side // p
    x = (img.data - 0.5) / 0.5
    patches = x.reshape(CHANNELS, g, p, g, p).transpose(1, 3, 0, 2, 4).reshape(g * g, -1)
    tokens = np.vstack([w.cls[None, :], patches @ w.patch])
    return tokens + w.pos


def _run_layer(x: np.ndarray, layer: int, cfg: EncoderConfig) -> np.ndarray:
    lw = _weights(cfg).layers[layer - 1]
    alpha = cfg.alpha(layer)
    n, d = x.shape
    dh = d // cfg.heads

    h = _layer_norm(x)
    q = (h @ lw.wq).reshape(n, cfg.heads, dh).transpose(1, 0, 2)
    k = (h @ lw.wk).reshape(n, cfg.heads, dh).transpose(1, 0, 2)
    v = (h @ lw.wv).reshape(n, cfg.heads, dh).transpose(1, 0, 2)
    attn = _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dh))
    mixed = (attn @ v).transpose(1, 0, 2).reshape(n, d) @ lw.wo
    x = _scaled_residual(x, mixed, alpha)

    h = _layer_norm(x)
    mlp = _gelu(h @ lw.w1) @ lw.w2
    return _scaled_residual(x, mlp, alpha)


def _pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=0)


class _Runner:
    """Per-sample layer stepper shared by every encode path"""

    def __init__(self, img: ViewImage, cfg: EncoderConfig, threshold: float = 1.0):
        self.cfg = cfg
        self.threshold = threshold
        self.state = _embed(img, cfg)
        self.layer = 0
        self.pooled: List[np.ndarray] = []
        self.similarities: List[float] = []
        self.exited = False

    def step(self) -> None:
        self.layer += 1
        self.state = _run_layer(self.state, self.layer, self.cfg)
        self.pooled.append(_pool(self.state))
        if self.layer >= MIN_EXIT_LAYER:
            sim = cosine_similarity(self.pooled[-2], self.pooled[-1])
            self.similarities.append(sim)
            if sim > self.threshold:
                self.exited = True
        if self.layer == self.cfg.layers:
            self.exited = True

    def record(self) -> ExitRecord:
        return ExitRecord(self.layer, self.threshold, Embedding(self.pooled[-1]))


def _check_threshold(threshold: float) -> float:
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise RangeError(f"Exit threshold must lie in [0, 1], got {threshold}", threshold)
    return threshold


def encode_full(img: ViewImage, cfg: EncoderConfig) -> Tuple[Embedding, LayerTrace]:
    runner = _Runner(img, cfg)
    while runner.layer < cfg.layers:
        runner.step()
    trace = LayerTrace(tuple(Embedding(p) for p in runner.pooled), tuple(runner.similarities))
    return trace.pooled[-1], trace


def encode_mue(img: ViewImage, cfg: EncoderConfig, threshold: float) -> ExitRecord:
    """Run layers until consecutive pooled states exceed `threshold` in cosine similarity"""
    runner = _Runner(img, cfg, _check_threshold(threshold))
    while not runner.exited:
        runner.step()
    return runner.record()


@dataclass
class BatchResult:
    records: List[ExitRecord]
    layer_executions: int
    budget: int


def encode_batch_budgeted(imgs: Sequence[ViewImage], thresholds: Sequence[float],
                          cfg: EncoderConfig) -> List[ExitRecord]:
    return run_budgeted_batch(imgs, thresholds, cfg).records


def run_budgeted_batch(imgs: Sequence[ViewImage], thresholds: Sequence[float],
                       cfg: EncoderConfig, budget: Optional[int] = None) -> BatchResult:
    """
    Layer-synchronous batch: every active sample runs layer l, then samples whose
    similarity crossed their own threshold leave the batch. The default budget is
    the worst case len(imgs) * L layer executions.
    """
    if len(imgs) != len(thresholds):
        raise BatchShapeError(
            f"Batch has {len(imgs)} images but {len(thresholds)} thresholds")
    if budget is None:
        budget = len(imgs) * cfg.layers
    runners = [_Runner(img, cfg, _check_threshold(t)) for img, t in zip(imgs, thresholds)]
    executed = 0
    active = list(range(len(runners)))
    while active:
        for idx in active:
            runners[idx].step()
        executed += len(active)
        if executed > budget:
            raise RangeError(f"Batch exceeded its budget of {budget} layer executions", executed)
        active = [idx for idx in active if not runners[idx].exited]
    logger.debug(f"Budgeted batch of {len(runners)} used {executed}/{budget} layer executions")
    return BatchResult([r.record() for r in runners], executed, budget)


def saturation_curve(imgs: Sequence[ViewImage], cfg: EncoderConfig) -> List[float]:
    """Mean consecutive-layer cosine similarity per layer pair, length L-1"""
    if len(imgs) == 0:
        raise EmptySample("Saturation curve needs at least one image")
    sims = np.array([encode_full(img, cfg)[1].similarities for img in imgs])
    return [float(v) for v in sims.mean(axis=0)]
