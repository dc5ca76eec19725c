"""A small deterministic MMDiT: double-stream and single-stream blocks that
share one joint (optionally masked) attention over image-then-text tokens.

No timestep conditioning. Each block is pre-norm attention with residual,
then pre-norm GELU MLP with residual.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .attention import _attend, _check_inputs, _mask_array
from .layout import VOCAB_SIZE
from .masks import AttentionMask
from .rng import SplitMix64

RMS_EPS = 1e-6
_GELU_C = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 64
    heads: int = 4
    double_blocks: int = 4
    single_blocks: int = 4
    mlp_ratio: int = 4
    seed: int = 0
    max_positions: int = 4096
    vocab_size: int = VOCAB_SIZE

    def __post_init__(self):
        if self.feature_dim < 1 or self.heads < 1 or self.feature_dim % self.heads:
            raise ValueError(f"feature_dim {self.feature_dim} not divisible by heads {self.heads}")
        if self.double_blocks < 0 or self.single_blocks < 0 or self.double_blocks + self.single_blocks < 1:
            raise ValueError("need at least one block and no negative block counts")

    @property
    def num_blocks(self) -> int:
        return self.double_blocks + self.single_blocks


@dataclass
class StreamWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    norm1: np.ndarray
    norm2: np.ndarray

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "StreamWeights":
        return StreamWeights(**{f.name: fn(getattr(self, f.name)) for f in fields(self)})

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class DoubleBlockWeights:
    img: StreamWeights
    txt: StreamWeights


@dataclass
class ModelWeights:
    config: ModelConfig
    embed: np.ndarray
    pos: np.ndarray
    double: list[DoubleBlockWeights]
    single: list[StreamWeights]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ModelWeights":
        return ModelWeights(
            config=self.config,
            embed=fn(self.embed),
            pos=fn(self.pos),
            double=[DoubleBlockWeights(b.img.map(fn), b.txt.map(fn)) for b in self.double],
            single=[s.map(fn) for s in self.single],
        )

    def astype(self, dtype) -> "ModelWeights":
        return self.map(lambda a: a.astype(dtype))

    @property
    def dtype(self):
        return self.embed.dtype

    def arrays(self) -> list[np.ndarray]:
        out = [self.embed, self.pos]
        for b in self.double:
            out += b.img.arrays() + b.txt.arrays()
        for s in self.single:
            out += s.arrays()
        return out


def _draw_stream(rng: SplitMix64, d: int, hidden: int, bound: float) -> StreamWeights:
    def u(*shape):
        return rng.uniform_range(shape, -bound, bound)

    # Draw order is part of the determinism contract.
    wq, wk, wv, wo = u(d, d), u(d, d), u(d, d), u(d, d)
    w1, w2 = u(d, hidden), u(hidden, d)
    norm1, norm2 = u(d), u(d)
    return StreamWeights(wq, wk, wv, wo, w1, w2, norm1, norm2)


def init_model(config: ModelConfig) -> ModelWeights:
    """Weights uniform in [-1/sqrt(D), 1/sqrt(D)] from one SplitMix64 stream.

    Order: embedding table, positional table, double blocks (image stream
    then text stream), single blocks. Within a stream: Q, K, V, output,
    MLP in, MLP out, then the two norm gains.
    """
    d = config.feature_dim
    hidden = config.mlp_ratio * d
    bound = 1.0 / np.sqrt(d)
    rng = SplitMix64(config.seed)
    embed = rng.uniform_range((config.vocab_size, d), -bound, bound)
    pos = rng.uniform_range((config.max_positions, d), -bound, bound)
    double = []
    for _ in range(config.double_blocks):
        img = _draw_stream(rng, d, hidden, bound)
        txt = _draw_stream(rng, d, hidden, bound)
        double.append(DoubleBlockWeights(img, txt))
    single = [_draw_stream(rng, d, hidden, bound) for _ in range(config.single_blocks)]
    return ModelWeights(config=config, embed=embed, pos=pos, double=double, single=single)


def embed_tokens(ids: Sequence[int], offsets: Union[int, Sequence[int]], weights: ModelWeights) -> np.ndarray:
    """embedding[id] + positional[offset] per token.

    ``offsets`` is either the offset of the first token (consecutive
    positions) or one offset per token.
    """
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if np.isscalar(offsets) or np.ndim(offsets) == 0:
        offsets = int(offsets) + np.arange(ids.size)
    offsets = np.asarray(offsets, dtype=np.int64).reshape(-1)
    if offsets.size != ids.size:
        raise ValueError("one offset per token is required")
    if ids.size and (ids.min() < 0 or ids.max() >= weights.embed.shape[0]):
        raise ValueError("token id out of range")
    if offsets.size and (offsets.min() < 0 or offsets.max() >= weights.pos.shape[0]):
        raise ValueError(f"position offset out of range (max_positions={weights.pos.shape[0]})")
    return weights.embed[ids] + weights.pos[offsets]


def rmsnorm(x: np.ndarray, gain: np.ndarray) -> np.ndarray:
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS) * gain


def gelu_tanh(u: np.ndarray) -> np.ndarray:
    return 0.5 * u * (1.0 + np.tanh(_GELU_C * (u + 0.044715 * (u * u * u))))


def _qkv(x: np.ndarray, w: StreamWeights):
    xn = rmsnorm(x, w.norm1)
    return xn @ w.wq, xn @ w.wk, xn @ w.wv


def _post(x: np.ndarray, attn: np.ndarray, w: StreamWeights) -> np.ndarray:
    x = x + attn @ w.wo
    return x + gelu_tanh(rmsnorm(x, w.norm2) @ w.w1) @ w.w2


def _double(img, txt, w: DoubleBlockWeights, heads, suppress):
    qi, ki, vi = _qkv(img, w.img)
    qt, kt, vt = _qkv(txt, w.txt)
    q = np.concatenate([qi, qt])
    k = np.concatenate([ki, kt])
    v = np.concatenate([vi, vt])
    _check_inputs(q, k, v, heads)
    attn = _attend(q, k, v, heads, suppress)
    n = img.shape[0]
    return _post(img, attn[:n], w.img), _post(txt, attn[n:], w.txt)


def _single(x, w: StreamWeights, heads, suppress):
    q, k, v = _qkv(x, w)
    _check_inputs(q, k, v, heads)
    return _post(x, _attend(q, k, v, heads, suppress), w)


def _suppress(mask, n: int) -> Optional[np.ndarray]:
    return None if mask is None else ~_mask_array(mask, n)


def double_block_forward(img, txt, mask, block: DoubleBlockWeights, heads: int):
    """Returns (img', txt'). ``mask=None`` runs unmasked attention."""
    return _double(img, txt, block, heads, _suppress(mask, img.shape[0] + txt.shape[0]))


def single_block_forward(x, mask, block: StreamWeights, heads: int):
    return _single(x, block, heads, _suppress(mask, x.shape[0]))


def denoise_pass(
    z: np.ndarray,
    text: np.ndarray,
    mask: Union[AttentionMask, np.ndarray, None],
    weights: ModelWeights,
    flags: Optional[Sequence[bool]] = None,
) -> np.ndarray:
    """Velocity for latent ``z`` given embedded prompt features ``text``.

    Double blocks run first, then single blocks over the concatenated
    sequence. A block whose flag is off attends without the mask. The
    velocity is the change the stack applies to the image stream.
    """
    cfg = weights.config
    if flags is None:
        flags = [True] * cfg.num_blocks
    if len(flags) != cfg.num_blocks:
        raise ValueError(f"expected {cfg.num_blocks} block flags, got {len(flags)}")
    n = z.shape[0]
    suppress = _suppress(mask, n + text.shape[0])

    img_in = z.astype(weights.dtype) + weights.pos[:n]
    img, txt = img_in, text.astype(weights.dtype)
    for i, block in enumerate(weights.double):
        img, txt = _double(img, txt, block, cfg.heads, suppress if flags[i] else None)
    if weights.single:
        x = np.concatenate([img, txt])
        for j, block in enumerate(weights.single):
            on = flags[cfg.double_blocks + j]
            x = _single(x, block, cfg.heads, suppress if on else None)
        img = x[:n]
    return img - img_in
