"""Masked multi-head scaled dot-product attention and a per-region oracle."""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .layout import RegionMaskSet, SegmentLayout
from .masks import AttentionMask

# Masked logits are overwritten with this value, then exp() underflows them
# to exactly zero after the row-max shift.
SENTINEL = -1e9


class AttentionError(ValueError):
    pass


def _check_inputs(q, k, v, heads):
    if q.ndim != 2 or q.shape != k.shape or k.shape[0] != v.shape[0]:
        raise AttentionError(f"incompatible shapes q{q.shape} k{k.shape} v{v.shape}")
    if heads < 1 or q.shape[1] % heads or v.shape[1] % heads:
        raise AttentionError(f"feature dim {q.shape[1]} not divisible by {heads} heads")
    for name, x in (("q", q), ("k", k), ("v", v)):
        if not np.isfinite(x).all():
            raise AttentionError(f"non-finite feature in {name}")


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    return np.ascontiguousarray(x.reshape(n, heads, d // heads).transpose(1, 0, 2))


def _logits(q, k, heads, suppress):
    dk = q.shape[1] // heads
    scale = q.dtype.type(1.0 / np.sqrt(dk))
    qh = _split_heads(q, heads) * scale
    logits = np.matmul(qh, _split_heads(k, heads).transpose(0, 2, 1))
    if suppress is not None:
        np.copyto(logits, logits.dtype.type(SENTINEL), where=suppress)
    logits -= logits.max(axis=-1, keepdims=True)
    np.exp(logits, out=logits)
    return logits


def _attend(q, k, v, heads: int, suppress: Optional[np.ndarray]) -> np.ndarray:
    """Core kernel. ``suppress`` is the negated boolean mask, or None."""
    unnorm = _logits(q, k, heads, suppress)
    denom = unnorm.sum(axis=-1, keepdims=True)
    out = np.matmul(unnorm, _split_heads(v, heads))
    out /= denom
    n = q.shape[0]
    return out.transpose(1, 0, 2).reshape(n, v.shape[1])


def _mask_array(mask: Union[AttentionMask, np.ndarray], n: int) -> np.ndarray:
    if isinstance(mask, AttentionMask):
        full = mask.full
    else:
        full = np.asarray(mask, dtype=bool)
        empty = np.flatnonzero(~full.any(axis=1))
        if empty.size:
            raise AttentionError(f"degenerate row {int(empty[0])}: mask row has no attendable key")
    if full.shape != (n, n):
        raise AttentionError(f"mask shape {full.shape} does not match sequence length {n}")
    return full


def masked_attention(q, k, v, mask: Union[AttentionMask, np.ndarray], heads: int = 1) -> np.ndarray:
    """softmax(QK^T / sqrt(d_k) with masked logits suppressed) V, per head.

    Head ``j`` reads and writes feature columns ``[j*d_k, (j+1)*d_k)``.
    Masked entries receive exactly zero weight.
    """
    _check_inputs(q, k, v, heads)
    full = _mask_array(mask, q.shape[0])
    return _attend(q, k, v, heads, ~full)


def plain_attention(q, k, v, heads: int = 1) -> np.ndarray:
    _check_inputs(q, k, v, heads)
    return _attend(q, k, v, heads, None)


def attention_weights(q, k, mask=None, heads: int = 1) -> np.ndarray:
    """Normalized weights, shape (heads, L, L). Used for inspection and tests."""
    _check_inputs(q, k, k, heads)
    suppress = None if mask is None else ~_mask_array(mask, q.shape[0])
    unnorm = _logits(q, k, heads, suppress)
    return unnorm / unnorm.sum(axis=-1, keepdims=True)


def regional_oracle(q, k, v, segments: SegmentLayout, masks: RegionMaskSet, heads: int = 1) -> np.ndarray:
    """Attention computed separately on each region's token subset.

    For every region, the image tokens it owns together with its text
    segment are gathered, attended without any mask, and scattered back.
    Only defined when the regions partition the latent grid.
    """
    if not masks.is_partition():
        raise AttentionError("oracle requires a partition")
    out = np.empty((q.shape[0], v.shape[1]), dtype=np.result_type(q, v))
    for i in range(len(masks)):
        image_idx = np.flatnonzero(masks.masks[i])
        offset, length = segments.text_segments[i]
        idx = np.concatenate([image_idx, np.arange(offset, offset + length)])
        out[idx] = plain_attention(q[idx], k[idx], v[idx], heads)
    return out
