"""Multi-pass regional baseline.

Each step runs one unmasked pass per region (full latent, that region's
prompt) plus a base pass. Region velocities are stitched together by cell
ownership and mixed with the base velocity by a fixed weight. At matched
resolution the resize in resize-and-concatenate is the identity.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import mmdit
from .layout import ResolvedLayout
from .mmdit import ModelConfig, ModelWeights, embed_tokens
from .scheduler import RunResult, SimulationError, TraceRow, base_features, init_latent, resolve_weights


@dataclass(frozen=True)
class RpgConfig:
    base_weight: float = 0.3
    total_steps: int = 8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.base_weight <= 1.0:
            raise ValueError(f"base_weight must lie in [0, 1], got {self.base_weight}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


class _Passes:
    """Per-run prompt features and ownership map, built once."""

    def __init__(self, layout: ResolvedLayout, weights: ModelWeights):
        if not layout.masks.is_partition():
            raise ValueError("baseline requires a partition")
        spec = layout.spec
        self.weights = weights
        self.off = [False] * weights.config.num_blocks
        self.base_text = base_features(spec, weights)
        self.region_texts = [embed_tokens(r.prompt, spec.image_len, weights) for r in spec.regions]
        self.owner = np.argmax(layout.masks.masks, axis=0)

    def velocity(self, z, text):
        return mmdit.denoise_pass(z, text, None, self.weights, self.off)

    def step(self, z, config: RpgConfig, pool: Optional[ThreadPoolExecutor] = None):
        texts = [self.base_text] + self.region_texts
        if pool is None:
            vs = [self.velocity(z, t) for t in texts]
        else:
            vs = list(pool.map(lambda t: self.velocity(z, t), texts))
        v_base = vs[0]
        stacked = np.stack(vs[1:])
        v_region = stacked[self.owner, np.arange(z.shape[0])]
        bw = config.base_weight
        dt = 1.0 / config.total_steps
        v = bw * v_base + (1.0 - bw) * v_region
        return z + v * dt, v_base, v_region, len(texts)


def rpg_step(z: np.ndarray, layout: ResolvedLayout, weights: ModelWeights, config: RpgConfig) -> np.ndarray:
    return _Passes(layout, weights).step(z, config)[0]


def run_rpg(
    layout: ResolvedLayout,
    config: RpgConfig,
    model: Union[ModelConfig, ModelWeights],
    *,
    dtype=None,
    workers: int = 1,
) -> RunResult:
    weights = resolve_weights(model, dtype)
    spec = layout.spec
    dt = 1.0 / config.total_steps
    start = time.perf_counter()
    passes_ctx = _Passes(layout, weights)
    z = init_latent(spec.latent_height, spec.latent_width, weights.config.feature_dim, config.seed).astype(
        weights.dtype
    )
    trajectory = []
    passes = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for s in range(config.total_steps):
            z, v_base, v_region, n = passes_ctx.step(z, config, pool)
            passes += n
            if not np.isfinite(z).all():
                raise SimulationError(f"non-finite latent at step {s}")
            diff = float(np.linalg.norm((v_base - v_region) * dt))
            trajectory.append(TraceRow(s, float(np.linalg.norm(z)), diff, True))
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(z=z, trajectory=trajectory, wall_time=time.perf_counter() - start, passes=passes)
