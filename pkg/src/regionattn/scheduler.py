"""Denoising loop with regional control.

While injection is active (the first ``inject_steps`` steps), every step runs
a base pass and a masked regional pass and blends the two latents as
``beta * z_base + (1 - beta) * z_region``. Afterwards only the base pass runs.
The sampler is a uniform Euler step ``z + v / S``.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import mmdit
from .layout import LayoutSpec, ResolvedLayout
from .masks import AttentionMask, build_regional_mask
from .mmdit import ModelConfig, ModelWeights, embed_tokens, init_model
from .rng import SplitMix64

TRACE_HEADER = ("step", "norm_z", "norm_base_minus_region", "injected")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlConfig:
    beta: float = 0.5
    total_steps: int = 8
    inject_steps: int = 8
    inject_double: Optional[tuple[int, ...]] = None  # None: every double block
    inject_single: Optional[tuple[int, ...]] = None  # None: every single block
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.inject_steps <= self.total_steps:
            raise ValueError(f"inject_steps must lie in [0, {self.total_steps}]")

    def block_flags(self, model: ModelConfig) -> list[bool]:
        return _flags(model, self.inject_double, self.inject_single)


def _flags(model: ModelConfig, double, single) -> list[bool]:
    double = range(model.double_blocks) if double is None else double
    single = range(model.single_blocks) if single is None else single
    flags = [False] * model.num_blocks
    for i in double:
        if not 0 <= i < model.double_blocks:
            raise ValueError(f"double block index {i} out of range")
        flags[i] = True
    for j in single:
        if not 0 <= j < model.single_blocks:
            raise ValueError(f"single block index {j} out of range")
        flags[model.double_blocks + j] = True
    return flags


@dataclass(frozen=True)
class TraceRow:
    step: int
    norm_z: float
    norm_base_minus_region: Optional[float]
    injected: bool


@dataclass
class LatentState:
    z: np.ndarray
    step: int = 0
    # (z_base, z_region, z_blend) per injected step, kept only on request
    records: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)


@dataclass
class RunResult:
    z: np.ndarray
    trajectory: list[TraceRow]
    wall_time: float
    passes: int
    records: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)


def init_latent(height: int, width: int, dim: int, seed: int) -> np.ndarray:
    if min(height, width, dim) < 1:
        raise ValueError("latent dimensions must be >= 1")
    return SplitMix64(seed).normal(height * width * dim).reshape(height * width, dim)


def base_features(spec: LayoutSpec, weights: ModelWeights) -> np.ndarray:
    return embed_tokens(spec.base_prompt, spec.image_len, weights)


def regional_features(layout: ResolvedLayout, weights: ModelWeights) -> np.ndarray:
    parts = [
        embed_tokens(region.prompt, offset, weights)
        for region, (offset, _) in zip(layout.spec.regions, layout.segments.text_segments)
    ]
    return np.concatenate(parts)


def step_base(z, text, weights: ModelWeights, total_steps: int) -> np.ndarray:
    v = mmdit.denoise_pass(z, text, None, weights, [False] * weights.config.num_blocks)
    return z + v * (1.0 / total_steps)


def step_region(z, text, mask, weights: ModelWeights, flags: Sequence[bool], total_steps: int) -> np.ndarray:
    v = mmdit.denoise_pass(z, text, mask, weights, flags)
    return z + v * (1.0 / total_steps)


def blend(z_base: np.ndarray, z_region: np.ndarray, beta: float) -> np.ndarray:
    if z_base.shape != z_region.shape:
        raise ValueError(f"shape mismatch: {z_base.shape} vs {z_region.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta * z_base + (1.0 - beta) * z_region


def resolve_weights(model: Union[ModelConfig, ModelWeights], dtype=None) -> ModelWeights:
    weights = init_model(model) if isinstance(model, ModelConfig) else model
    if dtype is not None and weights.dtype != np.dtype(dtype):
        weights = weights.astype(dtype)
    return weights


def run_denoising(
    layout: ResolvedLayout,
    control: ControlConfig,
    model: Union[ModelConfig, ModelWeights],
    *,
    dtype=None,
    keep_records: bool = False,
    workers: int = 1,
) -> RunResult:
    weights = resolve_weights(model, dtype)
    cfg = weights.config
    spec = layout.spec
    steps = control.total_steps
    flags = control.block_flags(cfg)

    start = time.perf_counter()
    z = init_latent(spec.latent_height, spec.latent_width, cfg.feature_dim, control.seed).astype(weights.dtype)
    base_text = base_features(spec, weights)
    if control.inject_steps > 0:
        mask: Optional[AttentionMask] = build_regional_mask(layout)
        region_text = regional_features(layout, weights)

    state = LatentState(z=z)
    trajectory: list[TraceRow] = []
    passes = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for s in range(steps):
            injected = s < control.inject_steps
            diff = None
            if injected:
                if pool is not None:
                    fb = pool.submit(step_base, state.z, base_text, weights, steps)
                    fr = pool.submit(step_region, state.z, region_text, mask, weights, flags, steps)
                    z_base, z_region = fb.result(), fr.result()
                else:
                    z_base = step_base(state.z, base_text, weights, steps)
                    z_region = step_region(state.z, region_text, mask, weights, flags, steps)
                passes += 2
                z_next = blend(z_base, z_region, control.beta)
            else:
                z_next = step_base(state.z, base_text, weights, steps)
                passes += 1
            if not np.isfinite(z_next).all():
                raise SimulationError(f"non-finite latent at step {s}")
            if injected:
                diff = float(np.linalg.norm(z_base - z_region))
                if keep_records:
                    state.records.append((z_base, z_region, z_next))
            state.z, state.step = z_next, s + 1
            trajectory.append(TraceRow(s, float(np.linalg.norm(z_next)), diff, injected))
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(
        z=state.z,
        trajectory=trajectory,
        wall_time=time.perf_counter() - start,
        passes=passes,
        records=state.records,
    )


def write_trace_csv(trajectory: Sequence[TraceRow], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in trajectory:
            diff = "" if row.norm_base_minus_region is None else repr(row.norm_base_minus_region)
            writer.writerow([row.step, repr(row.norm_z), diff, int(row.injected)])
