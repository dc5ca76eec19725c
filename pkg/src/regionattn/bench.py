"""Speed and memory comparison of vanilla, single-pass regional and
multi-pass (rpg) denoising on synthetic strip layouts.

Memory is an analytic live-tensor estimate, not an OS measurement.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from threadpoolctl import threadpool_limits

from .layout import LayoutError, LayoutSpec, Rect, RegionSpec, ResolvedLayout, resolve_layout, tokenize
from .mmdit import ModelConfig, ModelWeights, init_model
from .rpg import RpgConfig, run_rpg
from .scheduler import ControlConfig, run_denoising

METHODS = ("vanilla", "regional", "rpg")
CSV_HEADER = ("method", "regions", "seq_len", "wall_ms_median", "est_peak_bytes")

MEMORY_FORMULAS = """\
est_peak_bytes (w = element width in bytes, h = heads, D = feature dim):
  vanilla : h * (L_image + |c_base|)^2 * w
  regional: h * L^2 * w + L^2               L = L_image + sum_i L_i (logits + byte mask)
  rpg     : max_pass h * L'^2 * w + N * L_image * D * w
            L' over the base pass (L_image + |c_base|) and region passes (L_image + L_i);
            second term holds the N retained region velocities"""


@dataclass(frozen=True)
class BenchRow:
    method: str
    regions: int
    seq_len: int
    wall_ms_median: float
    est_peak_bytes: int


@dataclass(frozen=True)
class BenchConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    steps: int = 8
    repeats: int = 5
    threads: int = 1
    height: int = 32
    width: int = 32
    prompt_len: int = 16
    base_len: int = 32
    beta: float = 0.5
    inject_steps: int | None = None  # None: every step
    base_weight: float = 0.3
    dtype: str = "float32"
    seed: int = 0


@dataclass
class BenchReport:
    rows: list[BenchRow]
    config: BenchConfig

    def row(self, method: str, regions: int) -> BenchRow:
        for r in self.rows:
            if r.method == method and r.regions == regions:
                return r
        raise KeyError((method, regions))

    def speedup(self, regions: int) -> float:
        return self.row("rpg", regions).wall_ms_median / self.row("regional", regions).wall_ms_median


def strip_layout(n: int, height: int = 32, width: int = 32, prompt_len: int = 16, base_len: int = 32) -> ResolvedLayout:
    """n equal vertical strips, each with a fixed-length synthetic prompt."""
    if n < 1 or n > width:
        raise LayoutError(f"cannot build {n} strips on a grid of width {width}")
    regions = tuple(
        RegionSpec(
            id=f"strip{i}",
            geometry=Rect(i / n, 0.0, (i + 1) / n, 1.0),
            prompt=tokenize(" ".join(f"strip{i}_word{k}" for k in range(prompt_len))),
        )
        for i in range(n)
    )
    spec = LayoutSpec(
        latent_height=height,
        latent_width=width,
        base_prompt=tokenize(" ".join(f"base_word{k}" for k in range(base_len))),
        regions=regions,
    )
    return resolve_layout(spec)


def seq_len(layout: ResolvedLayout, method: str) -> int:
    spec = layout.spec
    li = spec.image_len
    if method == "vanilla":
        return li + len(spec.base_prompt)
    if method == "regional":
        return layout.segments.total_len
    if method == "rpg":
        return li + max([len(spec.base_prompt)] + spec.prompt_lengths)
    raise ValueError(f"unknown method {method!r}")


def estimate_memory(model: ModelConfig, layout: ResolvedLayout, method: str, itemsize: int = 8) -> int:
    spec = layout.spec
    h, w, li = model.heads, itemsize, spec.image_len
    if method == "vanilla":
        return h * (li + len(spec.base_prompt)) ** 2 * w
    if method == "regional":
        total = layout.segments.total_len
        return h * total**2 * w + total**2
    if method == "rpg":
        passes = [li + len(spec.base_prompt)] + [li + n for n in spec.prompt_lengths]
        return max(h * n**2 * w for n in passes) + len(spec.regions) * li * model.feature_dim * w
    raise ValueError(f"unknown method {method!r}")


def _run_once(method: str, layout: ResolvedLayout, weights: ModelWeights, cfg: BenchConfig) -> float:
    t0 = time.perf_counter()
    if method == "vanilla":
        control = ControlConfig(beta=cfg.beta, total_steps=cfg.steps, inject_steps=0, seed=cfg.seed)
        run_denoising(layout, control, weights)
    elif method == "regional":
        inject = cfg.steps if cfg.inject_steps is None else cfg.inject_steps
        control = ControlConfig(beta=cfg.beta, total_steps=cfg.steps, inject_steps=inject, seed=cfg.seed)
        run_denoising(layout, control, weights)
    else:
        run_rpg(layout, RpgConfig(cfg.base_weight, cfg.steps, cfg.seed), weights)
    return (time.perf_counter() - t0) * 1000.0


def run_bench(config: BenchConfig, region_counts: Sequence[int], progress=None) -> BenchReport:
    """Median wall time over ``config.repeats`` runs per (method, N).

    Repeats are interleaved across methods so slow drift in machine load
    affects all methods alike.
    """
    layouts = {
        n: strip_layout(n, config.height, config.width, config.prompt_len, config.base_len) for n in region_counts
    }
    weights = init_model(config.model).astype(config.dtype)
    itemsize = np.dtype(config.dtype).itemsize
    rows = []
    with threadpool_limits(limits=config.threads):
        _run_once("vanilla", layouts[region_counts[0]], weights, replace(config, steps=1))
        for n in region_counts:
            times = {m: [] for m in METHODS}
            for _ in range(config.repeats):
                for m in METHODS:
                    times[m].append(_run_once(m, layouts[n], weights, config))
            for m in METHODS:
                row = BenchRow(
                    method=m,
                    regions=n,
                    seq_len=seq_len(layouts[n], m),
                    wall_ms_median=statistics.median(times[m]),
                    est_peak_bytes=estimate_memory(config.model, layouts[n], m, itemsize),
                )
                rows.append(row)
                if progress is not None:
                    progress(row)
    return BenchReport(rows=rows, config=config)


def write_bench_csv(report: BenchReport, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in report.rows:
            writer.writerow([r.method, r.regions, r.seq_len, f"{r.wall_ms_median:.3f}", r.est_peak_bytes])


def format_summary(report: BenchReport) -> str:
    cfg = report.config
    m = cfg.model
    lines = [
        f"model: D={m.feature_dim} h={m.heads} nd={m.double_blocks} ns={m.single_blocks} seed={m.seed}",
        f"grid: {cfg.height}x{cfg.width}  L_i={cfg.prompt_len}  |c_base|={cfg.base_len}  dtype={cfg.dtype}",
        f"steps={cfg.steps} inject_steps={cfg.steps if cfg.inject_steps is None else cfg.inject_steps} "
        f"repeats={cfg.repeats} threads={cfg.threads}",
        MEMORY_FORMULAS,
        "speedup rpg/regional:",
    ]
    for n in sorted({r.regions for r in report.rows}):
        lines.append(f"  N={n:<3d} {report.speedup(n):6.2f}x")
    return "\n".join(lines)
