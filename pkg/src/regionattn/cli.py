"""Command-line entry point: ``regionattn {validate,mask,simulate,bench}``.

Exit codes: 0 success, 1 validation/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import BenchConfig, format_summary, run_bench, write_bench_csv
from .layout import LayoutError, load_layout, resolve_layout
from .masks import DUMP_NAMES, MaskError, build_regional_mask, write_mask_dumps
from .mmdit import ModelConfig
from .rpg import RpgConfig, run_rpg
from .scheduler import ControlConfig, SimulationError, run_denoising, write_trace_csv


class UsageError(Exception):
    pass


_MODEL_KEYS = {"D": "feature_dim", "h": "heads", "nd": "double_blocks", "ns": "single_blocks", "seed": "seed"}


def parse_model_spec(text: str) -> tuple[ModelConfig, int | None]:
    """``D=64,h=4,nd=4,ns=4,S=8`` -> (ModelConfig, steps or None)."""
    kwargs, steps = {}, None
    for item in filter(None, text.split(",")):
        key, sep, value = item.partition("=")
        if not sep or not value.strip().isdigit():
            raise UsageError(f"bad --model entry {item!r}")
        if key == "S":
            steps = int(value)
        elif key in _MODEL_KEYS:
            kwargs[_MODEL_KEYS[key]] = int(value)
        else:
            raise UsageError(f"unknown --model key {key!r}")
    try:
        return ModelConfig(**kwargs), steps
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_blocks(text: str) -> tuple[tuple[int, ...] | None, tuple[int, ...] | None]:
    """``all``, ``none`` or ``double:0,1,single:2`` -> (double, single) index sets.

    None means every block of that kind.
    """
    if text == "all":
        return None, None
    if text == "none":
        return (), ()
    groups: dict[str, list[int]] = {"double": [], "single": []}
    current = None
    for token in text.split(","):
        token = token.strip()
        if ":" in token:
            current, _, token = token.partition(":")
            if current not in groups:
                raise UsageError(f"unknown block group {current!r}")
        if current is None:
            raise UsageError(f"block index {token!r} given before double: or single:")
        if token:
            if not token.isdigit():
                raise UsageError(f"bad block index {token!r}")
            groups[current].append(int(token))
    return tuple(groups["double"]), tuple(groups["single"])


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regionattn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a layout file")
    p.add_argument("--layout", required=True, type=Path)

    p = sub.add_parser("mask", help="dump the attention-mask blocks as PGM files")
    p.add_argument("--layout", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("simulate", help="run the denoising loop on a layout")
    p.add_argument("--layout", required=True, type=Path)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--inject-steps", type=int, default=None, help="defaults to --steps")
    p.add_argument("--blocks", default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", type=Path, default=None)
    p.add_argument("--records", action="store_true", help="keep per-step base/region/blend latents")
    p.add_argument("--method", choices=("regional", "rpg"), default="regional")
    p.add_argument("--base-weight", type=float, default=0.3, help="rpg only")
    p.add_argument("--model", default="", help="e.g. D=64,h=4,nd=4,ns=4")

    p = sub.add_parser("bench", help="speed/memory comparison on strip layouts")
    p.add_argument("--regions", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--model", default="", help="e.g. D=64,h=4,nd=4,ns=4,S=8")
    p.add_argument("--inject-steps", type=int, default=None)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_validate(args) -> int:
    resolved = resolve_layout(load_layout(args.layout))
    n = resolved.num_regions
    if resolved.background_added:
        added = int(resolved.masks.masks[-1].sum())
        print(f"OK: N={n}, full cover (background region added over {added} cells)")
    else:
        print(f"OK: N={n}, full cover")
    if resolved.coverage.overlap_cells:
        print(f"note: {len(resolved.coverage.overlap_cells)} overlapping cells")
    return 0


def _cmd_mask(args) -> int:
    mask = build_regional_mask(resolve_layout(load_layout(args.layout)))
    write_mask_dumps(mask, args.out)
    for name in DUMP_NAMES:
        rows, cols = mask.block(name).shape
        print(f"mask_{name}.pgm {rows}x{cols}")
    return 0


def _cmd_simulate(args) -> int:
    model, _ = parse_model_spec(args.model)
    resolved = resolve_layout(load_layout(args.layout))
    if args.method == "rpg":
        result = run_rpg(resolved, RpgConfig(args.base_weight, args.steps, args.seed), model)
    else:
        double, single = parse_blocks(args.blocks)
        inject = args.steps if args.inject_steps is None else args.inject_steps
        control = ControlConfig(
            beta=args.beta,
            total_steps=args.steps,
            inject_steps=inject,
            inject_double=double,
            inject_single=single,
            seed=args.seed,
        )
        result = run_denoising(resolved, control, model, keep_records=args.records)
    if args.trace is not None:
        write_trace_csv(result.trajectory, args.trace)
    print(f"method={args.method} N={resolved.num_regions} steps={args.steps} passes={result.passes}")
    print(f"final_norm={float(np.linalg.norm(result.z))!r}")
    return 0


def _cmd_bench(args) -> int:
    model, steps = parse_model_spec(args.model)
    config = BenchConfig(
        model=model,
        steps=steps or 8,
        repeats=args.repeat,
        threads=args.threads,
        inject_steps=args.inject_steps,
        dtype=args.dtype,
        seed=args.seed,
    )

    def progress(row):
        print(f"{row.method:<8s} N={row.regions:<3d} L={row.seq_len:<5d} {row.wall_ms_median:10.2f} ms "
              f"{row.est_peak_bytes:>12d} B", flush=True)

    report = run_bench(config, args.regions, progress=progress)
    write_bench_csv(report, args.out)
    print(format_summary(report))
    return 0


_COMMANDS = {"validate": _cmd_validate, "mask": _cmd_mask, "simulate": _cmd_simulate, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"regionattn: error: {exc}", file=sys.stderr)
        return 2
    except (LayoutError, MaskError, SimulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
