"""Region layouts: JSON parsing, rasterization to the latent grid, cover
resolution and the unified token-segment layout.

Image tokens come first in the unified sequence, followed by one text
segment per region in layout order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

VOCAB_SIZE = 65536

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class LayoutError(ValueError):
    """Raised for layouts that cannot be turned into a valid region set."""


class BackgroundPolicy(enum.Enum):
    ERROR = "error"
    IMPLICIT_BASE = "base"


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> tuple[int, ...]:
    """Stub tokenizer: whitespace split, FNV-1a 64 of each word mod the vocab."""
    return tuple(fnv1a_64(word.encode("utf-8")) % VOCAB_SIZE for word in text.split())


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        coords = (self.x0, self.y0, self.x1, self.y1)
        if any(not 0.0 <= c <= 1.0 for c in coords):
            raise LayoutError(f"rect coordinates outside [0, 1]: {coords}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise LayoutError(f"rect coordinates not ordered: {coords}")


Geometry = Union[Rect, np.ndarray]


@dataclass(frozen=True, eq=False)
class RegionSpec:
    id: str
    geometry: Geometry
    prompt: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class LayoutSpec:
    latent_height: int
    latent_width: int
    base_prompt: tuple[int, ...]
    regions: tuple[RegionSpec, ...]
    background_policy: BackgroundPolicy = BackgroundPolicy.ERROR

    @property
    def image_len(self) -> int:
        return self.latent_height * self.latent_width

    @property
    def prompt_lengths(self) -> list[int]:
        return [len(r.prompt) for r in self.regions]


@dataclass(frozen=True, eq=False)
class RegionMaskSet:
    """Binary region indicators, shape (N, H*W), row-major flattened."""

    masks: np.ndarray
    ids: tuple[str, ...]

    def __len__(self) -> int:
        return self.masks.shape[0]

    def union(self) -> np.ndarray:
        return self.masks.any(axis=0)

    def is_partition(self) -> bool:
        return bool((self.masks.sum(axis=0) == 1).all())


@dataclass(frozen=True)
class SegmentLayout:
    image_offset: int
    image_len: int
    text_segments: tuple[tuple[int, int], ...]
    total_len: int

    @property
    def text_len(self) -> int:
        return self.total_len - self.image_len

    def text_slice(self, i: int) -> slice:
        offset, length = self.text_segments[i]
        return slice(offset, offset + length)


@dataclass(frozen=True)
class CoverageReport:
    uncovered_cells: list[int]
    overlap_cells: list[tuple[int, list[str]]]
    is_full_cover: bool


@dataclass(frozen=True, eq=False)
class ResolvedLayout:
    """A layout after rasterization and cover resolution, ready for masking."""

    spec: LayoutSpec
    masks: RegionMaskSet
    segments: SegmentLayout
    coverage: CoverageReport
    background_added: bool = False

    @property
    def num_regions(self) -> int:
        return len(self.spec.regions)


def rasterize_region(geometry: Geometry, height: int, width: int) -> np.ndarray:
    """Flattened uint8 mask of length height*width.

    A rect covers cell (r, c) when the cell center ((c + .5)/W, (r + .5)/H)
    falls in the half-open box [x0, x1) x [y0, y1). Bitmaps are copied.
    """
    if isinstance(geometry, Rect):
        cx = (np.arange(width) + 0.5) / width
        cy = (np.arange(height) + 0.5) / height
        in_x = (cx >= geometry.x0) & (cx < geometry.x1)
        in_y = (cy >= geometry.y0) & (cy < geometry.y1)
        grid = np.outer(in_y, in_x)
    else:
        grid = np.asarray(geometry)
        if grid.shape != (height, width):
            raise LayoutError(
                f"bitmap dimension mismatch: got {grid.shape}, expected {(height, width)}"
            )
        if not np.isin(grid, (0, 1)).all():
            raise LayoutError("bitmap entries must be 0 or 1")
    flat = grid.astype(np.uint8).reshape(-1)
    if not flat.any():
        raise LayoutError("empty region after rasterization")
    return flat


def rasterize_layout(spec: LayoutSpec) -> RegionMaskSet:
    masks = np.stack(
        [rasterize_region(r.geometry, spec.latent_height, spec.latent_width) for r in spec.regions]
    )
    return RegionMaskSet(masks=masks, ids=tuple(r.id for r in spec.regions))


def validate_cover(masks: RegionMaskSet, policy: BackgroundPolicy = BackgroundPolicy.ERROR) -> CoverageReport:
    """Report uncovered and overlapping cells.

    This never raises; with ``policy=ERROR`` the caller is expected to abort
    when ``uncovered_cells`` is non-empty.
    """
    if len(masks) == 0:
        raise LayoutError("mask set is empty")
    counts = masks.masks.astype(np.int64).sum(axis=0)
    uncovered = np.flatnonzero(counts == 0).tolist()
    overlaps = [
        (int(p), [masks.ids[i] for i in np.flatnonzero(masks.masks[:, p])])
        for p in np.flatnonzero(counts > 1)
    ]
    return CoverageReport(uncovered_cells=uncovered, overlap_cells=overlaps, is_full_cover=not uncovered)


def _background_id(taken: Sequence[str]) -> str:
    name, k = "background", 1
    while name in taken:
        name = f"background_{k}"
        k += 1
    return name


def add_background_region(spec: LayoutSpec, masks: RegionMaskSet) -> tuple[LayoutSpec, RegionMaskSet]:
    """Append a region over the uncovered cells, bound to the base prompt.

    Identity when the masks already cover the grid.
    """
    complement = (~masks.union()).astype(np.uint8)
    if not complement.any():
        return spec, masks
    bg_id = _background_id(masks.ids)
    bitmap = complement.reshape(spec.latent_height, spec.latent_width)
    region = RegionSpec(id=bg_id, geometry=bitmap, prompt=spec.base_prompt)
    new_spec = replace(spec, regions=spec.regions + (region,))
    new_masks = RegionMaskSet(masks=np.vstack([masks.masks, complement[None]]), ids=masks.ids + (bg_id,))
    return new_spec, new_masks


def segment_layout(spec: LayoutSpec) -> SegmentLayout:
    image_len = spec.image_len
    segments = []
    offset = image_len
    for length in spec.prompt_lengths:
        segments.append((offset, length))
        offset += length
    return SegmentLayout(image_offset=0, image_len=image_len, text_segments=tuple(segments), total_len=offset)


def resolve_layout(spec: LayoutSpec) -> ResolvedLayout:
    """Rasterize and apply the background policy.

    Raises LayoutError listing the uncovered cells under ``background: error``.
    """
    masks = rasterize_layout(spec)
    report = validate_cover(masks, spec.background_policy)
    added = False
    if not report.is_full_cover:
        if spec.background_policy is BackgroundPolicy.ERROR:
            cells = ",".join(str(c) for c in report.uncovered_cells)
            raise LayoutError(f"uncovered cells (background=error): {cells}")
        spec, masks = add_background_region(spec, masks)
        added = True
        report = validate_cover(masks, spec.background_policy)
    return ResolvedLayout(
        spec=spec, masks=masks, segments=segment_layout(spec), coverage=report, background_added=added
    )


# -- JSON --------------------------------------------------------------------


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise LayoutError(f"{where} must be an object")
    if key not in obj:
        raise LayoutError(f"missing required field: {where}.{key}" if where else f"missing required field: {key}")
    return obj[key]


def _int_field(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise LayoutError(f"{name} must be a positive integer")
    return value


def _parse_prompt(value, where: str) -> tuple[int, ...]:
    if isinstance(value, str):
        tokens = tokenize(value)
    elif isinstance(value, list):
        for t in value:
            if isinstance(t, bool) or not isinstance(t, int):
                raise LayoutError(f"{where}: token ids must be integers")
            if not 0 <= t < VOCAB_SIZE:
                raise LayoutError(f"{where}: token id {t} outside vocabulary")
        tokens = tuple(value)
    else:
        raise LayoutError(f"{where}: prompt must be a string or a list of token ids")
    if not tokens:
        raise LayoutError(f"{where}: empty prompt")
    return tokens


def _parse_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise LayoutError(f"rect field {name} must be a number")
    return float(value)


def _parse_geometry(region: dict, where: str) -> Geometry:
    has_rect, has_bitmap = "rect" in region, "bitmap" in region
    if has_rect == has_bitmap:
        raise LayoutError(f"{where}: exactly one of rect or bitmap is required")
    if has_rect:
        rect = region["rect"]
        coords = [_parse_number(_require(rect, k, f"{where}.rect"), k) for k in ("x0", "y0", "x1", "y1")]
        return Rect(*coords)
    bitmap = region["bitmap"]
    if not isinstance(bitmap, list) or not all(isinstance(row, list) for row in bitmap):
        raise LayoutError(f"{where}: bitmap must be a list of rows")
    widths = {len(row) for row in bitmap}
    if len(widths) > 1:
        raise LayoutError(f"{where}: bitmap rows have unequal lengths")
    for row in bitmap:
        for v in row:
            if isinstance(v, bool) or v not in (0, 1):
                raise LayoutError(f"{where}: bitmap entries must be 0 or 1")
    return np.array(bitmap, dtype=np.uint8).reshape(len(bitmap), widths.pop() if widths else 0)


def layout_from_dict(doc: dict) -> LayoutSpec:
    if not isinstance(doc, dict):
        raise LayoutError("layout document must be a JSON object")
    latent = _require(doc, "latent", "")
    height = _int_field(_require(latent, "height", "latent"), "latent.height")
    width = _int_field(_require(latent, "width", "latent"), "latent.width")
    base = _parse_prompt(_require(doc, "base_prompt", ""), "base_prompt")
    try:
        policy = BackgroundPolicy(doc.get("background", "error"))
    except ValueError:
        raise LayoutError(f"background must be 'error' or 'base', got {doc.get('background')!r}") from None

    raw_regions = _require(doc, "regions", "")
    if not isinstance(raw_regions, list) or not raw_regions:
        raise LayoutError("regions must be a non-empty list")
    regions = []
    seen: set[str] = set()
    for k, raw in enumerate(raw_regions):
        where = f"regions[{k}]"
        rid = _require(raw, "id", where)
        if not isinstance(rid, str):
            raise LayoutError(f"{where}.id must be a string")
        if rid in seen:
            raise LayoutError(f"duplicate region id: {rid!r}")
        seen.add(rid)
        prompt = _parse_prompt(_require(raw, "prompt", where), f"{where}.prompt")
        geometry = _parse_geometry(raw, where)
        try:
            rasterize_region(geometry, height, width)
        except LayoutError as exc:
            raise LayoutError(f"region {rid!r}: {exc}") from None
        regions.append(RegionSpec(id=rid, geometry=geometry, prompt=prompt))

    return LayoutSpec(
        latent_height=height,
        latent_width=width,
        base_prompt=base,
        regions=tuple(regions),
        background_policy=policy,
    )


def parse_layout(document: str) -> LayoutSpec:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"malformed JSON: {exc}") from None
    return layout_from_dict(doc)


def load_layout(path: Union[str, Path]) -> LayoutSpec:
    return parse_layout(Path(path).read_text(encoding="utf-8"))
