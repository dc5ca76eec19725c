"""Four-block unified attention masks.

The assembled L x L mask is laid out as::

    [[i2i, i2t],
     [t2i, t2t]]

with image tokens first and one text segment per region. Entries are
boolean: True means the query may attend to the key. Sums of outer
products from overlapping regions are clamped to {0, 1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .layout import RegionMaskSet, ResolvedLayout, SegmentLayout

DUMP_NAMES = ("full", "i2i", "i2t", "t2i", "t2t")


class MaskError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttentionMask:
    i2i: np.ndarray
    i2t: np.ndarray
    t2i: np.ndarray
    t2t: np.ndarray
    segment: SegmentLayout
    full: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.full.shape

    def block(self, name: str) -> np.ndarray:
        return self.full if name == "full" else getattr(self, name)


def _as_bool_masks(masks) -> np.ndarray:
    arr = masks.masks if isinstance(masks, RegionMaskSet) else np.asarray(masks)
    return np.atleast_2d(arr).astype(bool)


def build_i2t(masks, lengths: Sequence[int]) -> np.ndarray:
    """Image-to-text block: column segment i is R_i outer 1_{1 x L_i}."""
    r = _as_bool_masks(masks)
    if r.shape[0] != len(lengths):
        raise MaskError(f"{r.shape[0]} region masks but {len(lengths)} prompt lengths")
    if any(n < 1 for n in lengths):
        raise MaskError("prompt lengths must be >= 1")
    return np.repeat(r.T, lengths, axis=1)


def build_t2i(i2t: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(i2t.T)


def build_t2t(lengths: Sequence[int]) -> np.ndarray:
    if any(n < 1 for n in lengths):
        raise MaskError("prompt lengths must be >= 1")
    owner = np.repeat(np.arange(len(lengths)), lengths)
    return owner[:, None] == owner[None, :]


def build_i2i(masks) -> np.ndarray:
    """(p, q) is True iff some region contains both p and q."""
    r = _as_bool_masks(masks).astype(np.int32)
    return (r.T @ r) > 0


def assemble_mask(i2i, i2t, t2i, t2t, segment: SegmentLayout) -> AttentionMask:
    li, lt = segment.image_len, segment.text_len
    expected = {"i2i": (li, li), "i2t": (li, lt), "t2i": (lt, li), "t2t": (lt, lt)}
    for name, blk in zip(expected, (i2i, i2t, t2i, t2t)):
        if blk.shape != expected[name]:
            raise MaskError(f"{name} block has shape {blk.shape}, expected {expected[name]}")
    full = np.block([[i2i, i2t], [t2i, t2t]]).astype(bool)
    empty_rows = np.flatnonzero(~full.any(axis=1))
    if empty_rows.size:
        raise MaskError(f"degenerate attention row at index {int(empty_rows[0])}")
    return AttentionMask(i2i=i2i, i2t=i2t, t2i=t2i, t2t=t2t, segment=segment, full=full)


def build_regional_mask(layout: ResolvedLayout) -> AttentionMask:
    lengths = [n for _, n in layout.segments.text_segments]
    i2t = build_i2t(layout.masks, lengths)
    return assemble_mask(build_i2i(layout.masks), i2t, build_t2i(i2t), build_t2t(lengths), layout.segments)


def base_mask(total_len: int) -> np.ndarray:
    """Unrestricted mask over image plus base-prompt tokens."""
    if total_len < 2:
        raise MaskError("base sequence must hold at least one image and one text token")
    return np.ones((total_len, total_len), dtype=bool)


def mask_to_pgm(mask: np.ndarray) -> str:
    """Plain PGM (P2), maxval 1, one text row per mask row."""
    m = np.asarray(mask)
    if m.ndim != 2 or 0 in m.shape:
        raise MaskError(f"cannot dump mask of shape {m.shape}")
    rows = "\n".join(" ".join("1" if v else "0" for v in row) for row in m)
    return f"P2\n{m.shape[1]} {m.shape[0]}\n1\n{rows}\n"


def write_mask_dumps(mask: AttentionMask, out_dir: Union[str, Path]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in DUMP_NAMES:
        path = out / f"mask_{name}.pgm"
        path.write_text(mask_to_pgm(mask.block(name)), encoding="ascii", newline="\n")
        paths.append(path)
    return paths
