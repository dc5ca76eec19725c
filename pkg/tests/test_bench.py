import csv

import numpy as np
import pytest

from regionattn.bench import (
    CSV_HEADER,
    BenchConfig,
    estimate_memory,
    run_bench,
    seq_len,
    strip_layout,
    write_bench_csv,
)
from regionattn.layout import LayoutError, LayoutSpec, Rect, RegionSpec, resolve_layout
from regionattn.mmdit import ModelConfig

TINY = BenchConfig(
    model=ModelConfig(feature_dim=8, heads=2, double_blocks=1, single_blocks=1, max_positions=256),
    steps=2, repeats=1, height=4, width=8, prompt_len=2, base_len=3,
)


def one_region(h=2, w=2, base=(1, 2, 3), prompt=(1, 2, 3)):
    return resolve_layout(LayoutSpec(h, w, base, (RegionSpec("a", Rect(0, 0, 1, 1), prompt),)))


def test_regional_exceeds_vanilla_by_mask_bytes():
    m = ModelConfig(feature_dim=8, heads=2)
    lay = one_region()
    total = 4 + 3
    assert estimate_memory(m, lay, "regional") - estimate_memory(m, lay, "vanilla") == total**2


def test_rpg_single_region_is_vanilla_plus_state():
    m = ModelConfig(feature_dim=8, heads=2)
    lay = one_region()
    assert estimate_memory(m, lay, "rpg") == estimate_memory(m, lay, "vanilla") + 4 * 8 * 8


def test_regional_arithmetic_w8_h1_l7():
    m = ModelConfig(feature_dim=4, heads=1)
    lay = resolve_layout(LayoutSpec(2, 2, (1,), (
        RegionSpec("l", Rect(0, 0, 0.5, 1), (1, 2)),
        RegionSpec("r", Rect(0.5, 0, 1, 1), (3,)),
    )))
    assert estimate_memory(m, lay, "regional", itemsize=8) == 392 + 49


def test_memory_monotonicity():
    m = ModelConfig()
    prev_rpg = 0
    for n in (1, 2, 4, 8, 16):
        lay = strip_layout(n)
        rpg = estimate_memory(m, lay, "rpg", 4)
        assert rpg >= prev_rpg
        prev_rpg = rpg
        total = 1024 + 16 * n
        assert estimate_memory(m, lay, "regional", 4) == 4 * total**2 * 4 + total**2


def test_unknown_method():
    with pytest.raises(ValueError):
        estimate_memory(ModelConfig(), one_region(), "magic")


def test_strip_layout():
    lay = strip_layout(4, 2, 8, prompt_len=3, base_len=5)
    assert lay.masks.is_partition()
    assert lay.masks.masks.sum(axis=1).tolist() == [4, 4, 4, 4]
    assert lay.masks.masks[0].reshape(2, 8)[:, :2].all()
    assert lay.spec.prompt_lengths == [3] * 4 and len(lay.spec.base_prompt) == 5
    with pytest.raises(LayoutError, match="cannot build 9 strips"):
        strip_layout(9, 2, 8)


def test_strip_layout_deterministic():
    a, b = strip_layout(3), strip_layout(3)
    np.testing.assert_array_equal(a.masks.masks, b.masks.masks)
    assert [r.prompt for r in a.spec.regions] == [r.prompt for r in b.spec.regions]


def test_seq_len():
    lay = strip_layout(2)
    assert seq_len(lay, "vanilla") == 1024 + 32
    assert seq_len(lay, "regional") == 1024 + 32
    assert seq_len(lay, "rpg") == 1024 + 32
    assert seq_len(strip_layout(4), "regional") == 1024 + 64


def test_run_bench_rows_and_csv(tmp_path):
    report = run_bench(TINY, [1, 2, 4, 8, 16][:4])
    assert len(report.rows) == 3 * 4
    assert {(r.method, r.regions) for r in report.rows} == {(m, n) for m in ("vanilla", "regional", "rpg") for n in (1, 2, 4, 8)}
    assert all(r.wall_ms_median > 0 and r.est_peak_bytes > 0 for r in report.rows)
    path = tmp_path / "bench.csv"
    write_bench_csv(report, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_HEADER == ("method", "regions", "seq_len", "wall_ms_median", "est_peak_bytes")
    assert len(rows) == 13


def test_rerun_changes_only_wall_time():
    a = run_bench(TINY, [1, 2])
    b = run_bench(TINY, [1, 2])
    strip = lambda rep: [(r.method, r.regions, r.seq_len, r.est_peak_bytes) for r in rep.rows]
    assert strip(a) == strip(b)


def test_bench_rejects_too_many_strips():
    with pytest.raises(LayoutError, match="cannot build"):
        run_bench(TINY, [16])
