import csv

import pytest

from regionattn.cli import UsageError, main, parse_blocks, parse_model_spec

from conftest import DATA, GOLDEN

TINY_MODEL = "D=8,h=2,nd=1,ns=1,S=2"


def test_validate_golden(capsys):
    assert main(["validate", "--layout", str(DATA / "demo_2x2.json")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "validate_demo.txt").read_text()


def test_validate_uncovered_golden(capsys):
    assert main(["validate", "--layout", str(DATA / "uncovered_2x2.json")]) == 1
    err = capsys.readouterr().err
    assert err == (GOLDEN / "validate_uncovered.stderr.txt").read_text()


def test_validate_background(capsys):
    assert main(["validate", "--layout", str(DATA / "background_2x2.json")]) == 0
    assert "background region added" in capsys.readouterr().out


def test_validate_missing_file(capsys):
    assert main(["validate", "--layout", str(DATA / "nope.json")]) == 1
    assert capsys.readouterr().err.startswith("error: ")


def test_mask_golden(tmp_path, capsys):
    assert main(["mask", "--layout", str(DATA / "demo_2x2.json"), "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == (GOLDEN / "mask_demo.txt").read_text()
    for name in ("full", "i2i", "i2t", "t2i", "t2t"):
        got = (tmp_path / f"mask_{name}.pgm").read_bytes()
        assert got == (GOLDEN / f"mask_{name}.pgm").read_bytes(), name


@pytest.mark.parametrize("argv", [["frobnicate"], ["validate"], ["validate", "--layout", "x", "--bogus"], []])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_simulate_trace(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    argv = ["simulate", "--layout", str(DATA / "demo_2x2.json"), "--steps", "3", "--inject-steps", "2",
            "--model", "D=8,h=2,nd=1,ns=1", "--trace", str(trace)]
    assert main(argv) == 0
    assert "passes=5" in capsys.readouterr().out
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["step", "norm_z", "norm_base_minus_region", "injected"]
    assert [r[3] for r in rows[1:]] == ["1", "1", "0"]
    assert rows[3][2] == "" and float(rows[1][2]) >= 0


def test_simulate_rpg(capsys):
    argv = ["simulate", "--layout", str(DATA / "demo_2x2.json"), "--steps", "2", "--method", "rpg",
            "--model", "D=8,h=2,nd=1,ns=1"]
    assert main(argv) == 0
    assert "passes=6" in capsys.readouterr().out


def test_simulate_bad_blocks():
    argv = ["simulate", "--layout", str(DATA / "demo_2x2.json"), "--blocks", "triple:1"]
    assert main(argv) == 2


def test_simulate_bad_beta(capsys):
    argv = ["simulate", "--layout", str(DATA / "demo_2x2.json"), "--beta", "1.5", "--model", "D=8,h=2,nd=1,ns=1"]
    assert main(argv) == 1


def test_parse_blocks():
    assert parse_blocks("all") == (None, None)
    assert parse_blocks("none") == ((), ())
    assert parse_blocks("double:0,1,single:2") == ((0, 1), (2,))
    assert parse_blocks("single:0") == ((), (0,))
    with pytest.raises(UsageError):
        parse_blocks("0,1")


def test_parse_model_spec():
    cfg, steps = parse_model_spec("D=16,h=4,nd=1,ns=2,S=3")
    assert (cfg.feature_dim, cfg.heads, cfg.double_blocks, cfg.single_blocks, steps) == (16, 4, 1, 2, 3)
    for bad in ("D=7,h=2", "X=1", "D=abc"):
        with pytest.raises(UsageError):
            parse_model_spec(bad)


def test_bench_cli(tmp_path, capsys, monkeypatch):
    import regionattn.bench as bench

    small = bench.strip_layout

    def tiny_strips(n, height=32, width=32, prompt_len=16, base_len=32):
        return small(n, 4, 8, 2, 3)

    monkeypatch.setattr(bench, "strip_layout", tiny_strips)
    out = tmp_path / "bench.csv"
    argv = ["bench", "--regions", "1,2", "--repeat", "1", "--out", str(out), "--model", TINY_MODEL]
    assert main(argv) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["method", "regions", "seq_len", "wall_ms_median", "est_peak_bytes"]
    assert len(rows) == 7
    assert "speedup" in capsys.readouterr().out
