from pathlib import Path

import numpy as np
import pytest

from regionattn.layout import LayoutSpec, RegionSpec, resolve_layout

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"

_criteria: dict[int, dict] = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def golden_dir():
    return GOLDEN


def partition_layout(rng: np.random.Generator, height: int, width: int, n: int, lengths=None, base_len=3):
    """Random partition of an HxW grid into n non-empty bitmap regions."""
    cells = height * width
    labels = np.concatenate([np.arange(n), rng.integers(0, n, size=cells - n)])
    rng.shuffle(labels)
    if lengths is None:
        lengths = rng.integers(1, 5, size=n)
    regions = tuple(
        RegionSpec(
            id=f"r{i}",
            geometry=(labels == i).astype(np.uint8).reshape(height, width),
            prompt=tuple(int(t) for t in rng.integers(0, 65536, size=int(lengths[i]))),
        )
        for i in range(n)
    )
    spec = LayoutSpec(
        latent_height=height,
        latent_width=width,
        base_prompt=tuple(int(t) for t in rng.integers(0, 65536, size=base_len)),
        regions=regions,
    )
    return resolve_layout(spec)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = next((m for m in getattr(report, "_criterion", []) if m), None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
    entry["outcomes"].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    report._criterion = [tuple(m.args)] if m else []


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        ok = all(o == "passed" for _, o in entry["outcomes"])
        status = "PASS" if ok else "FAIL"
        detail = ", ".join(f"{name}={o}" for name, o in entry["outcomes"] if o != "passed")
        line = f"criterion {number} [{status}] {entry['title']}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
