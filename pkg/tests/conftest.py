from __future__ import annotations

import numpy as np
import pytest

from usthermal.acoustics import MediumParams, focus_phases
from usthermal.config import load_config
from usthermal.geometry import ArrayAssembly, ArrayUnit, default_unit

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def record(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


@pytest.fixture(scope="session")
def sec24():
    return load_config("ref:sec24")


@pytest.fixture(scope="session")
def fig1():
    return load_config("ref:fig1")


@pytest.fixture(scope="session")
def medium():
    return MediumParams()


@pytest.fixture(scope="session")
def small_assembly():
    """Two 4x3 units, small enough for brute-force oracles."""
    u0 = ArrayUnit(origin=(-0.03, -0.01, 0.0), rows=4, cols=3, omitted_cells=())
    u1 = ArrayUnit(origin=(0.01, -0.01, 0.0), rows=4, cols=3, omitted_cells=((0, 0),))
    return ArrayAssembly((u0, u1))


@pytest.fixture(scope="session")
def single_element():
    return ArrayAssembly((ArrayUnit(rows=1, cols=1, omitted_cells=()),))


@pytest.fixture(scope="session")
def six_units():
    """Six default units around the origin, radiating along +z."""
    span_x, span_y = 17 * 10.16e-3, 13 * 10.16e-3
    units = []
    for cx in (-0.116, 0.116):
        for cy in (-0.1514, 0.0, 0.1514):
            units.append(default_unit((cx - span_x / 2, cy - span_y / 2, 0.0)))
    return ArrayAssembly(tuple(units))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def focused_small(small_assembly, medium):
    focus = np.array([0.0, 0.0, 0.1])
    return focus, focus_phases(small_assembly, medium, focus)
