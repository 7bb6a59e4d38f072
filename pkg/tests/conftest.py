from __future__ import annotations

import pytest

from qloss.fieldsolve import solve_potential
from qloss.geometry import (
    BUNDLED_DESIGNS,
    Conductor,
    CrossSection,
    DielectricRegion,
    build_cpw_cross_section,
    bundled_geometry,
)
from qloss.mesh import generate_mesh
from qloss.participation import simulate_participation


def plate_section(layers, width=1.0, metal=0.1, top=1.0, bottom=0.0):
    """Parallel plates with dielectric slabs stacked upward from y = 0.

    ``layers`` is a list of (name, permittivity, thickness); a repeated name
    extends the same region.
    """
    y = 0.0
    rects: dict[str, list] = {}
    eps: dict[str, float] = {}
    for name, e, t in layers:
        rects.setdefault(name, []).append((0.0, width, y, y + t))
        eps[name] = e
        y += t
    regions = tuple(DielectricRegion(n, eps[n], tuple(r)) for n, r in rects.items())
    conductors = (
        Conductor("bottom", bottom, ((0.0, width, -metal, 0.0),), metal),
        Conductor("top", top, ((0.0, width, y, y + metal),), metal),
    )
    return CrossSection("plates", y, width, regions, conductors, (0.0, width, -metal, y + metal),
                        thin_layers=False)


@pytest.fixture(scope="session")
def res_full():
    return solve_potential(generate_mesh(build_cpw_cross_section(4.5, 10, True), 1.0, 1.2))


@pytest.fixture(scope="session")
def res_bare():
    return solve_potential(generate_mesh(build_cpw_cross_section(4.5, 10, False), 1.0, 1.2))


@pytest.fixture(scope="session")
def design_runs():
    """Direct and surface participation for the four bundled designs."""
    return {d: simulate_participation(bundled_geometry(d)) for d in BUNDLED_DESIGNS}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
