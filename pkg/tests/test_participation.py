from __future__ import annotations

import pytest

from qloss.fieldsolve import solve_potential
from qloss.geometry import BUNDLED_DESIGNS, build_cpw_cross_section
from qloss.io import reference_participation
from qloss.mesh import generate_mesh
from qloss.participation import (
    LayerSpec,
    ParticipationReport,
    participation_ratios,
    surface_report,
    thin_layer_participation,
)

from conftest import plate_section

T_OX = 0.005  # um


def _solve(cs, min_cell_nm=1.0, ratio=1.3):
    return solve_potential(generate_mesh(cs, min_cell_nm, ratio))


def test_single_region_is_everything():
    rep = participation_ratios(_solve(plate_section([("air", 1.0, 1.0)]), 20))
    assert rep.ratios == {"air": pytest.approx(1.0, abs=1e-15)}
    assert rep.method == "direct"


def test_plate_oxide_direct_matches_series_capacitor():
    sol = _solve(plate_section([("MA", 5.0, T_OX), ("air", 1.0, 1.0 - T_OX)]))
    p = participation_ratios(sol)["MA"]
    expected = (T_OX / 5.0) / ((1.0 - T_OX) + T_OX / 5.0)
    assert p == pytest.approx(expected, rel=1e-9)
    assert p == pytest.approx(1.00e-3, rel=0.01)


def test_plate_oxide_surface_estimate():
    bare = _solve(plate_section([("air", 1.0, 1.0)]), 20)
    p = thin_layer_participation(bare, LayerSpec.metal_air(conductors=("bottom",)))
    assert p == pytest.approx(T_OX / 5.0 / 1.0, rel=1e-9)
    assert p == pytest.approx(1.00e-3, rel=0.01)


def test_matched_permittivity_gives_volume_fraction():
    bare = _solve(plate_section([("air", 1.0, 1.0)]), 20)
    layer = LayerSpec("MA", 5.0, 1.0, conductors=("bottom",))
    assert thin_layer_participation(bare, layer) == pytest.approx(T_OX / 1.0, rel=1e-9)
    direct = participation_ratios(_solve(plate_section([("MA", 1.0, T_OX), ("air", 1.0, 1 - T_OX)])))
    assert direct["MA"] == pytest.approx(T_OX, rel=1e-9)


def test_missing_surface_rejected():
    bare = _solve(plate_section([("air", 1.0, 1.0)]), 20)
    with pytest.raises(ValueError, match="substrate"):
        thin_layer_participation(bare, LayerSpec.substrate_air())
    with pytest.raises(ValueError):
        thin_layer_participation(bare, LayerSpec("XX", 1.0, 1.0))


def test_report_rejects_unknown_method():
    with pytest.raises(ValueError):
        ParticipationReport("x", "guess", {})


def test_res_direct_ratios(res_full):
    ref = reference_participation()["RES"]
    rep = participation_ratios(res_full)
    assert sum(rep.ratios.values()) == pytest.approx(1.0, abs=1e-9)
    assert rep["substrate"] == pytest.approx(ref["substrate"], abs=0.02)
    assert rep["air"] == pytest.approx(ref["air"], abs=0.02)
    for layer in ("MA", "SA"):
        assert 0.5 < rep[layer] / ref[layer] < 2.0


def test_res_surface_estimate_close_to_direct(res_full, res_bare):
    direct = participation_ratios(res_full)
    surf = surface_report(res_bare)
    assert surf.method == "surface-approximation"
    assert sum(surf.ratios.values()) == pytest.approx(1.0, abs=1e-12)
    for layer in ("MA", "SA"):
        assert abs(surf[layer] - direct[layer]) / direct[layer] < 0.25


@pytest.mark.parametrize("design", BUNDLED_DESIGNS)
def test_design_normalisation_and_cross_method(design_runs, design):
    run = design_runs[design]
    assert sum(run.direct.ratios.values()) == pytest.approx(1.0, abs=1e-9)
    assert abs(run.relative_difference("MA")) < 0.25
    assert abs(run.relative_difference("SA")) < 0.25


@pytest.mark.parametrize("layer", ["MA", "SA"])
def test_design_ordering(design_runs, layer):
    vals = [design_runs[d].direct[layer] for d in ("RES", "XM1", "XM2", "TM")]
    assert vals == sorted(vals, reverse=True) and len(set(vals)) == 4


def test_layer_ratios_fall_with_gap_at_fixed_width():
    ma, sa = [], []
    for G in (4.5, 13, 24, 70):
        rep = participation_ratios(_solve(build_cpw_cross_section(G, 10.0, True), 1.0, 1.2))
        ma.append(rep["MA"])
        sa.append(rep["SA"])
    assert all(a > b for a, b in zip(ma, ma[1:]))
    assert all(a > b for a, b in zip(sa, sa[1:]))


def test_as_rows(res_full):
    rows = participation_ratios(res_full).as_rows()
    assert {r["region"] for r in rows} == {"substrate", "air", "MA", "SA"}
    assert all(r["method"] == "direct" for r in rows)
