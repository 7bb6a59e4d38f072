"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line; the same lines
are repeated in the terminal summary by ``conftest.py``.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from qloss.cli import main
from qloss.coherence import fit_exponential_decay, fit_ramsey, synthetic_series
from qloss.fieldsolve import solve_potential
from qloss.geometry import BUNDLED_DESIGNS, bundled_geometry
from qloss.io import reference_p_ma
from qloss.jjstats import fit_rsd_model
from qloss.mesh import generate_mesh
from qloss.participation import participation_ratios
from qloss.rb import (
    NoiseParams,
    RBFit,
    build_clifford_table,
    coherence_limit_fidelity,
    equal_up_to_phase,
    fit_rb_decay,
    generate_rb_sequence,
    simulate_rb,
    simulate_sequence,
)

RESULTS: dict[int, str] = {}

BY_GAP = ("RES", "XM1", "XM2", "TM")


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _max_principle(sol) -> bool:
    m = sol.mesh
    pots = m.potential[m.is_conductor]
    phi = sol.potential[~m.is_conductor[m.tags]]
    return bool(phi.min() >= pots.min() - 1e-12 and phi.max() <= pots.max() + 1e-12)


def test_criterion_1_substrate_participation():
    t0 = time.perf_counter()
    sol = solve_potential(generate_mesh(bundled_geometry("RES").build(False), 1.0, 1.2))
    p = participation_ratios(sol)["substrate"]
    dt = time.perf_counter() - t0
    ok = abs(p - 0.92) <= 0.02 and dt < 60
    verdict(1, ok, f"RES substrate p = {p:.4f} (target 0.92 +/- 0.02, 11.9/12.9 = {11.9 / 12.9:.4f}); "
                   f"{dt:.2f} s")


def test_criterion_2_interface_ratios(design_runs):
    ref = reference_p_ma()
    ma = {d: design_runs[d].direct["MA"] for d in BY_GAP}
    within = all(0.5 <= ma[d] / ref[d] <= 2.0 for d in BY_GAP)
    decreasing = all(ma[a] > ma[b] for a, b in zip(BY_GAP, BY_GAP[1:]))
    worst_sum = max(abs(sum(design_runs[d].direct.ratios.values()) - 1) for d in BUNDLED_DESIGNS)
    ok = within and decreasing and worst_sum <= 1e-9
    ratios = ", ".join(f"{d} {ma[d]:.3g} ({ma[d] / ref[d]:.2f}x)" for d in BY_GAP)
    verdict(2, ok, f"p_MA {ratios}; decreasing in G: {decreasing}; max |sum - 1| = {worst_sum:.1e}")


def test_criterion_3_loss_budget(tmp_path):
    t0 = time.perf_counter()
    rc = main(["fit-loss", "--no-figures", "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    loss = json.loads((tmp_path / "report.json").read_text())["stages"]["loss"]
    c, t1 = loss["intercept"], loss["junction_limit"]["t1_us"]
    ok = rc == 0 and 0.2e-6 <= c <= 0.9e-6 and t1 is not None and abs(t1 - 103) <= 40 and dt < 1.0
    verdict(3, ok, f"c = {c:.3e}, junction-limited T1 at 3 GHz = {t1:.1f} us (103 +/- 40); {dt:.2f} s")


def test_criterion_4_coherence_limit():
    t0 = time.perf_counter()
    noise = NoiseParams(50.0, 60.0, 50.0)
    limit = coherence_limit_fidelity(noise)
    data = simulate_rb([1, 10, 25, 50, 100, 200, 400, 700, 1000, 1500, 2000], 80, noise, base_seed=0)
    fit = fit_rb_decay(data, weighted=True)
    dt = time.perf_counter() - t0
    z = (fit.f1q - limit) / fit.r_g_sd
    ok = abs(100 * limit - 99.96) <= 0.005 and abs(z) <= 3 and dt < 120
    verdict(4, ok, f"limit = {100 * limit:.4f}% (99.96 +/- 0.005); simulated F1q = {100 * fit.f1q:.4f}% "
                   f"({z:+.2f} SE); {dt:.2f} s")


def test_criterion_5_rb_algebra():
    fit = RBFit(A=0.5, p=0.99776, B=0.5)
    ok = abs(fit.r_g - 5.98e-4) <= 0.30e-4 and abs(100 * fit.f1q - 99.940) < 5e-4
    verdict(5, ok, f"r_g = {fit.r_g:.4e} (5.98 +/- 0.30 e-4), F1q = {100 * fit.f1q:.4f}%")


def test_criterion_6_fit_recovery():
    trials = 200
    t_exp = np.linspace(0, 250, 60)
    t_ram = np.linspace(0, 200, 60)
    exp_hits = ram_hits = 0
    for seed in range(trials):
        s = synthetic_series("T1", 50.0, t_exp, noise=0.05, seed=seed)
        exp_hits += abs(fit_exponential_decay(s).T / 50.0 - 1) <= 0.03
        s = synthetic_series("Ramsey", 63.8, t_ram, A=0.5, B=0.5, detuning_mhz=0.1, noise=0.05, seed=seed)
        f = fit_ramsey(s)
        ram_hits += abs(f.T / 63.8 - 1) <= 0.03 and abs(f.detuning_mhz / 0.1 - 1) <= 0.03
    areas = np.linspace(0.03, 0.125, 10)
    a, gamma, b = 2.63e-5, 1.3, 1e-5
    rsd_fit = fit_rsd_model(areas, np.sqrt(a / areas**gamma + b))
    rsd_ok = all(abs(got / want - 1) <= 0.10 for got, want in ((rsd_fit.a, a), (rsd_fit.gamma, gamma),
                                                               (rsd_fit.b, b)))
    ok = exp_hits / trials >= 0.95 and ram_hits / trials >= 0.95 and rsd_ok
    verdict(6, ok, f"within 3%: exponential {exp_hits}/{trials}, Ramsey {ram_hits}/{trials} (need 190); "
                   f"RSD model recovered within 10%: {rsd_ok} (gamma = {rsd_fit.gamma:.6f})")


def test_criterion_7_numerical_hygiene(design_runs):
    changes, principle = {}, True
    for d in BUNDLED_DESIGNS:
        cs = bundled_geometry(d).build(True)
        fine = solve_potential(generate_mesh(cs, 1.0, 1.2))
        coarse = solve_potential(generate_mesh(cs, 2.0, 1.2))
        principle &= _max_principle(fine) and _max_principle(coarse)
        changes[d] = abs(participation_ratios(coarse)["MA"] / participation_ratios(fine)["MA"] - 1)
    cross = max(abs(design_runs[d].relative_difference(layer)) for d in BUNDLED_DESIGNS for layer in ("MA", "SA"))
    noise = NoiseParams(50.0, 60.0, 50.0)
    positive = True
    try:
        for seed in range(5):
            simulate_sequence(generate_rb_sequence(200, seed), noise, validate=True)
        simulate_rb([1, 100, 500], 10, noise, validate=True)
    except AssertionError:
        positive = False
    worst = max(changes.values())
    ok = worst < 0.05 and cross <= 0.25 and principle and positive
    verdict(7, ok, f"max mesh-halving change in p_MA = {100 * worst:.2f}%; max direct vs surface = "
                   f"{100 * cross:.1f}%; maximum principle: {principle}; density matrices physical: {positive}")


def test_criterion_8_clifford_structure():
    table = build_clifford_table()
    n = len(table)
    closed = all(equal_up_to_phase(table.unitaries[a] @ table.unitaries[b],
                                   table.unitaries[table.multiplication[a, b]])
                 for a in range(n) for b in range(n))
    inverses = all(table.multiplication[a, table.inverse[a]] == 0 for a in range(n))
    avg = table.average_generator_count
    ok = n == 24 and closed and inverses and avg == pytest.approx(1.875, abs=1e-12)
    verdict(8, ok, f"{n} elements, closure {closed}, inverses {inverses}, average generators {avg:.4f}")
