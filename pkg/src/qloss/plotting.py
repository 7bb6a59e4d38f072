"""PNG figures drawn from the same arrays that go into the plot-data tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def participation_figure(path: Path, results: dict) -> None:
    names = list(results)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(names))
    for k, (region, marker) in enumerate((("MA", "o"), ("SA", "s"))):
        d = [results[n]["direct"][region] for n in names]
        s = [results[n]["surface_approximation"][region] for n in names]
        ax.semilogy(x, d, marker, color=f"C{k}", label=f"{region} meshed")
        ax.semilogy(x, s, marker, color=f"C{k}", mfc="none", label=f"{region} surface estimate")
    ax.set_xticks(x, [f"{n}\nG={results[n]['G_um']:g} um" for n in names])
    ax.set_ylabel("participation ratio")
    ax.legend(fontsize=7)
    _save(fig, path)


def loss_figure(path: Path, points, pgrid, band) -> None:
    y, lo, hi = band
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.fill_between(pgrid * 1e5, lo * 1e6, hi * 1e6, color="C0", alpha=0.2, lw=0, label="95% band")
    ax.plot(pgrid * 1e5, y * 1e6, color="C0", label="fit")
    for p in points:
        style = dict(marker="s", color="C3") if p.is_resonator else dict(marker="o", color="k")
        ax.errorbar(p.p_ma * 1e5, p.inverse_q * 1e6, yerr=p.weight ** -0.5 * 1e6, ls="none", ms=4, **style)
    ax.set_xlabel(r"$p_{MA}$ ($10^{-5}$)")
    ax.set_ylabel(r"$1/Q$ ($10^{-6}$)")
    ax.set_xlim(left=0)
    ax.legend(fontsize=7)
    _save(fig, path)


def t1_distribution_figure(path: Path, curves: dict) -> None:
    names = list(curves)
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(names) + 2), 3.5))
    for k, name in enumerate(names):
        c, st = curves[name]
        w = 0.4 * c.density / c.density.max()
        ax.fill_betweenx(c.x, k - w, k + w, color="C0", alpha=0.5, lw=0)
        ax.vlines(k, st.q1, st.q3, color="k", lw=3)
        ax.plot(k, st.median, "o", color="w", ms=3)
    ax.set_xticks(range(len(names)), names)
    ax.set_ylabel(r"$T_1$ ($\mu$s)")
    _save(fig, path)


def rb_figure(path: Path, data, fit) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    yerr = None if data.sds is None else data.sds
    ax.errorbar(data.lengths, data.fidelities, yerr=yerr, fmt="o", ms=3, color="k")
    n = np.linspace(0, data.lengths.max(), 400)
    ax.plot(n, fit.evaluate(n), color="C0",
            label=f"p = {fit.p:.6f}, r_g = {fit.r_g:.3g}")
    ax.set_xlabel("number of Cliffords")
    ax.set_ylabel("sequence fidelity")
    ax.legend(fontsize=7)
    _save(fig, path)


def jj_figure(path: Path, arrays, fit) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    a = np.array([j.area for j in arrays])
    ax.plot(a, [100 * j.rsd for j in arrays], "o", color="k")
    grid = np.linspace(a.min() * 0.9, a.max() * 1.1, 200)
    ax.plot(grid, 100 * fit.rsd(grid), color="C0", label=f"gamma = {fit.gamma:.2f}")
    ax.set_xlabel(r"junction area ($\mu$m$^2$)")
    ax.set_ylabel("RSD (%)")
    ax.legend(fontsize=7)
    _save(fig, path)
