"""Junction resistance spread and its dependence on junction area.

The model is ``RSD**2 = a / A**gamma + b``. For fixed ``gamma`` it is linear
in ``(a, b)``, so the fit is a non-negative linear regression nested in a
one-dimensional search over ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

GAMMA_BOUNDS = (0.5, 3.0)
MIN_AREA_SPAN = 2.0


@dataclass(frozen=True)
class JJArray:
    """Resistances of nominally identical junctions of one design area."""

    area: float                       # um^2
    resistances: tuple[float, ...]    # ohm
    label: str = ""

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError(f"junction area must be positive, got {self.area}")
        r = tuple(float(x) for x in self.resistances)
        if any(not x > 0 for x in r):
            raise ValueError(f"{self.label or self.area}: resistances must be positive")
        object.__setattr__(self, "resistances", r)

    @property
    def rsd(self) -> float:
        return relative_std(self.resistances)


def relative_std(resistances: Sequence[float]) -> float:
    """Sample standard deviation (n - 1) over the sample mean."""
    r = np.asarray(resistances, dtype=float)
    if r.size < 2:
        raise ValueError("relative standard deviation needs at least 2 values")
    mean = r.mean()
    if not mean > 0:
        raise ValueError("mean resistance must be positive")
    return float(r.std(ddof=1) / mean)


@dataclass(frozen=True)
class RSDFit:
    a: float
    gamma: float
    b: float
    sd: dict[str, float] = field(default_factory=dict)
    gamma_determined: bool = True
    cost: float = 0.0
    method: str = "nested"

    def rsd(self, area) -> np.ndarray:
        area = np.asarray(area, dtype=float)
        g = self.gamma if self.gamma_determined else 0.0
        return np.sqrt(self.a / area**g + self.b)


def _nnls_for_gamma(area: np.ndarray, y: np.ndarray, gamma: float) -> tuple[np.ndarray, float]:
    X = np.column_stack([area**-gamma, np.ones_like(area)])
    # scale columns so NNLS is well conditioned across gamma
    scale = np.linalg.norm(X, axis=0)
    coef, rnorm = optimize.nnls(X / scale, y)
    return coef / scale, float(rnorm**2)


def _check_points(areas, rsds) -> tuple[np.ndarray, np.ndarray]:
    area = np.asarray(areas, dtype=float)
    rsd = np.asarray(rsds, dtype=float)
    if area.shape != rsd.shape or area.ndim != 1:
        raise ValueError("areas and RSD values must be 1-D and of equal length")
    if area.size < 4:
        raise ValueError(f"need at least 4 points, got {area.size}")
    if (area <= 0).any() or (rsd < 0).any():
        raise ValueError("areas must be positive and RSD values non-negative")
    if area.max() / area.min() < MIN_AREA_SPAN:
        raise ValueError(f"areas span only {area.max() / area.min():.3g}x; need at least {MIN_AREA_SPAN}x")
    return area, rsd


def fit_rsd_model(areas: Sequence[float], rsds: Sequence[float],
                  method: str = "nested", gamma_bounds: tuple[float, float] = GAMMA_BOUNDS,
                  n_grid: int = 501) -> RSDFit:
    """Least-squares fit of ``RSD**2 = a / A**gamma + b`` with ``a, b >= 0``.

    ``method="nested"`` scans ``gamma`` on a grid, solving the non-negative
    linear problem at each value, then refines the best bracket with a
    bounded scalar minimization. ``method="nonlinear"`` fits all three
    parameters jointly with a trust-region solver started from a coarse scan.
    """
    area, rsd = _check_points(areas, rsds)
    y = rsd**2
    if np.ptp(y) <= 1e-15 * max(y.max(), 1e-300):
        return RSDFit(a=0.0, gamma=float("nan"), b=float(y.mean()),
                      sd={"a": 0.0, "gamma": float("nan"), "b": float(y.std(ddof=1) / math.sqrt(y.size))},
                      gamma_determined=False, method=method)
    lo, hi = gamma_bounds
    if method == "nested":
        grid = np.linspace(lo, hi, n_grid)
        costs = np.array([_nnls_for_gamma(area, y, g)[1] for g in grid])
        k = int(np.argmin(costs))
        a_, b_ = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
        res = optimize.minimize_scalar(lambda g: _nnls_for_gamma(area, y, g)[1], bounds=(a_, b_),
                                       method="bounded", options={"xatol": 1e-13})
        gamma = float(res.x) if res.fun <= costs[k] else float(grid[k])
        (a, b), cost = _nnls_for_gamma(area, y, gamma)
    elif method == "nonlinear":
        grid = np.linspace(lo, hi, 26)
        g0 = grid[int(np.argmin([_nnls_for_gamma(area, y, g)[1] for g in grid]))]
        (a0, b0), _ = _nnls_for_gamma(area, y, g0)
        sy = float(np.abs(y).max())
        res = optimize.least_squares(
            lambda p: (p[0] * area ** -p[1] + p[2] - y) / sy,
            [a0, g0, b0], bounds=([0.0, lo, 0.0], [np.inf, hi, np.inf]),
            method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000,
        )
        a, gamma, b = (float(v) for v in res.x)
        cost = float(np.sum((a * area**-gamma + b - y) ** 2))
    else:
        raise ValueError(f"unknown method {method!r}")
    sd = _parameter_sd(area, y, float(a), gamma, float(b))
    return RSDFit(a=float(a), gamma=gamma, b=float(b), sd=sd, cost=cost, method=method)


def _parameter_sd(area, y, a, gamma, b) -> dict[str, float]:
    """Linearized SDs from the Jacobian with the residual variance."""
    J = np.column_stack([area**-gamma, -a * np.log(area) * area**-gamma, np.ones_like(area)])
    r = a * area**-gamma + b - y
    dof = area.size - 3
    s2 = float(r @ r) / dof if dof > 0 else float("nan")
    cov = np.linalg.pinv(J.T @ J) * s2
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    return {"a": float(sd[0]), "gamma": float(sd[1]), "b": float(sd[2])}


def fit_arrays(arrays: Sequence[JJArray], **kw) -> RSDFit:
    """Group junction arrays by area, compute each RSD and fit the model."""
    return fit_rsd_model([j.area for j in arrays], [j.rsd for j in arrays], **kw)


def synthetic_arrays(areas: Sequence[float], a: float, gamma: float, b: float,
                     n_per_area: int = 30, mean_resistance: float = 1e4,
                     seed: int = 0) -> list[JJArray]:
    """Lognormal junction resistances whose spread follows the model."""
    rng = np.random.default_rng(seed)
    out = []
    for area in areas:
        target = math.sqrt(a / area**gamma + b)
        sigma = math.sqrt(math.log1p(target**2))
        mu = math.log(mean_resistance / area) - sigma**2 / 2
        out.append(JJArray(float(area), tuple(rng.lognormal(mu, sigma, n_per_area)), f"A={area:g}"))
    return out
