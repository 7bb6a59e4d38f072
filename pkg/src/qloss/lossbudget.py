"""Quality factors, the linear loss model 1/Q = slope * p_MA + intercept,
and the relaxation time implied by the intercept."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

DESIGNS = ("TM", "XM1", "XM2", "RES")
CONFIDENCE = 0.95
REL_SIGMA_FLOOR = 0.01


def q_factor(t1_us: float, freq_ghz: float) -> float:
    """Q = 2*pi*T1*f with T1 in microseconds and f in GHz."""
    if not (t1_us > 0 and freq_ghz > 0):
        raise ValueError(f"T1 and frequency must be positive, got {t1_us}, {freq_ghz}")
    return 2.0 * math.pi * t1_us * freq_ghz * 1e3


@dataclass(frozen=True)
class QubitDevice:
    """One measured device: a qubit, or a resonator with a T1-equivalent decay time."""

    name: str
    design: str
    etch: str
    resistivity: str
    t1_mean: float
    t1_sd: float
    frequency: float
    junction_area: float | None = None
    measurement_count: int = 1
    t1_samples: tuple[float, ...] = ()
    die: str = ""
    span_days: float | None = None
    junction_area_measured: bool = False

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"{self.name}: unknown design {self.design!r}")
        if self.etch not in ("wet", "dry"):
            raise ValueError(f"{self.name}: etch must be wet or dry, got {self.etch!r}")
        if not self.t1_mean > 0:
            raise ValueError(f"{self.name}: t1_mean must be positive")
        if not self.frequency > 0:
            raise ValueError(f"{self.name}: frequency must be positive")
        if self.t1_sd < 0:
            raise ValueError(f"{self.name}: t1_sd must be non-negative")
        if self.t1_samples:
            s = np.asarray(self.t1_samples, dtype=float)
            if abs(s.mean() - self.t1_mean) > 0.01 * self.t1_mean:
                raise ValueError(f"{self.name}: sample mean disagrees with t1_mean")
            if s.size > 1:
                sd = s.std(ddof=1)
                if abs(sd - self.t1_sd) > 0.01 * max(self.t1_sd, sd):
                    raise ValueError(f"{self.name}: sample SD disagrees with t1_sd")

    @property
    def is_resonator(self) -> bool:
        return self.design == "RES"

    @property
    def q(self) -> float:
        return q_factor(self.t1_mean, self.frequency)

    @property
    def inverse_q(self) -> float:
        return 1.0 / self.q


@dataclass(frozen=True)
class LossPoint:
    name: str
    p_ma: float
    inverse_q: float
    weight: float = 1.0
    is_resonator: bool = False


@dataclass(frozen=True)
class LossFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    covariance: tuple[tuple[float, float], tuple[float, float]]
    dof: int
    t_quantile: float
    points: tuple[LossPoint, ...]
    weighted: bool = False
    residuals: tuple[float, ...] = field(default=())

    @property
    def slope_halfwidth(self) -> float:
        return self.t_quantile * self.slope_se

    @property
    def intercept_halfwidth(self) -> float:
        return self.t_quantile * self.intercept_se

    def predict(self, p) -> np.ndarray:
        return self.slope * np.asarray(p, dtype=float) + self.intercept

    def band(self, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fitted line and its 95% confidence band (mean response)."""
        p = np.asarray(p, dtype=float)
        (caa, cac), (_, ccc) = self.covariance
        var = p**2 * caa + 2 * p * cac + ccc
        hw = self.t_quantile * np.sqrt(np.maximum(var, 0.0))
        y = self.predict(p)
        return y, y - hw, y + hw


def fit_loss_line(
    points: Sequence[LossPoint],
    include_resonators: bool = False,
    weighted: bool = False,
    confidence: float = CONFIDENCE,
) -> LossFit:
    """Least-squares line through (p_MA, 1/Q).

    Resonators are left out unless ``include_resonators`` is set. With
    ``weighted`` the per-point weights enter as in weighted least squares
    and the covariance is scaled by the weighted residual variance.
    Confidence half-widths use Student-t quantiles at n - 2 degrees of
    freedom.
    """
    used = tuple(p for p in points if include_resonators or not p.is_resonator)
    if len(used) < 3:
        raise ValueError(f"need at least 3 points for a two-parameter fit, got {len(used)}")
    x = np.array([p.p_ma for p in used])
    y = np.array([p.inverse_q for p in used])
    if (x < 0).any():
        raise ValueError("participation ratios must be non-negative")
    w = np.array([p.weight for p in used]) if weighted else np.ones_like(x)
    if not (w > 0).all():
        raise ValueError("weights must be positive")
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    dx = x - xm
    sxx = (w * dx * dx).sum()
    if not sxx > 0:
        raise ValueError("zero variance in p_MA: slope is not identifiable")
    slope = (w * dx * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    dof = len(used) - 2
    s2 = (w * resid**2).sum() / dof if dof > 0 else 0.0
    var_a = s2 / sxx
    var_c = s2 * (1.0 / sw + xm**2 / sxx)
    cov_ac = -xm * s2 / sxx
    tq = float(stats.t.ppf(0.5 + confidence / 2, dof)) if dof > 0 else float("inf")
    return LossFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_se=float(math.sqrt(var_a)),
        intercept_se=float(math.sqrt(var_c)),
        covariance=((float(var_a), float(cov_ac)), (float(cov_ac), float(var_c))),
        dof=dof,
        t_quantile=tq,
        points=tuple(points),
        weighted=weighted,
        residuals=tuple(float(r) for r in resid),
    )


@dataclass(frozen=True)
class JunctionLimit:
    """T1 implied by the residual loss, or the reason none is resolvable."""

    resolved: bool
    f_ref_ghz: float
    intercept: float
    intercept_halfwidth: float
    t1_us: float | None = None
    t1_halfwidth_us: float | None = None
    t1_low_us: float | None = None
    t1_high_us: float | None = None
    reason: str = ""


def junction_limited_t1(fit: LossFit, f_ref_ghz: float = 3.0) -> JunctionLimit:
    """Invert the intercept, T1 = 1 / (2 pi f c).

    ``t1_halfwidth_us`` propagates the intercept's 95% half-width to first
    order; ``t1_low_us``/``t1_high_us`` invert the interval ends (the upper
    end is infinite when the interval reaches zero loss).
    """
    c = fit.intercept
    hw = fit.intercept_halfwidth
    if not f_ref_ghz > 0:
        raise ValueError("reference frequency must be positive")
    if not c > 0:
        return JunctionLimit(
            resolved=False, f_ref_ghz=f_ref_ghz, intercept=c, intercept_halfwidth=hw,
            reason="unresolved residual: intercept is not positive",
        )
    omega = 2.0 * math.pi * f_ref_ghz * 1e3  # per microsecond
    t1 = 1.0 / (omega * c)
    lo = 1.0 / (omega * (c + hw))
    hi = 1.0 / (omega * (c - hw)) if c - hw > 0 else math.inf
    return JunctionLimit(
        resolved=True, f_ref_ghz=f_ref_ghz, intercept=c, intercept_halfwidth=hw,
        t1_us=t1, t1_halfwidth_us=t1 * hw / c, t1_low_us=lo, t1_high_us=hi,
    )


def loss_points(
    devices: Iterable[QubitDevice],
    p_ma: Mapping[str, float],
    exclude: Iterable[str] = (),
    rel_sigma_floor: float = REL_SIGMA_FLOOR,
) -> list[LossPoint]:
    """One point per device; weight is 1/sigma(1/Q)**2 from the T1 spread.

    Relative T1 spreads below ``rel_sigma_floor`` are raised to it so that
    rows reporting a zero SD do not receive infinite weight.
    """
    skip = set(exclude)
    out = []
    for d in devices:
        if d.name in skip:
            continue
        if d.design not in p_ma:
            raise KeyError(f"no p_MA value for design {d.design!r} (device {d.name})")
        inv_q = d.inverse_q
        rel = max(d.t1_sd / d.t1_mean, rel_sigma_floor)
        out.append(LossPoint(d.name, float(p_ma[d.design]), inv_q, 1.0 / (inv_q * rel) ** 2,
                             d.is_resonator))
    return out
