"""Time-domain coherence fits and repeated-T1 statistics.

Models, with ``t`` in microseconds and detuning in MHz::

    T1 / Echo:  A * exp(-t / T) + B
    Ramsey:     A * exp(-t / T) * cos(2 pi delta t + phi) + B

Fits are Levenberg-Marquardt least squares (``scipy.optimize.least_squares``)
started from closed-form estimates. Reported SDs come from the parameter
covariance at the optimum, scaled by the residual variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy import stats as sstats

from .errors import FitError, NoDecayError

MODELS = ("T1", "Ramsey", "Echo")


@dataclass(frozen=True, eq=False)
class DecaySeries:
    times: np.ndarray
    populations: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.populations, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("times and populations must be 1-D arrays of equal length")
        if t.size < 4:
            raise ValueError(f"need at least 4 points, got {t.size}")
        if not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("populations must be finite")
        if y.min() < -0.1 or y.max() > 1.1:
            raise ValueError("populations outside [-0.1, 1.1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "populations", y)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class DecayFit:
    model: str
    T: float
    A: float
    B: float
    detuning_mhz: float = 0.0
    phase: float = 0.0
    sd: dict[str, float] = field(default_factory=dict)
    initial_cost: float = float("nan")
    cost: float = float("nan")
    nfev: int = 0
    flags: tuple[str, ...] = ()

    @property
    def residual_norm(self) -> float:
        return math.sqrt(2.0 * self.cost)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        env = self.A * np.exp(-t / self.T)
        if self.detuning_mhz or self.phase:
            env = env * np.cos(2 * np.pi * self.detuning_mhz * t + self.phase)
        return env + self.B


def noise_floor(y: np.ndarray) -> float:
    """Robust noise SD from second differences (insensitive to smooth trends)."""
    d2 = np.diff(np.asarray(y, dtype=float), 2)
    if d2.size == 0:
        return 0.0
    return float(np.median(np.abs(d2)) / (0.6745 * math.sqrt(6.0)))


# models are parametrized by the decay rate so that trial steps through
# zero stay finite; T = 1 / rate is reported

def _exp_model(p, t):
    a, rate, b = p
    return a * np.exp(-rate * t) + b


def _cos_model(p, t):
    a, rate, delta, phi, b = p
    return a * np.exp(-rate * t) * np.cos(2 * np.pi * delta * t + phi) + b


def _lsq(model, p0, t, y, trace):
    def resid(p):
        with np.errstate(over="ignore", invalid="ignore"):
            r = model(p, t) - y
        if not np.all(np.isfinite(r)):
            r = np.full_like(y, 1e150)
        trace.append(float(0.5 * r @ r))
        return r

    r0 = model(np.asarray(p0, float), t) - y
    init_cost = float(0.5 * r0 @ r0)
    try:
        res = optimize.least_squares(
            resid, p0, method="lm", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
            max_nfev=4000,
        )
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"least squares failed: {exc}", trace) from exc
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(f"least squares did not converge: {res.message}", trace)
    return res, init_cost


def _param_sd(res, n: int) -> np.ndarray:
    """Parameter SDs; the rate entry (index 1) is converted to an SD of T."""
    J = res.jac
    dof = n - J.shape[1]
    if dof <= 0:
        return np.full(J.shape[1], np.nan)
    s2 = 2.0 * res.cost / dof
    try:
        cov = np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return np.full(J.shape[1], np.nan)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sd[1] = sd[1] / res.x[1] ** 2
    return sd


def _exp_init(t, y):
    ptp = float(np.ptp(y))
    k = max(1, len(y) // 8)
    sign = 1.0 if y[:k].mean() >= y[-k:].mean() else -1.0
    b0 = float(y.min() - 0.02 * ptp) if sign > 0 else float(y.max() + 0.02 * ptp)
    z = sign * (y - b0)
    ok = z > 0.05 * ptp
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(t[ok], np.log(z[ok]), 1)
    else:
        slope, icpt = 0.0, math.log(max(ptp, 1e-300))
    span = float(t[-1] - t[0])
    tau0 = -1.0 / slope if slope < 0 else span
    tau0 = float(np.clip(tau0, span / 100, 100 * span))
    return [sign * math.exp(icpt), 1.0 / tau0, b0]


def fit_exponential_decay(series: DecaySeries, model: str = "T1") -> DecayFit:
    """Fit ``A exp(-t/T) + B``; used for T1 and spin-echo traces.

    Raises
    ------
    NoDecayError
        When the dynamic range of the series does not exceed its noise floor.
    FitError
        On non-convergence (carries the cost trace) or a non-positive T.
    """
    if model not in ("T1", "Echo"):
        raise ValueError(f"exponential model must be T1 or Echo, got {model!r}")
    t, y = series.times, series.populations
    ptp = float(np.ptp(y))
    floor = noise_floor(y)
    if ptp <= max(4.0 * floor, 1e-12):
        raise NoDecayError(f"no decay resolvable: range {ptp:.3g} vs noise floor {floor:.3g}")
    trace: list[float] = []
    p0 = _exp_init(t, y)
    res, init_cost = _lsq(_exp_model, p0, t, y, trace)
    a, rate, b = res.x
    if not rate > 0:
        raise FitError(f"fitted decay rate {rate:.3g} is not positive", trace)
    tau = 1.0 / rate
    sd = _param_sd(res, len(t))
    return DecayFit(
        model=model, T=float(tau), A=float(a), B=float(b),
        sd={"T": float(sd[1]), "A": float(sd[0]), "B": float(sd[2])},
        initial_cost=init_cost, cost=float(res.cost), nfev=int(res.nfev),
    )


def dominant_frequency(t: np.ndarray, y: np.ndarray, f_min: float = 0.0) -> float:
    """Peak of the zero-padded DFT of ``y - mean(y)`` resampled on a uniform grid."""
    n = t.size
    tu = np.linspace(t[0], t[-1], n)
    yu = np.interp(tu, t, y) - np.mean(y)
    dt = tu[1] - tu[0]
    nfft = 16 * n
    spec = np.abs(np.fft.rfft(yu, nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    ok = freqs >= f_min
    if not ok.any():
        return 0.0
    return float(freqs[ok][np.argmax(spec[ok])])


def _normalize_cos(p):
    a, rate, delta, phi, b = (float(v) for v in p)
    tau = 1.0 / rate
    if delta < 0:
        delta, phi = -delta, -phi
    if a < 0:
        a, phi = -a, phi + math.pi
    phi = (phi + math.pi) % (2 * math.pi) - math.pi
    return a, tau, delta, phi, b


def fit_ramsey(series: DecaySeries, significance: float = 1e-3) -> DecayFit:
    """Fit a damped cosine; falls back to an exponential when no oscillation.

    The detuning starts at the dominant DFT peak above one period per span.
    An oscillation counts as detected when the damped cosine beats the plain
    exponential by an F-test at ``significance`` and completes at least one
    period over the record. Otherwise the exponential fit is returned with
    the ``"no_oscillation"`` flag.
    """
    t, y = series.times, series.populations
    if t.size < 8:
        raise ValueError(f"Ramsey fit needs at least 8 points, got {t.size}")
    n = t.size
    span = float(t[-1] - t[0])
    ptp = float(np.ptp(y))
    trace: list[float] = []

    try:
        exp_fit = fit_exponential_decay(series, "T1")
    except FitError:
        exp_fit = None

    delta0 = dominant_frequency(t, y, f_min=1.0 / span)
    b0 = float(np.mean(y))
    best = None
    for phi0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        p0 = [ptp / 2, 2.0 / span, delta0, phi0, b0]
        try:
            res, init_cost = _lsq(_cos_model, p0, t, y, trace)
        except FitError:
            continue
        if res.x[1] > 0 and (best is None or res.cost < best[0].cost):
            best = (res, init_cost)

    cos_ok = best is not None
    if cos_ok:
        res, init_cost = best
        a, tau, delta, phi, b = _normalize_cos(res.x)
        rss_c = 2.0 * res.cost
        cos_ok = delta * span >= 1.0
        if exp_fit is not None and cos_ok:
            rss_e = 2.0 * exp_fit.cost
            if rss_e <= n * (1e-9 * ptp) ** 2:
                cos_ok = False
            elif rss_c > 0:
                fstat = ((rss_e - rss_c) / 2.0) / (rss_c / (n - 5))
                cos_ok = fstat > sstats.f.ppf(1 - significance, 2, n - 5)

    if not cos_ok:
        if exp_fit is None:
            raise FitError("neither a damped cosine nor an exponential fits the series", trace)
        return DecayFit(
            model="Ramsey", T=exp_fit.T, A=exp_fit.A, B=exp_fit.B, sd=dict(exp_fit.sd),
            initial_cost=exp_fit.initial_cost, cost=exp_fit.cost, nfev=exp_fit.nfev,
            flags=("no_oscillation",),
        )
    sd = _param_sd(res, n)
    return DecayFit(
        model="Ramsey", T=tau, A=a, B=b, detuning_mhz=delta, phase=phi,
        sd={"A": float(sd[0]), "T": float(sd[1]), "detuning_mhz": float(sd[2]),
            "phase": float(sd[3]), "B": float(sd[4])},
        initial_cost=init_cost, cost=float(res.cost), nfev=int(res.nfev),
    )


def synthetic_series(kind: str, T: float, times, A: float = 1.0, B: float = 0.0,
                     detuning_mhz: float = 0.0, phase: float = 0.0, noise: float = 0.0,
                     seed: int | np.random.Generator = 0, label: str = "") -> DecaySeries:
    """Model trace with additive Gaussian noise of SD ``noise``, clipped to the valid range."""
    if kind not in MODELS:
        raise ValueError(f"unknown trace kind {kind!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t = np.asarray(times, dtype=float)
    y = A * np.exp(-t / T)
    if kind == "Ramsey":
        y = y * np.cos(2 * np.pi * detuning_mhz * t + phase)
    y = y + B + noise * rng.standard_normal(t.size)
    return DecaySeries(t, np.clip(y, -0.1, 1.1), label)


def fit_series(series: DecaySeries, kind: str) -> DecayFit:
    if kind == "Ramsey":
        return fit_ramsey(series)
    if kind in ("T1", "Echo"):
        return fit_exponential_decay(series, kind)
    raise ValueError(f"unknown trace kind {kind!r}; expected one of {MODELS}")


def dephasing_advisory(t1: DecayFit, t2: DecayFit) -> str | None:
    """Message when a paired T2 exceeds 2*T1 (unphysical for pure decay)."""
    if t2.T > 2.0 * t1.T:
        return f"T2 ({t2.T:.3g} us) exceeds 2*T1 ({2 * t1.T:.3g} us)"
    return None


# ---------------------------------------------------------------------------
# sample statistics

@dataclass(frozen=True)
class SampleStats:
    n: int
    mean: float
    sd: float
    q1: float
    median: float
    q3: float

    @property
    def rsd(self) -> float:
        return self.sd / self.mean if self.mean else float("nan")


def sample_stats(samples) -> SampleStats:
    """Mean, SD (n - 1), and quartiles by linear interpolation of order statistics."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    sd = float(x.std(ddof=1)) if x.size > 1 else float("nan")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return SampleStats(int(x.size), float(x.mean()), sd, float(q1), float(med), float(q3))


@dataclass(frozen=True, eq=False)
class DensityCurve:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(integrate.trapezoid(self.density, self.x))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("automatic bandwidth needs at least 2 samples")
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kde(samples, bandwidth: float | None = None, grid=None, n_grid: int = 512,
        cut: float = 5.0) -> DensityCurve:
    """Gaussian kernel density on a regular grid (Silverman bandwidth by default)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(x.min() - cut * h, x.max() + cut * h, n_grid)
    grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return DensityCurve(grid, dens, h)
