"""End-to-end analysis runs: configuration, stages and the run report.

A run executes the selected stages in a fixed order, writes plot-ready
tables (and optional PNG figures) to the output directory, and records
everything in ``report.json``. Reports carry no timestamps, so the same
inputs and seed give identical report bytes.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import io as qio
from .coherence import DecayFit, dephasing_advisory, fit_series, kde, sample_stats
from .errors import FitError, StageError
from .geometry import BUNDLED_DESIGNS, GeometryConfig, bundled_geometry, load_geometry_config
from .jjstats import fit_arrays, synthetic_arrays
from .lossbudget import fit_loss_line, junction_limited_t1, loss_points
from .participation import simulate_participation
from .rb import NoiseParams, coherence_limit_fidelity, fit_rb_decay, simulate_rb

STAGES = ("participation", "loss", "coherence", "rb", "jj")

# Synthetic junction model used when no junction data file is given: RSD
# falls from about 5% at 0.03 um^2 to about 2% at 0.125 um^2.
JJ_SYNTHETIC = {"a": 2.63e-5, "gamma": 1.3, "b": 0.0,
                "areas": [0.03, 0.045, 0.06, 0.075, 0.09, 0.1, 0.11, 0.125], "n_per_area": 30}

RB_SIMULATION = {"T1_us": 50.0, "T2_us": 60.0, "tg_ns": 50.0, "seeds": 80,
                 "lengths": [1, 10, 25, 50, 100, 200, 400, 700, 1000, 1500, 2000]}


@dataclass
class PipelineConfig:
    """Run configuration; every field can be set from a JSON object."""

    stages: list[str] = field(default_factory=lambda: list(STAGES))
    out: str = "qloss-out"
    seed: int = 0
    geometries: list[str] = field(default_factory=lambda: list(BUNDLED_DESIGNS))
    devices: str | None = None
    exclude_devices: list[str] = field(default_factory=list)
    pma_source: str = "paper"
    weighted: bool = False
    include_resonators: bool = False
    f_ref_ghz: float = 3.0
    traces: str | None = None
    rb_data: str | None = None
    rb_simulation: dict[str, Any] = field(default_factory=lambda: dict(RB_SIMULATION))
    jj_data: str | None = None
    jj_synthetic: dict[str, Any] = field(default_factory=lambda: dict(JJ_SYNTHETIC))
    min_cell_nm: float = 1.0
    grading_ratio: float = 1.2
    solver_tolerance: float = 1e-10
    figures: bool = True

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ValueError(f"unknown stage(s) {bad}; choose from {STAGES}")
        if self.pma_source not in ("paper", "computed"):
            raise ValueError("pma_source must be 'paper' or 'computed'")

    @classmethod
    def from_dict(cls, data: dict[str, Any], base: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        cfg = cls(**data)
        if base is not None:
            for key in ("devices", "traces", "rb_data", "jj_data"):
                v = getattr(cfg, key)
                if v is not None and not Path(v).is_absolute():
                    setattr(cfg, key, str(base / v))
            cfg.geometries = [g if g in BUNDLED_DESIGNS or Path(g).is_absolute() else str(base / g)
                              for g in cfg.geometries]
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise StageError("config", f"missing input: config file {path}") from None
        except json.JSONDecodeError as exc:
            raise StageError("config", f"{path}: invalid JSON: {exc}") from None
        try:
            return cls.from_dict(data, path.parent)
        except (TypeError, ValueError) as exc:
            raise StageError("config", f"{path}: {exc}") from None


def _clean(x):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass
class RunReport:
    config: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)
    stages: dict[str, Any] = field(default_factory=dict)
    warnings: list[dict[str, str]] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    failed_stage: str | None = None
    versions: dict[str, str] = field(default_factory=dict)

    def warn(self, stage: str, record: str, message: str) -> None:
        self.warnings.append({"stage": stage, "record": record, "message": message})

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _versions() -> dict[str, str]:
    import scipy

    return {"qloss": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class _Run:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        cfg_dict = asdict(cfg)
        cfg_dict.pop("out")
        self.report = RunReport(config=cfg_dict, versions=_versions())
        self.participation: dict[str, Any] = {}
        self.loss_fit = None

    # -- helpers -----------------------------------------------------------
    def input(self, label: str, path: str | Path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise StageError("config", f"missing input: {label} {p}")
        self.report.inputs[f"{label}:{p.name}"] = qio.file_digest(p)
        return p

    def table(self, name: str, header, rows, comments=()) -> None:
        qio.write_table(self.out / name, header, rows, comments=comments)
        self.report.outputs.append(name)

    def figure(self, name: str, draw: Callable, *args) -> None:
        if not self.cfg.figures:
            return
        draw(self.out / name, *args)
        self.report.outputs.append(name)

    def geometry_configs(self) -> list[GeometryConfig]:
        out = []
        for g in self.cfg.geometries:
            if g in BUNDLED_DESIGNS:
                out.append(bundled_geometry(g))
            else:
                out.append(load_geometry_config(self.input("geometry", g)))
        return out

    def devices(self):
        if self.cfg.devices is None:
            path = qio.bundled_path("devices.csv")
            self.report.inputs["devices:bundled"] = qio.file_digest(path)
            return qio.ingest_devices(path)
        return qio.ingest_devices(self.input("devices", self.cfg.devices))

    def validate_inputs(self) -> None:
        for label in ("devices", "traces", "rb_data", "jj_data"):
            v = getattr(self.cfg, label)
            if v is not None:
                self.input(label, v)
        if "coherence" in self.cfg.stages and self.cfg.traces is None:
            raise StageError("config", "missing input: coherence stage needs a trace manifest")

    # -- stages ------------------------------------------------------------
    def stage_participation(self) -> dict:
        from .plotting import participation_figure

        res, rows = {}, []
        for gc in self.geometry_configs():
            run = simulate_participation(gc, self.cfg.min_cell_nm, self.cfg.grading_ratio,
                                         self.cfg.solver_tolerance)
            self.participation[gc.name] = run
            res[gc.name] = {
                "G_um": gc.G_um, "W_um": gc.W_um, "calibration_default": gc.calibration_default,
                "direct": run.direct.ratios, "surface_approximation": run.surface.ratios,
                "sum_direct": sum(run.direct.ratios.values()),
                "cells": run.n_cells, "residual": run.residual,
                "surface_vs_direct_MA": run.relative_difference("MA"),
                "surface_vs_direct_SA": run.relative_difference("SA"),
            }
            for rep in (run.direct, run.surface):
                rows += [(r["geometry"], r["method"], r["region"], r["participation"]) for r in rep.as_rows()]
            if gc.calibration_default:
                self.report.warn("participation", gc.name, "conductor width is a calibration default")
        self.table("participation.csv", ("geometry", "method", "region", "participation"), rows)
        self.figure("participation.png", participation_figure, res)
        return res

    def stage_loss(self) -> dict:
        from .plotting import loss_figure

        cfg = self.cfg
        devices = self.devices()
        names = {d.name for d in devices}
        for x in cfg.exclude_devices:
            if x not in names:
                raise StageError("loss", f"excluded device {x!r} is not in the device table")
            self.report.warn("loss", x, "excluded from the fit by request")
        if cfg.pma_source == "paper":
            p_ma = qio.reference_p_ma()
        else:
            needed = sorted({d.design for d in devices})
            missing = [n for n in needed if n not in self.participation]
            for n in missing:
                self.participation[n] = simulate_participation(
                    bundled_geometry(n), cfg.min_cell_nm, cfg.grading_ratio, cfg.solver_tolerance)
            p_ma = {n: self.participation[n].direct["MA"] for n in needed}
        pts = loss_points(devices, p_ma, cfg.exclude_devices)
        fit = fit_loss_line(pts, include_resonators=cfg.include_resonators, weighted=cfg.weighted)
        jl = junction_limited_t1(fit, cfg.f_ref_ghz)
        if not jl.resolved:
            self.report.warn("loss", "intercept", jl.reason)
        design = {d.name: d.design for d in devices}
        pgrid = np.linspace(0.0, 1.1 * max(p.p_ma for p in pts), 201)
        y, lo, hi = fit.band(pgrid)
        for p in pts:
            if p.is_resonator and not cfg.include_resonators:
                yp, lp, hp = fit.band([p.p_ma])
                if not lp[0] <= p.inverse_q <= hp[0]:
                    self.report.warn("loss", p.name, "resonator 1/Q lies outside the 95% band of the qubit fit")
        self.table("loss_points.csv", ("name", "design", "p_ma", "inverse_q", "sigma_inverse_q", "is_resonator"),
                   [(p.name, design[p.name], p.p_ma, p.inverse_q, p.weight ** -0.5, p.is_resonator) for p in pts])
        self.table("loss_fit.csv", ("p_ma", "inverse_q_fit", "band_lower", "band_upper"),
                   zip(pgrid.tolist(), y.tolist(), lo.tolist(), hi.tolist()),
                   comments=("fitted line with 95% confidence band of the mean response",))
        self.figure("loss_vs_pma.png", loss_figure, pts, pgrid, (y, lo, hi))
        self.loss_fit = fit
        return {
            "pma_source": cfg.pma_source, "p_ma": p_ma, "weighted": cfg.weighted,
            "n_points": len([p for p in pts if cfg.include_resonators or not p.is_resonator]),
            "slope": fit.slope, "slope_halfwidth": fit.slope_halfwidth,
            "intercept": fit.intercept, "intercept_halfwidth": fit.intercept_halfwidth,
            "dof": fit.dof,
            "junction_limit": {
                "resolved": jl.resolved, "f_ref_ghz": jl.f_ref_ghz, "t1_us": jl.t1_us,
                "t1_halfwidth_us": jl.t1_halfwidth_us, "t1_low_us": jl.t1_low_us,
                "t1_high_us": jl.t1_high_us, "reason": jl.reason,
            },
        }

    def stage_coherence(self) -> dict:
        from .plotting import t1_distribution_figure

        entries = qio.ingest_traces(self.input("traces", self.cfg.traces))
        fits: list[tuple[Any, DecayFit]] = []
        rows = []
        for e in entries:
            try:
                f = fit_series(e.series, e.kind)
            except FitError as exc:
                self.report.warn("coherence", e.label, f"fit failed: {exc}")
                continue
            if "no_oscillation" in f.flags:
                self.report.warn("coherence", e.label, "no oscillation resolved; exponential envelope reported")
            fits.append((e, f))
            rows.append((e.label, e.device, e.kind, f.model, f.T, f.sd.get("T", float("nan")), f.A, f.B,
                         f.detuning_mhz, f.phase, ";".join(f.flags)))
        self.table("coherence_fits.csv",
                   ("label", "device", "kind", "model", "T_us", "T_sd_us", "A", "B", "detuning_mhz",
                    "phase", "flags"), rows)
        groups: dict[str, dict[str, list[float]]] = {}
        for e, f in fits:
            groups.setdefault(e.device, {}).setdefault(e.kind, []).append(f.T)
        summary, kde_rows, q_rows = {}, [], []
        curves = {}
        for dev in sorted(groups):
            g = groups[dev]
            summary[dev] = {}
            for kind in sorted(g):
                st = sample_stats(g[kind])
                summary[dev][kind] = asdict(st)
                if kind == "T1":
                    q_rows.append((dev, st.n, st.mean, st.sd, st.q1, st.median, st.q3))
                    if st.n >= 3 and st.sd > 0:
                        c = kde(g[kind])
                        curves[dev] = (c, st)
                        kde_rows += [(dev, x, d) for x, d in zip(c.x.tolist(), c.density.tolist())]
            if "T1" in g:
                t1 = float(np.mean(g["T1"]))
                for kind in ("Ramsey", "Echo"):
                    if kind in g:
                        t2 = float(np.mean(g[kind]))
                        msg = dephasing_advisory(DecayFit("T1", t1, 1, 0), DecayFit(kind, t2, 1, 0))
                        if msg:
                            self.report.warn("coherence", dev, msg)
        self.table("t1_quartiles.csv", ("device", "n", "mean_us", "sd_us", "q1_us", "median_us", "q3_us"), q_rows)
        self.table("t1_kde.csv", ("device", "t1_us", "density"), kde_rows)
        if curves:
            self.figure("t1_distribution.png", t1_distribution_figure, curves)
        return {"n_traces": len(entries), "n_fits": len(fits), "summary": summary}

    def stage_rb(self) -> dict:
        from .plotting import rb_figure

        cfg = self.cfg
        out: dict[str, Any] = {}
        if cfg.rb_data is not None:
            data = qio.read_rb_data(self.input("rb_data", cfg.rb_data))
            out["source"] = "file"
        else:
            sim = {**RB_SIMULATION, **cfg.rb_simulation}
            noise = NoiseParams(sim["T1_us"], sim["T2_us"], sim["tg_ns"])
            data = simulate_rb(sim["lengths"], int(sim["seeds"]), noise, base_seed=cfg.seed)
            limit = coherence_limit_fidelity(noise)
            out.update(source="simulation", simulation=sim, coherence_limit_f1q=limit)
        weighted = data.sds is not None and bool(np.all(data.sds > 0))
        fit = fit_rb_decay(data, weighted=weighted)
        out.update(A=fit.A, p=fit.p, B=fit.B, sd=fit.sd, r_clifford=fit.r_clifford, r_g=fit.r_g,
                   r_g_sd=fit.r_g_sd, f1q=fit.f1q, weighted=weighted)
        if "coherence_limit_f1q" in out:
            out["f1q_minus_limit_in_sd"] = (fit.f1q - out["coherence_limit_f1q"]) / fit.r_g_sd
        self.table("rb_points.csv", ("length", "mean_fidelity", "sd", "fit"),
                   zip(data.lengths.tolist(), data.fidelities.tolist(),
                       (data.sds if data.sds is not None else np.zeros(len(data.lengths))).tolist(),
                       fit.evaluate(data.lengths).tolist()))
        self.figure("rb_decay.png", rb_figure, data, fit)
        return out

    def stage_jj(self) -> dict:
        from .plotting import jj_figure

        cfg = self.cfg
        if cfg.jj_data is not None:
            arrays = qio.read_jj_data(self.input("jj_data", cfg.jj_data))
            source = "file"
        else:
            s = {**JJ_SYNTHETIC, **cfg.jj_synthetic}
            arrays = synthetic_arrays(s["areas"], s["a"], s["gamma"], s["b"], int(s["n_per_area"]), seed=cfg.seed)
            source = "synthetic"
            self.report.warn("jj", "jj_data", "no junction data given; synthetic arrays from the model were used")
        for j in arrays:
            if len(j.resistances) < 30:
                self.report.warn("jj", j.label or f"{j.area}", f"only {len(j.resistances)} junctions (< 30)")
        fit = fit_arrays(arrays)
        self.table("jj_rsd.csv", ("group_label", "area_um2", "n", "rsd", "model_rsd"),
                   [(j.label, j.area, len(j.resistances), j.rsd, float(fit.rsd(j.area))) for j in arrays])
        self.figure("jj_rsd.png", jj_figure, arrays, fit)
        return {"source": source, "a": fit.a, "gamma": fit.gamma, "b": fit.b, "sd": fit.sd,
                "gamma_determined": fit.gamma_determined, "n_arrays": len(arrays)}


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Run the configured stages and write ``report.json`` plus tables.

    Raises :class:`StageError` naming the failing stage; the partial report
    is still written and attached to the exception.
    """
    run = _Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    stage = "config"
    try:
        run.validate_inputs()
        for stage in STAGES:
            if stage in cfg.stages:
                run.report.stages[stage] = getattr(run, f"stage_{stage}")()
    except Exception as exc:
        failed = exc.stage if isinstance(exc, StageError) else stage
        msg = str(exc) if not isinstance(exc, StageError) else str(exc).split("] ", 1)[-1]
        run.report.failed_stage = failed
        run.report.warn(failed, "-", msg)
        _write_report(run)
        raise StageError(failed, msg, json.loads(run.report.to_json())) from exc
    _write_report(run)
    return run.report


def _write_report(run: _Run) -> None:
    run.report.outputs.append("report.json")
    run.report.outputs.sort()
    (run.out / "report.json").write_text(run.report.to_json(), encoding="utf-8")
