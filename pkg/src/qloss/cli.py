"""Command-line entry point: ``qloss <command> [options]``.

Every command runs the pipeline with a subset of stages. Options given on
the command line override values from ``--config``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import StageError
from .pipeline import PipelineConfig, RunReport, run_pipeline

EXIT_STAGE_ERROR = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", help="output directory (default qloss-out)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def _loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--devices", help="device table (default: bundled table)")
    p.add_argument("--exclude-device", action="append", metavar="NAME", help="leave a device out (repeatable)")
    p.add_argument("--pma-source", choices=("paper", "computed"),
                   help="p_MA from the bundled reference table or from the field solver")
    p.add_argument("--weighted", action="store_true", default=None, help="weighted least squares")
    p.add_argument("--include-resonators", action="store_true", default=None)
    p.add_argument("--f-ref", type=float, dest="f_ref_ghz", help="reference frequency in GHz (default 3)")


def _mesh_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", action="append", dest="geometries", metavar="DESIGN_OR_PATH",
                   help="bundled design name (RES, XM1, XM2, TM) or geometry config file")
    p.add_argument("--min-cell-nm", type=float)
    p.add_argument("--grading-ratio", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-participation", help="participation ratios of cross-sections")
    _common(p)
    _mesh_flags(p)

    p = sub.add_parser("fit-loss", help="1/Q versus p_MA regression and junction-limited T1")
    _common(p)
    _loss_flags(p)
    _mesh_flags(p)

    p = sub.add_parser("fit-coherence", help="fit T1/Ramsey/echo traces listed in a manifest")
    _common(p)
    p.add_argument("--manifest", dest="traces", help="manifest with columns label,kind,file[,device]")

    p = sub.add_parser("rb-analyze", help="fit a randomized benchmarking data file")
    _common(p)
    p.add_argument("--data", dest="rb_data", help="table with columns length,mean_fidelity,sd")

    p = sub.add_parser("rb-simulate", help="simulate randomized benchmarking with T1/T2 decoherence")
    _common(p)
    p.add_argument("--t1", type=float, help="T1 in us")
    p.add_argument("--t2", type=float, help="T2 in us")
    p.add_argument("--tg", type=float, help="gate time in ns")
    p.add_argument("--seeds", type=int, help="random sequences per length")
    p.add_argument("--lengths", type=lambda s: [int(x) for x in s.split(",")],
                   help="comma-separated sequence lengths")

    p = sub.add_parser("jj-rsd", help="junction resistance spread versus area")
    _common(p)
    p.add_argument("--data", dest="jj_data", help="table with columns area_um2,resistance_ohm,group_label")

    p = sub.add_parser("run-all", help="all stages; coherence runs when a manifest is configured")
    _common(p)
    _loss_flags(p)
    _mesh_flags(p)
    p.add_argument("--manifest", dest="traces")
    p.add_argument("--rb-data", dest="rb_data")
    p.add_argument("--jj-data", dest="jj_data")
    return parser


_STAGES = {
    "simulate-participation": ["participation"],
    "fit-loss": ["loss"],
    "fit-coherence": ["coherence"],
    "rb-analyze": ["rb"],
    "rb-simulate": ["rb"],
    "jj-rsd": ["jj"],
}

_OVERRIDES = ("seed", "out", "geometries", "devices", "pma_source", "weighted", "include_resonators",
              "f_ref_ghz", "traces", "rb_data", "jj_data", "min_cell_nm", "grading_ratio")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    updates = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    if getattr(args, "exclude_device", None):
        updates["exclude_devices"] = sorted(set(cfg.exclude_devices) | set(args.exclude_device))
    if args.no_figures:
        updates["figures"] = False
    if args.command == "rb-simulate":
        sim = dict(cfg.rb_simulation)
        for arg, key in (("t1", "T1_us"), ("t2", "T2_us"), ("tg", "tg_ns"), ("seeds", "seeds"),
                         ("lengths", "lengths")):
            if getattr(args, arg) is not None:
                sim[key] = getattr(args, arg)
        updates["rb_simulation"] = sim
        updates["rb_data"] = None
    if args.command == "rb-analyze" and not (updates.get("rb_data") or cfg.rb_data):
        raise StageError("config", "missing input: rb-analyze needs --data")
    if args.command == "fit-coherence" and not (updates.get("traces") or cfg.traces):
        raise StageError("config", "missing input: fit-coherence needs --manifest")
    if args.command in _STAGES:
        stages = _STAGES[args.command]
    else:
        stages = list(cfg.stages)
        if not (updates.get("traces") or cfg.traces):
            stages = [s for s in stages if s != "coherence"]
    updates["stages"] = stages
    try:
        return replace(cfg, **updates)
    except ValueError as exc:
        raise StageError("config", str(exc)) from None


def _summary(report: RunReport) -> list[str]:
    lines = []
    st = report.stages
    for name, res in st.get("participation", {}).items():
        d = res["direct"]
        lines.append(f"participation {name}: substrate={d['substrate']:.4f} MA={d['MA']:.3e} SA={d['SA']:.3e}")
    if "loss" in st:
        lo = st["loss"]
        jl = lo["junction_limit"]
        lines.append(f"loss: slope={lo['slope']:.4g} intercept={lo['intercept']:.3e} +/- {lo['intercept_halfwidth']:.2e}")
        if jl["resolved"]:
            lines.append(f"junction-limited T1 at {jl['f_ref_ghz']:g} GHz: {jl['t1_us']:.1f} us "
                         f"(95% {jl['t1_low_us']:.1f} to {jl['t1_high_us']:.1f})")
        else:
            lines.append(f"junction-limited T1: {jl['reason']}")
    if "coherence" in st:
        c = st["coherence"]
        lines.append(f"coherence: {c['n_fits']} fits from {c['n_traces']} traces")
    if "rb" in st:
        r = st["rb"]
        line = f"rb: p={r['p']:.6f} r_g={r['r_g']:.4e} F1q={100 * r['f1q']:.4f}%"
        if "coherence_limit_f1q" in r:
            line += f" (coherence limit {100 * r['coherence_limit_f1q']:.4f}%)"
        lines.append(line)
    if "jj" in st:
        j = st["jj"]
        lines.append(f"jj: a={j['a']:.3e} gamma={j['gamma']:.3f} b={j['b']:.3e}")
    for w in report.warnings:
        lines.append(f"warning [{w['stage']}] {w['record']}: {w['message']}")
    return lines


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_pipeline(cfg)
    except StageError as exc:
        print(f"error [{exc.stage}]: {str(exc).split('] ', 1)[-1]}", file=sys.stderr)
        return EXIT_STAGE_ERROR
    for line in _summary(report):
        print(line)
    print(f"report: {cfg.out}/report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
