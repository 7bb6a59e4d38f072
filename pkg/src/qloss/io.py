"""Reading and writing the delimiter-separated input and output tables.

All tables have a header row. Lines starting with ``#`` are comments.
Errors name the file, the 1-based line number and the column involved.
"""

from __future__ import annotations

import csv
import hashlib
import io
from collections import OrderedDict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .coherence import MODELS, DecaySeries
from .errors import IngestError
from .jjstats import JJArray
from .lossbudget import QubitDevice
from .rb import RBDataset

DEVICE_COLUMNS = ("name", "geometry", "etch", "resistivity", "t1_mean_us", "t1_sd_us",
                  "freq_ghz", "junction_area_um2", "count")
DEVICE_OPTIONAL = ("die", "span_days", "junction_area_measured")


def _rows(path: Path, delimiter: str = ",") -> Iterator[tuple[int, list[str]]]:
    """Yield (line number, fields) for non-comment, non-blank lines."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IngestError(f"{path}: file not found") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, next(csv.reader([line], delimiter=delimiter))


def read_table(path: str | Path, required: Sequence[str] = (),
               delimiter: str = ",") -> list[tuple[int, dict[str, str]]]:
    path = Path(path)
    rows = _rows(path, delimiter)
    try:
        _, header = next(rows)
    except StopIteration:
        raise IngestError(f"{path}: no header row") from None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(f"{path}: missing required column(s) {', '.join(missing)}")
    out = []
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise IngestError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(fields)}")
        out.append((lineno, {h: f.strip() for h, f in zip(header, fields)}))
    return out


def _number(path, lineno, col, text, kind=float, optional=False):
    if optional and text == "":
        return None
    try:
        return kind(text)
    except ValueError:
        raise IngestError(f"{path}: row {lineno}, column {col!r}: non-numeric value {text!r}") from None


def ingest_devices(path: str | Path) -> list[QubitDevice]:
    """Validated device records from a device table."""
    path = Path(path)
    devices: list[QubitDevice] = []
    seen: dict[str, int] = {}
    for lineno, r in read_table(path, DEVICE_COLUMNS):
        name = r["name"]
        if name in seen:
            raise IngestError(f"{path}: row {lineno}, column 'name': duplicate name {name!r} "
                              f"(first at row {seen[name]})")
        seen[name] = lineno
        n = lambda col, kind=float, optional=False: _number(path, lineno, col, r[col], kind, optional)  # noqa: E731
        try:
            dev = QubitDevice(
                name=name,
                design=r["geometry"],
                etch=r["etch"],
                resistivity=r["resistivity"],
                t1_mean=n("t1_mean_us"),
                t1_sd=n("t1_sd_us"),
                frequency=n("freq_ghz"),
                junction_area=n("junction_area_um2", optional=True),
                measurement_count=n("count", int),
                die=r.get("die", ""),
                span_days=_number(path, lineno, "span_days", r.get("span_days", ""), float, True),
                junction_area_measured=r.get("junction_area_measured", "false").lower() == "true",
            )
        except ValueError as exc:
            if isinstance(exc, IngestError):
                raise
            raise IngestError(f"{path}: row {lineno} ({name}): {exc}") from None
        devices.append(dev)
    return devices


def _fmt(x) -> str:
    if isinstance(x, np.generic):
        x = x.item()
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_devices(devices: Iterable[QubitDevice], path: str | Path) -> None:
    """Write a device table that :func:`ingest_devices` reads back identically."""
    header = ("name", "die", "geometry", "etch", "resistivity", "t1_mean_us", "t1_sd_us", "freq_ghz",
              "span_days", "count", "junction_area_um2", "junction_area_measured")
    rows = [(d.name, d.die, d.design, d.etch, d.resistivity, d.t1_mean, d.t1_sd, d.frequency,
             d.span_days, d.measurement_count, d.junction_area, d.junction_area_measured)
            for d in devices]
    write_table(path, header, rows)


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",",
                comments: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("qloss.data").joinpath(name)))


def bundled_devices() -> list[QubitDevice]:
    return ingest_devices(bundled_path("devices.csv"))


def reference_participation() -> dict[str, dict[str, float]]:
    """Published participation ratios per design, keyed by region."""
    path = bundled_path("participation_reference.csv")
    out = {}
    for lineno, r in read_table(path, ("design", "G_um", "substrate", "air", "MA", "SA")):
        out[r["design"]] = {k: _number(path, lineno, k, r[k]) for k in ("G_um", "substrate", "air", "MA", "SA")}
    return out


def reference_p_ma() -> dict[str, float]:
    return {k: v["MA"] for k, v in reference_participation().items()}


# ---------------------------------------------------------------------------
# traces

def read_columns(path: str | Path, min_columns: int = 2, delimiter: str = ",") -> tuple[list[str], np.ndarray]:
    """Numeric columns of a table; the first column is the independent variable."""
    path = Path(path)
    table = read_table(path, delimiter=delimiter)
    try:
        _, header = next(_rows(path, delimiter))
    except StopIteration:
        raise IngestError(f"{path}: no header row") from None
    if len(header) < min_columns:
        raise IngestError(f"{path}: need at least {min_columns} columns, found {len(header)}")
    header = [h.strip() for h in header]
    data = np.array([[_number(path, ln, h, r[h]) for h in header] for ln, r in table], dtype=float)
    return header, data.reshape(-1, len(header))


def read_decay_file(path: str | Path, label: str = "") -> DecaySeries:
    """Two-column trace: time in microseconds, excited-state population."""
    _, data = read_columns(path, 2)
    t, y = data[:, 0], data[:, 1]
    if not np.all(np.diff(t) > 0):
        raise IngestError(f"{path}: time column is not strictly increasing")
    try:
        return DecaySeries(t, y, label or Path(path).stem)
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class TraceEntry:
    label: str
    kind: str
    series: DecaySeries
    device: str = ""


def ingest_traces(manifest: str | Path) -> list[TraceEntry]:
    """Series listed in a manifest with columns ``label, kind, file``.

    An optional ``device`` column groups traces (default: the label).
    Relative file paths are resolved against the manifest's directory.
    """
    manifest = Path(manifest)
    out = []
    for lineno, r in read_table(manifest, ("label", "kind", "file")):
        if r["kind"] not in MODELS:
            raise IngestError(f"{manifest}: row {lineno}, column 'kind': {r['kind']!r} not in {MODELS}")
        f = Path(r["file"])
        if not f.is_absolute():
            f = manifest.parent / f
        out.append(TraceEntry(r["label"], r["kind"], read_decay_file(f, r["label"]),
                              r.get("device") or r["label"]))
    return out


def write_manifest(entries: Iterable[tuple[str, str, str, str]], path: str | Path) -> None:
    """Rows of (label, kind, file, device)."""
    write_table(path, ("label", "kind", "file", "device"), entries)


# ---------------------------------------------------------------------------
# RB and junction data

def read_rb_data(path: str | Path, repetitions: int = 80) -> RBDataset:
    """Columns: length, mean_fidelity, sd."""
    path = Path(path)
    rows = read_table(path, ("length", "mean_fidelity", "sd"))
    n = [_number(path, ln, "length", r["length"], int) for ln, r in rows]
    f = [_number(path, ln, "mean_fidelity", r["mean_fidelity"]) for ln, r in rows]
    s = [_number(path, ln, "sd", r["sd"]) for ln, r in rows]
    try:
        return RBDataset(np.array(n), np.array(f), np.array(s), repetitions)
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None


def write_rb_data(data: RBDataset, path: str | Path) -> None:
    sds = data.sds if data.sds is not None else np.zeros_like(data.fidelities)
    write_table(path, ("length", "mean_fidelity", "sd"),
                zip(data.lengths.tolist(), data.fidelities.tolist(), sds.tolist()))


def read_jj_data(path: str | Path) -> list[JJArray]:
    """Columns: area_um2, resistance_ohm, group_label. One array per (label, area)."""
    path = Path(path)
    groups: OrderedDict[tuple[str, float], list[float]] = OrderedDict()
    for ln, r in read_table(path, ("area_um2", "resistance_ohm", "group_label")):
        area = _number(path, ln, "area_um2", r["area_um2"])
        res = _number(path, ln, "resistance_ohm", r["resistance_ohm"])
        if not (area > 0 and res > 0):
            raise IngestError(f"{path}: row {ln}: area and resistance must be positive")
        groups.setdefault((r["group_label"], area), []).append(res)
    return [JJArray(area, tuple(rs), label) for (label, area), rs in groups.items()]


def write_jj_data(arrays: Iterable[JJArray], path: str | Path) -> None:
    write_table(path, ("area_um2", "resistance_ohm", "group_label"),
                ((j.area, r, j.label) for j in arrays for r in j.resistances))


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
