"""Parameterized 2D cross-sections of planar superconducting devices.

Coordinates are in micrometres: ``x`` runs across the chip, ``y`` is the
height above the substrate surface (substrate occupies ``y < 0``). Every
material is stored as a list of axis-aligned rectangles ``(x0, x1, y0, y1)``.
The regions and conductors of a :class:`CrossSection` tile its domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError

Rect = tuple[float, float, float, float]

EPS_SILICON = 11.9
EPS_SA = 3.9
EPS_MA = 5.0
METAL_THICKNESS_UM = 0.07
MA_THICKNESS_NM = 5.0
SA_THICKNESS_NM = 4.0
SUBSTRATE_DEPTH_UM = 200.0
AIR_HEIGHT_UM = 200.0
LATERAL_FACTOR = 10.0

_BREAK_TOL = 1e-9


@dataclass(frozen=True)
class DielectricRegion:
    name: str
    relative_permittivity: float
    extent: tuple[Rect, ...]

    def __post_init__(self):
        if not self.relative_permittivity > 0:
            raise GeometryError(f"region {self.name!r}: permittivity must be > 0")
        for r in self.extent:
            if not (r[1] > r[0] and r[3] > r[2]):
                raise GeometryError(f"region {self.name!r}: rectangle {r} has no area")

    @property
    def area(self) -> float:
        return sum((r[1] - r[0]) * (r[3] - r[2]) for r in self.extent)


@dataclass(frozen=True)
class Conductor:
    name: str
    potential: float
    extent: tuple[Rect, ...]
    thickness: float = METAL_THICKNESS_UM

    def __post_init__(self):
        for r in self.extent:
            if not (r[1] > r[0] and r[3] > r[2]):
                raise GeometryError(f"conductor {self.name!r}: rectangle {r} has no area")

    @property
    def area(self) -> float:
        return sum((r[1] - r[0]) * (r[3] - r[2]) for r in self.extent)


@dataclass(frozen=True)
class CrossSection:
    name: str
    gap_G: float
    conductor_width_W: float
    regions: tuple[DielectricRegion, ...]
    conductors: tuple[Conductor, ...]
    domain_extent: Rect
    oxide_thickness_MA: float = MA_THICKNESS_NM
    oxide_thickness_SA: float = SA_THICKNESS_NM
    thin_layers: bool = True

    def __post_init__(self):
        if not self.gap_G > 0:
            raise GeometryError("gap_G must be > 0")
        names = [r.name for r in self.regions] + [c.name for c in self.conductors]
        if len(set(names)) != len(names):
            raise GeometryError(f"duplicate material names in {names}")
        if self.thin_layers:
            t_min = min((c.thickness for c in self.conductors), default=np.inf)
            for t_nm in (self.oxide_thickness_MA, self.oxide_thickness_SA):
                if not 0 < t_nm * 1e-3 < t_min:
                    raise GeometryError("oxide layers must be thinner than the metal")
        _check_tiling(self)

    @property
    def materials(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.regions) + tuple(c.name for c in self.conductors)

    def region(self, name: str) -> DielectricRegion:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def conductor(self, name: str) -> Conductor:
        for c in self.conductors:
            if c.name == name:
                return c
        raise KeyError(name)

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted unique rectangle edges along x and y."""
        rects = [r for m in (*self.regions, *self.conductors) for r in m.extent]
        x0, x1, y0, y1 = self.domain_extent
        xs = [x0, x1] + [v for r in rects for v in r[:2]]
        ys = [y0, y1] + [v for r in rects for v in r[2:]]
        return _unique(xs), _unique(ys)

    def material_grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coarse block grid: breakpoints and an (nx, ny) material-index array.

        Block ``(i, j)`` spans ``xs[i]..xs[i+1]`` by ``ys[j]..ys[j+1]``;
        -1 marks a block not covered by any material.
        """
        xs, ys = self.breakpoints()
        grid = np.full((len(xs) - 1, len(ys) - 1), -1, dtype=int)
        for k, m in enumerate((*self.regions, *self.conductors)):
            for r in m.extent:
                i0, i1 = _locate(xs, r[0]), _locate(xs, r[1])
                j0, j1 = _locate(ys, r[2]), _locate(ys, r[3])
                block = grid[i0:i1, j0:j1]
                if (block != -1).any():
                    raise GeometryError(f"material {m.name!r} overlaps another material")
                block[...] = k
        return xs, ys, grid

    def mirrored(self) -> "CrossSection":
        """Reflect about the vertical midline of the domain, negating potentials."""
        x0, x1, _, _ = self.domain_extent
        c = x0 + x1

        def flip(rects):
            return tuple(sorted((c - r[1], c - r[0], r[2], r[3]) for r in rects))

        regions = tuple(replace(r, extent=flip(r.extent)) for r in self.regions)
        conductors = tuple(
            replace(k, extent=flip(k.extent), potential=-k.potential) for k in self.conductors
        )
        return replace(self, regions=regions, conductors=conductors)


def _unique(values: Iterable[float]) -> np.ndarray:
    v = np.sort(np.asarray(list(values), dtype=float))
    keep = np.concatenate([[True], np.diff(v) > _BREAK_TOL])
    return v[keep]


def _locate(breaks: np.ndarray, value: float) -> int:
    i = int(np.argmin(np.abs(breaks - value)))
    if abs(breaks[i] - value) > _BREAK_TOL:
        raise GeometryError(f"coordinate {value} is not a breakpoint")
    return i


def _check_tiling(cs: CrossSection) -> None:
    x0, x1, y0, y1 = cs.domain_extent
    if not (x1 > x0 and y1 > y0):
        raise GeometryError("domain has no area")
    for m in (*cs.regions, *cs.conductors):
        for r in m.extent:
            if r[0] < x0 - _BREAK_TOL or r[1] > x1 + _BREAK_TOL or r[2] < y0 - _BREAK_TOL or r[3] > y1 + _BREAK_TOL:
                raise GeometryError(f"material {m.name!r} extends outside the domain")
    _, _, grid = cs.material_grid()
    if (grid == -1).any():
        raise GeometryError("regions and conductors do not tile the domain")


def _merge_blocks(xs: np.ndarray, ys: np.ndarray, mask: np.ndarray) -> tuple[Rect, ...]:
    """Merge a boolean block mask into a short list of rectangles."""
    rows: dict[tuple[int, int], list[int]] = {}
    for j in range(mask.shape[1]):
        i = 0
        while i < mask.shape[0]:
            if mask[i, j]:
                k = i
                while k + 1 < mask.shape[0] and mask[k + 1, j]:
                    k += 1
                rows.setdefault((i, k), []).append(j)
                i = k + 1
            else:
                i += 1
    out = []
    for (i, k), js in rows.items():
        start = prev = js[0]
        for j in js[1:] + [None]:
            if j is not None and j == prev + 1:
                prev = j
                continue
            out.append((float(xs[i]), float(xs[k + 1]), float(ys[start]), float(ys[prev + 1])))
            if j is not None:
                start = prev = j
    return tuple(sorted(out))


@dataclass(frozen=True)
class Materials:
    eps_substrate: float = EPS_SILICON
    eps_SA: float = EPS_SA
    eps_MA: float = EPS_MA
    t_metal_um: float = METAL_THICKNESS_UM
    t_MA_nm: float = MA_THICKNESS_NM
    t_SA_nm: float = SA_THICKNESS_NM
    substrate_depth_um: float = SUBSTRATE_DEPTH_UM
    air_height_um: float = AIR_HEIGHT_UM
    lateral_factor: float = LATERAL_FACTOR


def _assemble(
    name: str,
    G: float,
    W: float,
    metal: Sequence[tuple[str, float, float, float]],
    half_width: float,
    mat: Materials,
    include_thin_layers: bool,
    corner: str = "SA",
) -> CrossSection:
    """Lay out metal strips on a substrate and fill the rest with air.

    ``metal`` holds ``(name, potential, x_left, x_right)``; strips touching
    the domain edge keep no sidewall there.
    """
    t = mat.t_metal_um
    tma = mat.t_MA_nm * 1e-3
    tsa = mat.t_SA_nm * 1e-3
    domain = (-half_width, half_width, -mat.substrate_depth_um, mat.air_height_um)
    painted: list[tuple[str, float | None, float | None, list[Rect]]] = [
        ("substrate", mat.eps_substrate, None, [(-half_width, half_width, domain[2], 0.0)])
    ]
    for cname, pot, a, b in metal:
        painted.append((cname, None, pot, [(a, b, 0.0, t)]))

    if corner not in ("MA", "SA"):
        raise GeometryError(f"corner owner must be 'MA' or 'SA', got {corner!r}")
    if include_thin_layers:
        # corner == "SA": substrate oxide runs up to the metal and the
        # sidewall coating starts on top of it
        foot = tsa if corner == "SA" else 0.0
        pull = 0.0 if corner == "SA" else tma
        ma: list[Rect] = []
        edges = sorted(
            [(a, b) for _, _, a, b in metal], key=lambda e: e[0]
        )
        for a, b in edges:
            left_open = a > -half_width + _BREAK_TOL
            right_open = b < half_width - _BREAK_TOL
            ta = a - tma if left_open else a
            tb = b + tma if right_open else b
            ma.append((ta, tb, t, t + tma))
            if left_open:
                ma.append((a - tma, a, foot, t))
            if right_open:
                ma.append((b, b + tma, foot, t))
        sa: list[Rect] = []
        for (_, b), (a2, _) in zip(edges[:-1], edges[1:]):
            sa.append((b + pull, a2 - pull, 0.0, tsa))
        if edges[0][0] > -half_width + _BREAK_TOL:
            sa.append((-half_width, edges[0][0] - pull, 0.0, tsa))
        if edges[-1][1] < half_width - _BREAK_TOL:
            sa.append((edges[-1][1] + pull, half_width, 0.0, tsa))
        painted.append(("MA", mat.eps_MA, None, ma))
        painted.append(("SA", mat.eps_SA, None, sa))

    rects = [r for *_, rs in painted for r in rs]
    xs = _unique([domain[0], domain[1]] + [v for r in rects for v in r[:2]])
    ys = _unique([domain[2], domain[3]] + [v for r in rects for v in r[2:]])
    grid = np.full((len(xs) - 1, len(ys) - 1), -1, dtype=int)
    for k, (_, _, _, rs) in enumerate(painted):
        for r in rs:
            grid[_locate(xs, r[0]):_locate(xs, r[1]), _locate(ys, r[2]):_locate(ys, r[3])] = k
    air = grid == -1
    if (air & (ys[:-1] < 0)[None, :]).any():
        raise GeometryError("uncovered block below the substrate surface")

    regions = []
    conductors = []
    for k, (mname, eps, pot, _) in enumerate(painted):
        rects_k = _merge_blocks(xs, ys, grid == k)
        if not rects_k:
            continue
        if eps is None:
            conductors.append(Conductor(mname, pot, rects_k, t))
        else:
            regions.append(DielectricRegion(mname, eps, rects_k))
    regions.insert(1, DielectricRegion("air", 1.0, _merge_blocks(xs, ys, air)))
    return CrossSection(
        name=name,
        gap_G=G,
        conductor_width_W=W,
        regions=tuple(regions),
        conductors=tuple(conductors),
        domain_extent=domain,
        oxide_thickness_MA=mat.t_MA_nm,
        oxide_thickness_SA=mat.t_SA_nm,
        thin_layers=include_thin_layers,
    )


def build_cpw_cross_section(
    G: float,
    W: float,
    include_thin_layers: bool = True,
    materials: Materials | None = None,
    name: str = "CPW",
    corner: str = "SA",
) -> CrossSection:
    """Ground | gap | centre strip (+1 V) | gap | ground on a substrate.

    Ground planes run to the lateral edges of the domain, whose total width
    is ``lateral_factor * (W + 2G)``. ``corner`` names the layer that owns
    the foot of each metal sidewall: with ``"SA"`` the substrate oxide runs
    up to the metal and the sidewall coating sits on it; with ``"MA"`` the
    sidewall coating reaches the bare substrate.
    """
    if not (G > 0 and W > 0):
        raise GeometryError(f"G and W must be positive, got G={G}, W={W}")
    mat = materials or Materials()
    half = 0.5 * mat.lateral_factor * (W + 2 * G)
    metal = [
        ("ground_left", 0.0, -half, -W / 2 - G),
        ("center", 1.0, -W / 2, W / 2),
        ("ground_right", 0.0, W / 2 + G, half),
    ]
    return _assemble(name, G, W, metal, half, mat, include_thin_layers, corner)


def build_two_pad_cross_section(
    G: float,
    pad_width: float,
    include_thin_layers: bool = True,
    materials: Materials | None = None,
    ground_gap: float | None = None,
    name: str = "TWO_PAD",
    corner: str = "SA",
) -> CrossSection:
    """Two floating pads at +0.5 V / -0.5 V separated by G.

    Grounded planes sit ``ground_gap`` (default: one pad width) beyond the
    outer pad edges and run to the domain edges.
    """
    if not (G > 0 and pad_width > 0):
        raise GeometryError(f"G and pad_width must be positive, got G={G}, pad_width={pad_width}")
    mat = materials or Materials()
    gg = pad_width if ground_gap is None else ground_gap
    if not gg > 0:
        raise GeometryError("ground_gap must be positive")
    outer = G / 2 + pad_width
    half = max(0.5 * mat.lateral_factor * (pad_width + 2 * G), outer + gg + pad_width)
    metal = [
        ("ground_left", 0.0, -half, -outer - gg),
        ("pad_left", 0.5, -outer, -G / 2),
        ("pad_right", -0.5, G / 2, outer),
        ("ground_right", 0.0, outer + gg, half),
    ]
    return _assemble(name, G, pad_width, metal, half, mat, include_thin_layers, corner)


# ---------------------------------------------------------------------------
# key-value geometry configs

@dataclass(frozen=True)
class GeometryConfig:
    name: str
    kind: str
    G_um: float
    W_um: float
    materials: Materials = field(default_factory=Materials)
    ground_gap_um: float | None = None
    corner: str = "SA"
    calibration_default: bool = True

    def build(self, include_thin_layers: bool = True) -> CrossSection:
        if self.kind == "cpw":
            return build_cpw_cross_section(
                self.G_um, self.W_um, include_thin_layers, self.materials,
                name=self.name, corner=self.corner,
            )
        if self.kind == "two_pad":
            return build_two_pad_cross_section(
                self.G_um,
                self.W_um,
                include_thin_layers,
                self.materials,
                ground_gap=self.ground_gap_um,
                name=self.name,
                corner=self.corner,
            )
        raise GeometryError(f"unknown geometry kind {self.kind!r}")

    def to_text(self) -> str:
        m = self.materials
        lines = [
            f"name = {self.name}",
            f"kind = {self.kind}",
            f"G_um = {self.G_um!r}",
            f"W_um = {self.W_um!r}",
            f"t_metal_um = {m.t_metal_um!r}",
            f"t_MA_nm = {m.t_MA_nm!r}",
            f"t_SA_nm = {m.t_SA_nm!r}",
            f"eps_substrate = {m.eps_substrate!r}",
            f"eps_SA = {m.eps_SA!r}",
            f"eps_MA = {m.eps_MA!r}",
            f"substrate_depth_um = {m.substrate_depth_um!r}",
            f"air_height_um = {m.air_height_um!r}",
            f"lateral_factor = {m.lateral_factor!r}",
        ]
        if self.ground_gap_um is not None:
            lines.append(f"ground_gap_um = {self.ground_gap_um!r}")
        lines.append(f"corner = {self.corner}")
        lines.append(f"calibration_default = {str(self.calibration_default).lower()}")
        return "\n".join(lines) + "\n"


_MATERIAL_KEYS = {
    "eps_substrate", "eps_SA", "eps_MA", "t_metal_um", "t_MA_nm", "t_SA_nm",
    "substrate_depth_um", "air_height_um", "lateral_factor",
}


def parse_geometry_config(text: str, source: str = "<string>") -> GeometryConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GeometryError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    for key in ("name", "G_um", "W_um"):
        if key not in values:
            raise GeometryError(f"{source}: missing key {key!r}")
    try:
        mat = Materials(**{k: float(v) for k, v in values.items() if k in _MATERIAL_KEYS})
        gg = values.get("ground_gap_um")
        return GeometryConfig(
            name=values["name"],
            kind=values.get("kind", "cpw"),
            G_um=float(values["G_um"]),
            W_um=float(values["W_um"]),
            materials=mat,
            ground_gap_um=None if gg is None else float(gg),
            corner=values.get("corner", "SA"),
            calibration_default=values.get("calibration_default", "true").lower() == "true",
        )
    except ValueError as exc:
        raise GeometryError(f"{source}: {exc}") from exc


def load_geometry_config(path: str | Path) -> GeometryConfig:
    p = Path(path)
    return parse_geometry_config(p.read_text(encoding="utf-8"), str(p))


BUNDLED_DESIGNS = ("RES", "XM1", "XM2", "TM")


def bundled_geometry(design: str) -> GeometryConfig:
    """Shipped config for one of the four measured designs."""
    from importlib import resources

    if design not in BUNDLED_DESIGNS:
        raise KeyError(f"no bundled geometry {design!r}; choose from {BUNDLED_DESIGNS}")
    text = resources.files("qloss.data").joinpath(f"geometry_{design}.cfg").read_text("utf-8")
    return parse_geometry_config(text, f"geometry_{design}.cfg")
