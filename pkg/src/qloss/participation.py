"""Energy participation ratios of dielectric regions.

Two routes are provided. :func:`participation_ratios` divides the region
energies of a solution in which the oxide layers are meshed explicitly.
:func:`thin_layer_participation` estimates a layer that was *not* meshed
from the field on the surface it would coat, using continuity of the
tangential field and of the normal displacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fieldsolve import FieldSolution, compute_region_energies
from .geometry import EPS_MA, EPS_SA, MA_THICKNESS_NM, SA_THICKNESS_NM


@dataclass(frozen=True)
class ParticipationReport:
    geometry: str
    method: str
    ratios: dict[str, float]
    total_energy: float = float("nan")
    extras: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("direct", "surface-approximation"):
            raise ValueError(f"unknown method tag {self.method!r}")

    def __getitem__(self, name: str) -> float:
        return self.ratios[name]

    def as_rows(self) -> list[dict[str, object]]:
        rows = [
            {"geometry": self.geometry, "method": self.method, "region": k, "participation": v}
            for k, v in self.ratios.items()
        ]
        rows += [
            {"geometry": self.geometry, "method": self.method, "region": k, "participation": v}
            for k, v in self.extras.items()
        ]
        return rows


def participation_ratios(solution: FieldSolution) -> ParticipationReport:
    """Fraction of the total electric energy held by each dielectric region."""
    energies = compute_region_energies(solution)
    total = sum(energies.values())
    if not total > 0:
        raise ValueError("total electric energy is zero; participation undefined")
    ratios = {k: v / total for k, v in energies.items()}
    return ParticipationReport(solution.mesh.section.name, "direct", ratios, total)


@dataclass(frozen=True)
class LayerSpec:
    """A thin dielectric layer to be evaluated on a bare solution.

    ``kind`` is ``"MA"`` (coats conductor surfaces facing ``ambient``) or
    ``"SA"`` (coats the ``substrate``/``ambient`` boundary). ``conductors``
    optionally restricts MA to the named conductors.
    """

    kind: str
    thickness_nm: float
    permittivity: float
    conductors: tuple[str, ...] | None = None
    ambient: str = "air"
    substrate: str = "substrate"

    @classmethod
    def metal_air(cls, **kw) -> "LayerSpec":
        return cls("MA", kw.pop("thickness_nm", MA_THICKNESS_NM), kw.pop("permittivity", EPS_MA), **kw)

    @classmethod
    def substrate_air(cls, **kw) -> "LayerSpec":
        return cls("SA", kw.pop("thickness_nm", SA_THICKNESS_NM), kw.pop("permittivity", EPS_SA), **kw)


def _surface_faces(solution: FieldSolution, layer: LayerSpec):
    """Yield (axis, face index arrays, ambient-side cell index arrays) of a surface."""
    m = solution.mesh
    tags = m.tags
    try:
        amb = m.tag_of(layer.ambient)
    except ValueError:
        raise ValueError(f"ambient region {layer.ambient!r} absent from geometry") from None
    if layer.kind == "MA":
        names = layer.conductors
        other = np.array([m.is_conductor[k] and (names is None or m.materials[k] in names)
                          for k in range(len(m.materials))])
    elif layer.kind == "SA":
        try:
            sub = m.tag_of(layer.substrate)
        except ValueError:
            raise ValueError(f"substrate region {layer.substrate!r} absent from geometry") from None
        other = np.arange(len(m.materials)) == sub
    else:
        raise ValueError(f"unknown surface kind {layer.kind!r}")
    is_amb = tags == amb
    is_other = other[tags]
    found = False
    for axis in (0, 1):
        lo = [slice(None), slice(None)]
        hi = [slice(None), slice(None)]
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        for amb_side, oth_side, amb_is_low in ((lo, hi, True), (hi, lo, False)):
            mask = is_amb[amb_side] & is_other[oth_side]
            if not mask.any():
                continue
            found = True
            ii, jj = np.nonzero(mask)
            # ambient cell indices
            ai, aj = (ii, jj) if amb_is_low else ((ii + 1, jj) if axis == 0 else (ii, jj + 1))
            # face indices into flux arrays
            fi, fj = (ii + 1, jj) if axis == 0 else (ii, jj + 1)
            yield axis, (fi, fj), (ai, aj)
    if not found:
        raise ValueError(f"surface kind {layer.kind!r} absent from geometry")


def thin_layer_participation(bare_solution: FieldSolution, layer: LayerSpec) -> float:
    """First-order participation of an unmeshed thin layer.

    Inside the layer the tangential field equals the ambient-side tangential
    field and the normal displacement equals the ambient-side one, so the
    energy per unit area is ``0.5 * t * (eps_l * Et**2 + Dn**2 / eps_l)``.
    On conductor surfaces ``Et`` is zero.
    """
    s = bare_solution
    m = s.mesh
    t = layer.thickness_nm * 1e-3
    eps_l = layer.permittivity
    ex, ey = s.field_components()
    layer_energy = 0.0
    for axis, (fi, fj), (ai, aj) in _surface_faces(s, layer):
        if axis == 0:
            length = m.dy[fj]
            dn = s.flux_x[fi, fj] / length
            et = ey[ai, aj]
        else:
            length = m.dx[fi]
            dn = s.flux_y[fi, fj] / length
            et = ex[ai, aj]
        if layer.kind == "MA":
            et = 0.0
        layer_energy += float(np.sum(0.5 * t * (eps_l * et**2 + dn**2 / eps_l) * length))
    total = s.total_energy
    if not total > 0:
        raise ValueError("total electric energy is zero; participation undefined")
    return layer_energy / total


def surface_report(bare_solution: FieldSolution,
                   layers: tuple[LayerSpec, ...] | None = None) -> ParticipationReport:
    """Bulk ratios of a bare solution plus surface estimates of each layer.

    Bulk regions are rescaled so that all entries sum to one.
    """
    layers = layers or (LayerSpec.metal_air(), LayerSpec.substrate_air())
    bulk = participation_ratios(bare_solution).ratios
    thin = {lay.kind: thin_layer_participation(bare_solution, lay) for lay in layers}
    scale = 1.0 - sum(thin.values())
    ratios = {k: v * scale for k, v in bulk.items()}
    ratios.update(thin)
    return ParticipationReport(
        bare_solution.mesh.section.name, "surface-approximation", ratios,
        bare_solution.total_energy,
    )


@dataclass(frozen=True)
class ParticipationRun:
    """Direct and surface-approximation reports for one geometry."""

    direct: ParticipationReport
    surface: ParticipationReport
    n_cells: int
    residual: float

    def relative_difference(self, region: str) -> float:
        """(surface - direct) / direct for one region."""
        d = self.direct[region]
        return (self.surface[region] - d) / d


def simulate_participation(config, min_cell_nm: float = 1.0, grading_ratio: float = 1.2,
                           tolerance: float = 1e-10) -> ParticipationRun:
    """Mesh and solve a geometry config with and without meshed oxide layers."""
    from .fieldsolve import solve_potential
    from .mesh import generate_mesh

    full = solve_potential(generate_mesh(config.build(True), min_cell_nm, grading_ratio), tolerance)
    bare = solve_potential(generate_mesh(config.build(False), min_cell_nm, grading_ratio), tolerance)
    m = config.materials
    layers = (LayerSpec.metal_air(thickness_nm=m.t_MA_nm, permittivity=m.eps_MA),
              LayerSpec.substrate_air(thickness_nm=m.t_SA_nm, permittivity=m.eps_SA))
    return ParticipationRun(participation_ratios(full), surface_report(bare, layers),
                            full.mesh.n_cells, max(full.residual, bare.residual))
