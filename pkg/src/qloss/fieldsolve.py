"""Cell-centred finite-volume solver for div(eps grad phi) = 0.

Unknowns live at the centres of dielectric cells. The flux through a face
is ``T * (phi_a - phi_b)`` with ``1/T`` the sum of the two half-cell
resistances ``(h/2) / (eps * face_length)``, i.e. harmonic averaging of the
permittivity. A conductor cell contributes zero resistance, so its potential
is imposed on the shared face. Outer domain faces carry no flux.

Energies are per unit length along the invariant axis in units of
``eps0 * V**2``; ``eps0`` cancels in every ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .mesh import Mesh

DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class FieldSolution:
    mesh: Mesh
    potential: np.ndarray      # (nx, ny) cell-centre potential, conductors included
    flux_x: np.ndarray         # (nx + 1, ny) flux through x-faces, +x direction
    flux_y: np.ndarray         # (nx, ny + 1) flux through y-faces, +y direction
    cell_energy: np.ndarray    # (nx, ny)
    field_magnitude: np.ndarray  # (nx, ny), V/um
    residual: float

    @property
    def region_energies(self) -> dict[str, float]:
        return compute_region_energies(self)

    @property
    def total_energy(self) -> float:
        return float(self.cell_energy.sum())

    def field_components(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-averaged (Ex, Ey) from the face fluxes of dielectric cells."""
        m = self.mesh
        eps = _cell_eps(m)
        dx, dy = m.dx[:, None], m.dy[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            ex = 0.5 * (self.flux_x[:-1] + self.flux_x[1:]) / (eps * dy)
            ey = 0.5 * (self.flux_y[:, :-1] + self.flux_y[:, 1:]) / (eps * dx)
        cond = m.is_conductor[m.tags]
        return np.where(cond, 0.0, ex), np.where(cond, 0.0, ey)


def _cell_eps(mesh: Mesh) -> np.ndarray:
    return mesh.permittivity[mesh.tags]


def _half_resistances(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Half-cell resistances toward x-faces and y-faces (0 inside conductors)."""
    eps = _cell_eps(mesh)
    cond = mesh.is_conductor[mesh.tags]
    dx, dy = mesh.dx[:, None], mesh.dy[None, :]
    with np.errstate(invalid="ignore"):
        rx = np.where(cond, 0.0, 0.5 * dx / (eps * dy))
        ry = np.where(cond, 0.0, 0.5 * dy / (eps * dx))
    return rx, ry


def solve_potential(mesh: Mesh, tolerance: float = DEFAULT_TOLERANCE,
                    method: str = "direct", maxiter: int = 20000) -> FieldSolution:
    """Solve the electrostatic problem on ``mesh``.

    ``method`` is ``"direct"`` (sparse LU with iterative refinement) or
    ``"cg"`` (Jacobi-preconditioned conjugate gradients, capped at
    ``maxiter`` iterations).
    """
    if not 0 < tolerance <= 1e-6:
        raise ValueError(f"tolerance must be in (0, 1e-6], got {tolerance}")
    tags = mesh.tags
    cond = mesh.is_conductor[tags]
    used_pots = {float(mesh.potential[t]) for t in np.unique(tags) if mesh.is_conductor[t]}
    if len(used_pots) < 2:
        raise SolverError(
            f"need at least two distinct conductor potentials, found {sorted(used_pots)}"
        )
    nx, ny = tags.shape
    phi_fixed = np.where(cond, mesh.potential[tags], 0.0)
    unknown = ~cond
    index = np.full((nx, ny), -1, dtype=np.int64)
    n = int(unknown.sum())
    index[unknown] = np.arange(n)

    rx, ry = _half_resistances(mesh)
    tx = _transmissibility(rx[:-1, :], rx[1:, :])    # (nx-1, ny)
    ty = _transmissibility(ry[:, :-1], ry[:, 1:])    # (nx, ny-1)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    rhs = np.zeros(n)
    for t, (ia, ib) in (
        (tx, (index[:-1, :], index[1:, :])),
        (ty, (index[:, :-1], index[:, 1:])),
    ):
        fa = phi_fixed[:-1, :] if t is tx else phi_fixed[:, :-1]
        fb = phi_fixed[1:, :] if t is tx else phi_fixed[:, 1:]
        ia, ib, t, fa, fb = ia.ravel(), ib.ravel(), t.ravel(), fa.ravel(), fb.ravel()
        both = (ia >= 0) & (ib >= 0)
        rows += [ia[both], ib[both]]
        cols += [ib[both], ia[both]]
        vals += [-t[both], -t[both]]
        np.add.at(diag, ia[ia >= 0], t[ia >= 0])
        np.add.at(diag, ib[ib >= 0], t[ib >= 0])
        a_only = (ia >= 0) & (ib < 0)
        b_only = (ib >= 0) & (ia < 0)
        np.add.at(rhs, ia[a_only], t[a_only] * fb[a_only])
        np.add.at(rhs, ib[b_only], t[b_only] * fa[b_only])
    idx = np.arange(n)
    A = sp.csr_matrix(
        (np.concatenate(vals + [diag]), (np.concatenate(rows + [idx]), np.concatenate(cols + [idx]))),
        shape=(n, n),
    )
    if np.any(diag <= 0):
        raise SolverError("singular system: isolated dielectric cells")

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        raise SolverError("singular system: no potential difference reaches the dielectric")
    if method == "direct":
        lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        u = lu.solve(rhs)
        res = np.linalg.norm(rhs - A @ u) / bnorm
        for _ in range(3):
            if res <= tolerance:
                break
            u += lu.solve(rhs - A @ u)
            res = np.linalg.norm(rhs - A @ u) / bnorm
    elif method == "cg":
        M = sp.diags(1.0 / diag)
        u, info = spla.cg(A, rhs, rtol=tolerance, maxiter=maxiter, M=M)
        res = np.linalg.norm(rhs - A @ u) / bnorm
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.isfinite(res) or res > tolerance:
        raise SolverError(f"residual {res:.3e} above tolerance {tolerance:.1e}", residual=float(res))

    phi = phi_fixed.copy()
    phi[unknown] = u
    flux_x = np.zeros((nx + 1, ny))
    flux_y = np.zeros((nx, ny + 1))
    flux_x[1:-1, :] = tx * (phi[:-1, :] - phi[1:, :])
    flux_y[:, 1:-1] = ty * (phi[:, :-1] - phi[:, 1:])

    # energy of each half cell is 0.5 * F**2 * R_half
    energy = 0.5 * (
        flux_x[:-1, :] ** 2 * rx + flux_x[1:, :] ** 2 * rx
        + flux_y[:, :-1] ** 2 * ry + flux_y[:, 1:] ** 2 * ry
    )
    eps = np.where(cond, 1.0, _cell_eps(mesh))
    area = mesh.cell_areas
    emag = np.sqrt(2.0 * energy / (eps * area))
    for arr in (phi, flux_x, flux_y, energy, emag):
        arr.setflags(write=False)
    return FieldSolution(mesh, phi, flux_x, flux_y, energy, emag, float(res))


def _transmissibility(ra: np.ndarray, rb: np.ndarray) -> np.ndarray:
    r = ra + rb
    with np.errstate(divide="ignore"):
        return np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)


def compute_region_energies(solution: FieldSolution) -> dict[str, float]:
    """Electric energy per dielectric region, keyed by region name."""
    m = solution.mesh
    sums = np.bincount(m.tags.ravel(), weights=solution.cell_energy.ravel(),
                       minlength=len(m.materials))
    return {name: float(sums[k]) for k, name in enumerate(m.materials) if not m.is_conductor[k]}


def write_field_dump(solution: FieldSolution, path: str | Path, delimiter: str = ",") -> None:
    """Per-cell x, y, region, |E| as delimited text."""
    m = solution.mesh
    cx, cy = m.centers
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    names = np.asarray(m.materials, dtype=object)[m.tags]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(["x_um", "y_um", "region", "E_V_per_um"]) + "\n")
        for x, y, r, e in zip(X.ravel(), Y.ravel(), names.ravel(), solution.field_magnitude.ravel()):
            fh.write(f"{x:.9g}{delimiter}{y:.9g}{delimiter}{r}{delimiter}{e:.9g}\n")
