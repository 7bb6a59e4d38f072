"""Rectilinear graded meshes over a :class:`~qloss.geometry.CrossSection`.

Each axis is split at every material breakpoint. Inside a segment the cell
size starts at ``min_cell`` on interface ends and grows geometrically toward
the segment interior, capped at ``max_cell``. Segment ends are then matched
so that neighbouring cells never differ by more than ``grading_ratio``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError
from .geometry import CrossSection

DEFAULT_MAX_CELLS = 4_000_000


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tensor-product mesh: node coordinates and one material tag per cell."""

    x: np.ndarray
    y: np.ndarray
    tags: np.ndarray
    materials: tuple[str, ...]
    is_conductor: np.ndarray
    permittivity: np.ndarray
    potential: np.ndarray
    grading_ratio: float
    min_cell: float
    section: CrossSection

    @property
    def shape(self) -> tuple[int, int]:
        return self.tags.shape

    @property
    def n_cells(self) -> int:
        return self.tags.size

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def dy(self) -> np.ndarray:
        return np.diff(self.y)

    @property
    def cell_areas(self) -> np.ndarray:
        return np.outer(self.dx, self.dy)

    @property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.x[1:] + self.x[:-1]), 0.5 * (self.y[1:] + self.y[:-1])

    def tag_of(self, name: str) -> int:
        return self.materials.index(name)

    def tag_at(self, px, py) -> np.ndarray:
        """Material tag of the cell containing each point."""
        i = np.clip(np.searchsorted(self.x, px, side="right") - 1, 0, self.shape[0] - 1)
        j = np.clip(np.searchsorted(self.y, py, side="right") - 1, 0, self.shape[1] - 1)
        return self.tags[i, j]


def _segment_sizes(length: float, h_left: float | None, h_right: float | None,
                   q: float, h_max: float) -> np.ndarray:
    """Cell sizes for one segment; ``None`` marks an end on the domain boundary."""
    if h_left is None and h_right is None:
        n = max(1, int(np.ceil(length / h_max - 1e-9)))
        return np.full(n, length / n)
    n = 1
    while True:
        j = np.arange(n)
        s = np.full(n, h_max)
        if h_left is not None:
            s = np.minimum(s, h_left * q**j)
        if h_right is not None:
            s = np.minimum(s, h_right * q ** (n - 1 - j))
        total = s.sum()
        if total >= length * (1 - 1e-12):
            return s * (length / total)
        # once the cap is reached every extra cell adds exactly h_max
        if s.max() >= h_max:
            n += max(1, int((length - total) / h_max))
        else:
            n += 1


def _axis_nodes(breaks: np.ndarray, h0: float, ratio: float, h_max: float,
                uniform_h: float) -> np.ndarray:
    nseg = len(breaks) - 1
    if nseg == 1:
        length = breaks[1] - breaks[0]
        n = max(1, int(np.ceil(length / uniform_h - 1e-9)))
        return np.linspace(breaks[0], breaks[1], n + 1)
    q = 1.0 + 0.9 * (ratio - 1.0)
    # target size at each segment end; boundary ends get None
    targets = [[None if k == 0 else h0, None if k == nseg - 1 else h0] for k in range(nseg)]
    for _ in range(200):
        sizes = [
            _segment_sizes(breaks[k + 1] - breaks[k], targets[k][0], targets[k][1], q, h_max)
            for k in range(nseg)
        ]
        changed = False
        for k in range(nseg - 1):
            left, right = sizes[k][-1], sizes[k + 1][0]
            if max(left, right) / min(left, right) > ratio * (1 - 1e-9):
                if left > right:
                    targets[k][1] = right
                else:
                    targets[k + 1][0] = left
                changed = True
        if not changed:
            break
    else:
        raise MeshError("could not match cell sizes across breakpoints")
    pieces = [np.array([breaks[0]])]
    for k, s in enumerate(sizes):
        a, b = breaks[k], breaks[k + 1]
        inner = a + np.cumsum(s[:-1])
        # mirror-consistent: second half measured from the right end
        half = len(inner) // 2
        if half:
            inner[half:] = b - np.cumsum(s[::-1])[: len(inner) - half][::-1]
        pieces.append(inner)
        pieces.append(np.array([b]))
    return np.concatenate(pieces)


def estimate_cells(cs: CrossSection, min_cell_nm: float, grading_ratio: float,
                   max_cell_um: float | None = None) -> int:
    """Rough cell count without building the mesh."""
    xs, ys = cs.breakpoints()
    h0 = min_cell_nm * 1e-3
    hm = max_cell_um or _default_max_cell(cs)
    q = 1.0 + 0.9 * (grading_ratio - 1.0)

    def count(breaks):
        total = 0
        for L in np.diff(breaks):
            ramp = np.log(min(hm, max(L, h0)) / h0) / np.log(q)
            total += int(2 * ramp + L / hm + 1)
        return total

    return count(xs) * count(ys)


def _default_max_cell(cs: CrossSection) -> float:
    x0, x1, y0, y1 = cs.domain_extent
    return min(x1 - x0, y1 - y0) / 40.0


def generate_mesh(
    cs: CrossSection,
    min_cell_nm: float = 1.0,
    grading_ratio: float = 1.2,
    max_cell_um: float | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> Mesh:
    """Mesh a cross-section, refining to ``min_cell_nm`` at every interface.

    Raises
    ------
    MeshError
        If ``min_cell_nm`` cannot put two cells across the thinnest oxide
        layer, if the grading ratio is outside (1, 2], or if the estimated
        cell count exceeds ``max_cells``.
    """
    if not 1.0 < grading_ratio <= 2.0:
        raise MeshError(f"grading_ratio must be in (1, 2], got {grading_ratio}")
    if not min_cell_nm > 0:
        raise MeshError("min_cell must be positive")
    if cs.thin_layers:
        thinnest = min(cs.oxide_thickness_MA, cs.oxide_thickness_SA)
        if min_cell_nm > thinnest / 2:
            raise MeshError(
                f"min_cell {min_cell_nm} nm too coarse: thinnest layer is {thinnest} nm, "
                f"need min_cell <= {thinnest / 2} nm for two cells across it"
            )
    estimate = estimate_cells(cs, min_cell_nm, grading_ratio, max_cell_um)
    if estimate > max_cells:
        raise MeshError(
            f"estimated {estimate} cells exceeds budget of {max_cells}", estimated_cells=estimate
        )

    h0 = min_cell_nm * 1e-3
    hm = max(max_cell_um or _default_max_cell(cs), h0)
    xb, yb, grid = cs.material_grid()
    x = _axis_nodes(xb, h0, grading_ratio, hm, uniform_h=h0)
    y = _axis_nodes(yb, h0, grading_ratio, hm, uniform_h=h0)
    if (x.size - 1) * (y.size - 1) > max_cells:
        raise MeshError(
            f"mesh has {(x.size - 1) * (y.size - 1)} cells, budget is {max_cells}",
            estimated_cells=(x.size - 1) * (y.size - 1),
        )

    cx = 0.5 * (x[1:] + x[:-1])
    cy = 0.5 * (y[1:] + y[:-1])
    bi = np.searchsorted(xb, cx) - 1
    bj = np.searchsorted(yb, cy) - 1
    tags = grid[np.ix_(bi, bj)]

    n_reg = len(cs.regions)
    is_cond = np.array([False] * n_reg + [True] * len(cs.conductors))
    eps = np.array([r.relative_permittivity for r in cs.regions] + [np.nan] * len(cs.conductors))
    pot = np.array([np.nan] * n_reg + [c.potential for c in cs.conductors])
    for arr in (x, y, tags, is_cond, eps, pot):
        arr.setflags(write=False)
    return Mesh(
        x=x, y=y, tags=tags, materials=cs.materials, is_conductor=is_cond,
        permittivity=eps, potential=pot, grading_ratio=grading_ratio,
        min_cell=h0, section=cs,
    )


def uniform_box_section(width: float, height: float, eps: float = 1.0,
                        name: str = "box") -> CrossSection:
    """Single-dielectric rectangle, useful for trivial mesh checks."""
    from .geometry import DielectricRegion

    return CrossSection(
        name=name, gap_G=width, conductor_width_W=width,
        regions=(DielectricRegion("fill", eps, ((0.0, width, 0.0, height),)),),
        conductors=(), domain_extent=(0.0, width, 0.0, height), thin_layers=False,
    )
