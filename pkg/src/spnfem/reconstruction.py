"""Conforming flux reconstruction by vertex averaging.

The piecewise-constant fluxes are averaged into the d-linear (Q1) vertex
space.  At a vertex a:

* a on the Dirichlet closure: value 0 (conformity with the constrained
  space dominates every other rule);
* a on the vacuum-boundary closure (and not Dirichlet): average over the
  adjacent cells of Gamma_e^-1 H^T (p_h.n), the flux datum implied by the
  Robin condition, each cell contributing the mean over its own Robin
  facets touching a;
* otherwise: arithmetic mean of the adjacent cell constants.

The multi-domain variant runs the same rules with the adjacency set
collecting cells from every subdomain whose closure contains the vertex;
on a nonmatching interface the neighbor side contributes the constant of
the containing cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fem import CellCoefficients, MixedField
from .mesh import BCKind, SubdomainLayout, TensorGrid

__all__ = [
    "NodalFluxField",
    "average_reconstruct",
    "average_reconstruct_multidomain",
]

_TOL = 1e-12


@dataclass
class NodalFluxField:
    """Vertex values (nc, n_vertices); evaluation is d-linear per cell."""

    grid: TensorGrid
    nc: int
    values: np.ndarray

    def cell_corner_values(self) -> np.ndarray:
        """(nc, n_cells, 2^d), corners in the grid's binary corner order."""
        return self.values[:, self.grid.cell_vertices]


def _outward_trace(grid: TensorGrid, field: MixedField, facets: np.ndarray) -> np.ndarray:
    """(nc, n) outward-normal traces p.n on exterior facets."""
    sign = np.where(grid.facet_cells[facets, 0] >= 0, 1.0, -1.0)
    return field.p[:, facets] * sign[None, :]


def _robin_vertex_values(
    grid: TensorGrid, coeffs: CellCoefficients, field: MixedField
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex ids on the Robin closure and their averaged flux data."""
    robin = grid.boundary_facets(BCKind.ROBIN)
    nc = coeffs.nc
    if robin.size == 0:
        return np.empty(0, dtype=np.int64), np.empty((nc, 0))
    rec = coeffs.Ge_inv_mats[0] @ coeffs.Ht  # Gamma_e^-1 H^T, material-free
    w = rec @ _outward_trace(grid, field, robin)  # (nc, n_robin)
    owner = grid.facet_owner[robin]
    verts = grid.facet_vertices[robin]  # (n_robin, 2^(d-1))
    ncorn = verts.shape[1]
    pair_key = verts * grid.n_cells + owner[:, None]  # unique per (vertex, cell)
    keys, inv = np.unique(pair_key.ravel(), return_inverse=True)
    pair_sum = np.zeros((nc, keys.size))
    pair_cnt = np.zeros(keys.size)
    w_rep = np.repeat(w, ncorn, axis=1)
    for c in range(nc):
        np.add.at(pair_sum[c], inv, w_rep[c])
    np.add.at(pair_cnt, inv, 1.0)
    pair_val = pair_sum / pair_cnt[None, :]  # per-cell mean over its facets at a
    pair_vert = keys // grid.n_cells
    vids, vinv = np.unique(pair_vert, return_inverse=True)
    vsum = np.zeros((nc, vids.size))
    vcnt = np.zeros(vids.size)
    for c in range(nc):
        np.add.at(vsum[c], vinv, pair_val[c])
    np.add.at(vcnt, vinv, 1.0)
    return vids, vsum / vcnt[None, :]


def average_reconstruct(
    grid: TensorGrid, coeffs: CellCoefficients, field: MixedField
) -> NodalFluxField:
    nc = coeffs.nc
    sums = np.zeros((nc, grid.n_vertices))
    cnt = np.zeros(grid.n_vertices)
    cv = grid.cell_vertices
    for corner in range(cv.shape[1]):
        ids = cv[:, corner]
        for c in range(nc):
            np.add.at(sums[c], ids, field.phi[c])
        np.add.at(cnt, ids, 1.0)
    values = sums / cnt[None, :]
    vids, vvals = _robin_vertex_values(grid, coeffs, field)
    values[:, vids] = vvals
    values[:, grid.vertices_on_bc(BCKind.DIRICHLET)] = 0.0
    return NodalFluxField(grid=grid, nc=nc, values=values)


# -- multi-domain -----------------------------------------------------------------


def _vertex_on_face(coord, axis_ticks, axis: int, side: int) -> bool:
    target = axis_ticks[0] if side == 0 else axis_ticks[-1]
    return abs(coord[axis] - target) <= _TOL * max(1.0, abs(target))


def _cell_robin_data(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    field: MixedField,
    cell: int,
    coord: Sequence[float],
    rec: np.ndarray,
) -> np.ndarray | None:
    """Mean of Gamma_e^-1 H^T (p.n) over the cell's Robin facets containing
    the point, or None when the cell has no such facet."""
    vals = []
    multi = np.unravel_index(cell, grid.shape)
    for a in range(grid.dim):
        for side in (0, 1):
            f = grid.cell_facets[cell, a, side]
            if grid.facet_bc[f] != int(BCKind.ROBIN):
                continue
            plane = grid.axes[a][multi[a] + side]
            if abs(coord[a] - plane) > _TOL * max(1.0, abs(plane)):
                continue
            tr = _outward_trace(grid, field, np.array([f]))[:, 0]
            vals.append(rec @ tr)
    if not vals:
        return None
    return np.mean(vals, axis=0)


def average_reconstruct_multidomain(
    layout: SubdomainLayout,
    coeffs_list: Sequence[CellCoefficients],
    fields: Sequence[MixedField],
) -> list[NodalFluxField]:
    """One nodal field per subdomain, averaged across subdomain boundaries.

    Vertices strictly inside a subdomain reduce exactly to the mono-domain
    rule; vertices on subdomain interfaces gather cells from every
    neighboring subdomain.
    """
    nc = coeffs_list[0].nc
    rec = coeffs_list[0].Ge_inv_mats[0] @ coeffs_list[0].Ht
    results = [
        average_reconstruct(g, cf, f)
        for g, cf, f in zip(layout.subdomains, coeffs_list, fields)
    ]
    # identify which global faces are Dirichlet/Robin
    dirichlet_faces, robin_faces = [], []
    for s, grid in enumerate(layout.subdomains):
        for (a, side), kind in grid.face_bc.items():
            if kind == BCKind.INTERFACE:
                continue
            coord = layout.boxes[s][a][side]
            entry = (a, side, coord)
            if kind == BCKind.DIRICHLET and entry not in dirichlet_faces:
                dirichlet_faces.append(entry)
            if kind == BCKind.ROBIN and entry not in robin_faces:
                robin_faces.append(entry)

    cache: dict[tuple[float, ...], np.ndarray] = {}

    def shared_value(coord: tuple[float, ...]) -> np.ndarray:
        if coord in cache:
            return cache[coord]
        on_dirichlet = any(
            abs(coord[a] - c) <= _TOL * max(1.0, abs(c)) for a, _s, c in dirichlet_faces
        )
        if on_dirichlet:
            val = np.zeros(nc)
            cache[coord] = val
            return val
        on_robin = any(
            abs(coord[a] - c) <= _TOL * max(1.0, abs(c)) for a, _s, c in robin_faces
        )
        contributions = []
        for s, grid in enumerate(layout.subdomains):
            for cell in grid.locate_cells(coord):
                if on_robin:
                    data = _cell_robin_data(
                        grid, coeffs_list[s], fields[s], cell, coord, rec
                    )
                    if data is not None:
                        contributions.append(data)
                else:
                    contributions.append(fields[s].phi[:, cell])
        if not contributions:
            val = np.zeros(nc)
        else:
            val = np.mean(contributions, axis=0)
        cache[coord] = val
        return val

    for s, grid in enumerate(layout.subdomains):
        iface_vertex_ids = set()
        for (a, side), kind in grid.face_bc.items():
            if kind == BCKind.INTERFACE:
                iface_vertex_ids.update(grid.vertices_on_face(a, side).tolist())
        for v in sorted(iface_vertex_ids):
            coord = tuple(grid.vertex_coords[v])
            results[s].values[:, v] = shared_value(coord)
    return results
