"""Tensor-product Cartesian meshes in d = 2, 3.

A grid is the product of per-axis breakpoint sequences.  Cells, facets and
vertices are numbered by C-order raveling of their multi-indices (axis 0
slowest).  Facets are grouped in per-axis blocks: the block of facets normal
to axis a has the cell shape with one extra layer along a.  Every facet is
oriented by the global convention that its normal points toward increasing
coordinate.

Refinement bisects whole coordinate slabs (all cells sharing one interval of
one axis), which preserves the tensor structure exactly: no hanging facets
can occur.  Breakpoints are kept as the exact binary values produced by
midpoint bisection of the initial ticks, so refined meshes of neighboring
subdomains agree bitwise wherever they geometrically coincide.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LayoutError, MisalignedRegionError

__all__ = [
    "BCKind",
    "TensorGrid",
    "FacetRef",
    "Interface",
    "InterfaceMesh",
    "SubdomainLayout",
    "build_grid",
    "build_layout",
    "cell_neighbors",
    "refine_slabs",
    "overlay_traces",
]

_TOL = 1e-12


class BCKind(enum.IntEnum):
    """Boundary kind of an exterior facet.

    INTERFACE marks subdomain faces interior to the global domain: the
    facet dofs are free and carry no boundary term.
    """

    DIRICHLET = 0
    NEUMANN = 1
    ROBIN = 2
    INTERFACE = 3


@dataclass(frozen=True)
class FacetRef:
    """Read-only view of one facet."""

    index: int
    axis: int
    cells: tuple[int, int]  # (lower, upper); -1 when missing
    area: float
    exterior: bool
    bc: BCKind | None
    hperp: float  # owning-cell extent along the facet normal (exterior only)


class TensorGrid:
    """Cartesian tensor mesh with per-cell materials and per-face BC kinds.

    Immutable after construction; refinement returns a new grid.
    """

    def __init__(
        self,
        axes: Sequence[np.ndarray],
        material_ids: np.ndarray,
        material_names: Sequence[str],
        face_bc: Mapping[tuple[int, int], BCKind],
    ):
        self.axes = tuple(np.asarray(t, dtype=float) for t in axes)
        self.dim = len(self.axes)
        if self.dim not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dim}")
        for a, t in enumerate(self.axes):
            if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError(f"axis {a}: breakpoints must be strictly increasing")
        self.shape = tuple(t.size - 1 for t in self.axes)
        self.n_cells = int(np.prod(self.shape))
        self.material_ids = np.asarray(material_ids, dtype=np.int64).ravel()
        if self.material_ids.size != self.n_cells:
            raise ValueError("material_ids size does not match cell count")
        self.material_names = tuple(material_names)
        if self.material_ids.size and (
            self.material_ids.min() < 0
            or self.material_ids.max() >= len(self.material_names)
        ):
            raise ValueError("material id out of range")
        self.face_bc = dict(face_bc)
        for a in range(self.dim):
            for side in (0, 1):
                if (a, side) not in self.face_bc:
                    raise ValueError(f"missing BC for face (axis={a}, side={side})")

    # -- cells ---------------------------------------------------------------

    @cached_property
    def widths(self) -> tuple[np.ndarray, ...]:
        return tuple(np.diff(t) for t in self.axes)

    @cached_property
    def cell_multi(self) -> np.ndarray:
        """(d, n_cells) multi-indices in flat C-order."""
        return np.indices(self.shape).reshape(self.dim, -1)

    @cached_property
    def cell_widths(self) -> np.ndarray:
        """(n_cells, d) extents."""
        return np.stack(
            [self.widths[a][self.cell_multi[a]] for a in range(self.dim)], axis=1
        )

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return self.cell_widths.prod(axis=1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return np.stack(
            [
                0.5
                * (
                    self.axes[a][self.cell_multi[a]]
                    + self.axes[a][self.cell_multi[a] + 1]
                )
                for a in range(self.dim)
            ],
            axis=1,
        )

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        """Euclidean diagonal of each cell."""
        return np.sqrt((self.cell_widths**2).sum(axis=1))

    @property
    def volume(self) -> float:
        return float(self.cell_volumes.sum())

    # -- facets ---------------------------------------------------------------

    def _facet_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.shape)
        s[axis] += 1
        return tuple(s)

    @cached_property
    def facet_offsets(self) -> np.ndarray:
        counts = [int(np.prod(self._facet_shape(a))) for a in range(self.dim)]
        return np.concatenate([[0], np.cumsum(counts)])

    @property
    def n_facets(self) -> int:
        return int(self.facet_offsets[-1])

    @cached_property
    def _facet_tables(self):
        """Flat facet arrays: axis, area, cells (lower/upper), bc, hperp."""
        d = self.dim
        axis = np.empty(self.n_facets, dtype=np.int64)
        area = np.empty(self.n_facets)
        cells = np.full((self.n_facets, 2), -1, dtype=np.int64)
        bc = np.full(self.n_facets, -1, dtype=np.int64)
        hperp = np.zeros(self.n_facets)
        for a in range(d):
            fshape = self._facet_shape(a)
            lo, hi = self.facet_offsets[a], self.facet_offsets[a + 1]
            axis[lo:hi] = a
            multi = np.indices(fshape).reshape(d, -1)
            trans_area = np.ones(hi - lo)
            for b in range(d):
                if b != a:
                    trans_area *= self.widths[b][multi[b]]
            area[lo:hi] = trans_area
            ia = multi[a]
            cm = multi.copy()
            cm[a] = np.clip(ia - 1, 0, self.shape[a] - 1)
            low_cell = np.ravel_multi_index(cm, self.shape)
            cells[lo:hi, 0] = np.where(ia >= 1, low_cell, -1)
            cm[a] = np.clip(ia, 0, self.shape[a] - 1)
            up_cell = np.ravel_multi_index(cm, self.shape)
            cells[lo:hi, 1] = np.where(ia <= self.shape[a] - 1, up_cell, -1)
            on_lo = ia == 0
            on_hi = ia == self.shape[a]
            bc_blk = bc[lo:hi]
            bc_blk[on_lo] = int(self.face_bc[(a, 0)])
            bc_blk[on_hi] = int(self.face_bc[(a, 1)])
            hp = hperp[lo:hi]
            hp[on_lo] = self.widths[a][0]
            hp[on_hi] = self.widths[a][-1]
        return axis, area, cells, bc, hperp

    @property
    def facet_axis(self) -> np.ndarray:
        return self._facet_tables[0]

    @property
    def facet_area(self) -> np.ndarray:
        return self._facet_tables[1]

    @property
    def facet_cells(self) -> np.ndarray:
        return self._facet_tables[2]

    @property
    def facet_bc(self) -> np.ndarray:
        """BC kind per facet as int; -1 for interior facets."""
        return self._facet_tables[3]

    @property
    def facet_hperp(self) -> np.ndarray:
        return self._facet_tables[4]

    @cached_property
    def facet_exterior(self) -> np.ndarray:
        return self.facet_bc >= 0

    @cached_property
    def facet_owner(self) -> np.ndarray:
        """Owning cell of each exterior facet (-1 for interior)."""
        cells = self.facet_cells
        return np.where(
            self.facet_exterior, np.where(cells[:, 0] >= 0, cells[:, 0], cells[:, 1]), -1
        )

    @cached_property
    def cell_facets(self) -> np.ndarray:
        """(n_cells, d, 2) facet ids; [:, a, 0] lower, [:, a, 1] upper."""
        d = self.dim
        out = np.empty((self.n_cells, d, 2), dtype=np.int64)
        multi = self.cell_multi
        for a in range(d):
            fshape = self._facet_shape(a)
            m = multi.copy()
            out[:, a, 0] = np.ravel_multi_index(m, fshape) + self.facet_offsets[a]
            m[a] = multi[a] + 1
            out[:, a, 1] = np.ravel_multi_index(m, fshape) + self.facet_offsets[a]
        return out

    def facet(self, index: int) -> FacetRef:
        ext = bool(self.facet_exterior[index])
        return FacetRef(
            index=index,
            axis=int(self.facet_axis[index]),
            cells=tuple(int(c) for c in self.facet_cells[index]),
            area=float(self.facet_area[index]),
            exterior=ext,
            bc=BCKind(int(self.facet_bc[index])) if ext else None,
            hperp=float(self.facet_hperp[index]),
        )

    def boundary_facets(self, kind: BCKind | None = None) -> np.ndarray:
        if kind is None:
            return np.nonzero(self.facet_exterior)[0]
        return np.nonzero(self.facet_bc == int(kind))[0]

    def facet_index(self, axis: int, multi: np.ndarray) -> np.ndarray:
        """Global facet ids from multi-indices (d, n) in the axis block."""
        return (
            np.ravel_multi_index(multi, self._facet_shape(axis))
            + self.facet_offsets[axis]
        )

    # -- vertices --------------------------------------------------------------

    @cached_property
    def vertex_shape(self) -> tuple[int, ...]:
        return tuple(s + 1 for s in self.shape)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.vertex_shape))

    @cached_property
    def vertex_coords(self) -> np.ndarray:
        multi = np.indices(self.vertex_shape).reshape(self.dim, -1)
        return np.stack([self.axes[a][multi[a]] for a in range(self.dim)], axis=1)

    @cached_property
    def cell_vertices(self) -> np.ndarray:
        """(n_cells, 2^d) vertex ids; corner bit a set means upper along axis a."""
        d = self.dim
        multi = self.cell_multi
        out = np.empty((self.n_cells, 2**d), dtype=np.int64)
        for corner in range(2**d):
            m = multi.copy()
            for a in range(d):
                if (corner >> a) & 1:
                    m[a] = multi[a] + 1
            out[:, corner] = np.ravel_multi_index(m, self.vertex_shape)
        return out

    @cached_property
    def facet_vertices(self) -> np.ndarray:
        """(n_facets, 2^(d-1)) vertex ids of each facet's corners."""
        d = self.dim
        out = np.empty((self.n_facets, 2 ** (d - 1)), dtype=np.int64)
        for a in range(d):
            fshape = self._facet_shape(a)
            lo, hi = self.facet_offsets[a], self.facet_offsets[a + 1]
            multi = np.indices(fshape).reshape(d, -1)
            trans = [b for b in range(d) if b != a]
            for corner in range(2 ** (d - 1)):
                m = multi.copy()
                for bi, b in enumerate(trans):
                    if (corner >> bi) & 1:
                        m[b] = multi[b] + 1
                out[lo:hi, corner] = np.ravel_multi_index(m, self.vertex_shape)
        return out

    def vertices_on_face(self, axis: int, side: int) -> np.ndarray:
        """Vertex ids lying on the domain face (axis, side)."""
        multi = np.indices(self.vertex_shape).reshape(self.dim, -1)
        target = 0 if side == 0 else self.shape[axis]
        return np.nonzero(multi[axis] == target)[0]

    def vertices_on_bc(self, kind: BCKind) -> np.ndarray:
        ids: list[np.ndarray] = []
        for (a, side), k in self.face_bc.items():
            if k == kind:
                ids.append(self.vertices_on_face(a, side))
        if not ids:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(ids))

    # -- point location ----------------------------------------------------------

    def locate_cells(self, point: Sequence[float]) -> list[int]:
        """All cells whose closure contains the point (empty if outside)."""
        ranges: list[list[int]] = []
        for a in range(self.dim):
            t = self.axes[a]
            x = point[a]
            if x < t[0] - _TOL or x > t[-1] + _TOL:
                return []
            i = int(np.searchsorted(t, x, side="right")) - 1
            opts = set()
            for j in (i - 1, i, min(i, self.shape[a] - 1)):
                if 0 <= j < self.shape[a] and t[j] - _TOL <= x <= t[j + 1] + _TOL:
                    opts.add(j)
            ranges.append(sorted(opts))
        cells = []
        for multi in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(self.dim, -1).T:
            cells.append(int(np.ravel_multi_index(multi, self.shape)))
        return cells


def cell_neighbors(grid: TensorGrid, cell: int) -> np.ndarray:
    """N(K): the cell itself plus all facet-sharing cells, sorted."""
    multi = np.array(np.unravel_index(cell, grid.shape))
    out = [cell]
    for a in range(grid.dim):
        for step in (-1, 1):
            m = multi.copy()
            m[a] += step
            if 0 <= m[a] < grid.shape[a]:
                out.append(int(np.ravel_multi_index(m, grid.shape)))
    return np.array(sorted(out), dtype=np.int64)


def refine_slabs(grid: TensorGrid, marked: Mapping[int, Iterable[int]]) -> TensorGrid:
    """Bisect the marked coordinate intervals (whole slabs of cells).

    Child cells inherit their parent's material; face BC kinds carry over
    unchanged.  Unmarked axes are untouched.
    """
    new_axes = []
    reps = []
    for a in range(grid.dim):
        marks = sorted(set(marked.get(a, ())))
        t = grid.axes[a]
        for i in marks:
            if not 0 <= i < grid.shape[a]:
                raise ValueError(f"axis {a}: interval index {i} out of range")
        ticks = []
        rep = np.ones(grid.shape[a], dtype=np.int64)
        mark_set = set(marks)
        for i in range(grid.shape[a]):
            ticks.append(t[i])
            if i in mark_set:
                ticks.append(0.5 * (t[i] + t[i + 1]))
                rep[i] = 2
        ticks.append(t[-1])
        new_axes.append(np.array(ticks))
        reps.append(rep)
    mat = grid.material_ids.reshape(grid.shape)
    for a in range(grid.dim):
        mat = np.repeat(mat, reps[a], axis=a)
    return TensorGrid(
        axes=new_axes,
        material_ids=mat.ravel(),
        material_names=grid.material_names,
        face_bc=grid.face_bc,
    )


def _merge_ticks(base: np.ndarray, extra: Iterable[float], span: float) -> np.ndarray:
    ticks = np.union1d(base, np.asarray(list(extra), dtype=float))
    keep = [ticks[0]]
    for v in ticks[1:]:
        if v - keep[-1] > 1e-9 * span:
            keep.append(v)
        # near-duplicates collapse onto the earlier tick
    return np.array(keep)


def build_grid(
    domain: Sequence[tuple[float, float]],
    cells: Sequence[int] | None = None,
    breakpoints: Sequence[Sequence[float]] | None = None,
    regions: Sequence[tuple[Sequence[tuple[float, float]], str]] = (),
    default_material: str = "default",
    face_bc: Mapping[tuple[int, int], BCKind] | None = None,
    augment: bool = True,
) -> TensorGrid:
    """Build a grid over an axis-aligned box with box-wise material regions.

    Regions are applied in order (later entries override earlier ones);
    uncovered cells get the default material.  Region edges strictly inside
    the domain are added as breakpoints when ``augment`` is set, otherwise
    they must already be present.
    """
    d = len(domain)
    if face_bc is None:
        face_bc = {(a, s): BCKind.ROBIN for a in range(d) for s in (0, 1)}
    if (cells is None) == (breakpoints is None):
        raise ValueError("give exactly one of cells or breakpoints")
    axes = []
    for a in range(d):
        lo, hi = float(domain[a][0]), float(domain[a][1])
        span = hi - lo
        if cells is not None:
            base = np.linspace(lo, hi, int(cells[a]) + 1)
        else:
            base = np.asarray(breakpoints[a], dtype=float)
            if abs(base[0] - lo) > 1e-12 * max(1.0, abs(lo)) or abs(
                base[-1] - hi
            ) > 1e-12 * max(1.0, abs(hi)):
                raise ValueError(f"axis {a}: breakpoints do not span the domain")
        edges = []
        for box, _name in regions:
            for v in (float(box[a][0]), float(box[a][1])):
                if lo + 1e-9 * span < v < hi - 1e-9 * span:
                    edges.append(v)
        if augment:
            axes.append(_merge_ticks(base, edges, span))
        else:
            for v in edges:
                if np.min(np.abs(base - v)) > 1e-9 * span:
                    raise MisalignedRegionError(
                        f"region edge {v} not on a breakpoint of axis {a}"
                    )
            axes.append(base)
    names = [default_material]
    for _box, name in regions:
        if name not in names:
            names.append(name)
    grid_shape = tuple(t.size - 1 for t in axes)
    centers = np.stack(
        [
            0.5
            * (
                axes[a][np.indices(grid_shape).reshape(d, -1)[a]]
                + axes[a][np.indices(grid_shape).reshape(d, -1)[a] + 1]
            )
            for a in range(d)
        ],
        axis=1,
    )
    mat = np.zeros(int(np.prod(grid_shape)), dtype=np.int64)
    for box, name in regions:
        inside = np.ones(mat.shape, dtype=bool)
        for a in range(d):
            inside &= (centers[:, a] > box[a][0]) & (centers[:, a] < box[a][1])
        mat[inside] = names.index(name)
    return TensorGrid(
        axes=axes, material_ids=mat, material_names=names, face_bc=face_bc
    )


# -- subdomain layouts ------------------------------------------------------------


@dataclass(frozen=True)
class Interface:
    """Planar interface between two subdomains, normal to one axis.

    ``span`` lists the (lo, hi) extents over the transverse axes in
    increasing axis order; ``lower`` is the subdomain on the negative side.
    """

    i: int
    j: int
    axis: int
    coord: float
    span: tuple[tuple[float, float], ...]
    lower: int

    @property
    def upper(self) -> int:
        return self.j if self.lower == self.i else self.i

    @property
    def area(self) -> float:
        return math.prod(hi - lo for lo, hi in self.span)


@dataclass
class SubdomainLayout:
    """Axis-aligned boxes tiling the domain, each carrying its own grid."""

    domain: tuple[tuple[float, float], ...]
    boxes: tuple[tuple[tuple[float, float], ...], ...]
    subdomains: list[TensorGrid]
    interfaces: list[Interface]

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def n_cells(self) -> int:
        return sum(g.n_cells for g in self.subdomains)

    def with_grids(self, grids: Sequence[TensorGrid]) -> "SubdomainLayout":
        return SubdomainLayout(
            domain=self.domain,
            boxes=self.boxes,
            subdomains=list(grids),
            interfaces=self.interfaces,
        )


def _boxes_tile(domain, boxes) -> None:
    d = len(domain)
    vol = math.prod(hi - lo for lo, hi in domain)
    total = 0.0
    for box in boxes:
        for a in range(d):
            if box[a][0] < domain[a][0] - _TOL or box[a][1] > domain[a][1] + _TOL:
                raise LayoutError("subdomain box escapes the domain")
        total += math.prod(hi - lo for lo, hi in box)
    if abs(total - vol) > 1e-12 * vol:
        raise LayoutError("subdomain boxes do not tile the domain (volume mismatch)")
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            overlap = 1.0
            for a in range(d):
                lo = max(boxes[i][a][0], boxes[j][a][0])
                hi = min(boxes[i][a][1], boxes[j][a][1])
                overlap *= max(0.0, hi - lo)
            if overlap > 1e-12 * vol:
                raise LayoutError(f"subdomains {i} and {j} overlap")


def _find_interfaces(boxes, d: int) -> list[Interface]:
    out = []
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            for a in range(d):
                for lower, upper in ((i, j), (j, i)):
                    if abs(boxes[lower][a][1] - boxes[upper][a][0]) > _TOL:
                        continue
                    span = []
                    ok = True
                    for b in range(d):
                        if b == a:
                            continue
                        lo = max(boxes[i][b][0], boxes[j][b][0])
                        hi = min(boxes[i][b][1], boxes[j][b][1])
                        if hi - lo <= _TOL:
                            ok = False
                            break
                        span.append((lo, hi))
                    if ok:
                        out.append(
                            Interface(
                                i=i,
                                j=j,
                                axis=a,
                                coord=float(boxes[lower][a][1]),
                                span=tuple(span),
                                lower=lower,
                            )
                        )
    return out


def build_layout(
    domain: Sequence[tuple[float, float]],
    boxes: Sequence[Sequence[tuple[float, float]]],
    cells: Sequence[Sequence[int]],
    regions: Sequence[tuple[Sequence[tuple[float, float]], str]] = (),
    default_material: str = "default",
    face_bc: Mapping[tuple[int, int], BCKind] | None = None,
) -> SubdomainLayout:
    """Tile the domain with boxes and mesh each of them independently.

    Subdomain faces on the global boundary inherit the global BC kind;
    faces interior to the domain are tagged INTERFACE.
    """
    d = len(domain)
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    boxes = tuple(tuple((float(lo), float(hi)) for lo, hi in box) for box in boxes)
    if face_bc is None:
        face_bc = {(a, s): BCKind.ROBIN for a in range(d) for s in (0, 1)}
    _boxes_tile(domain, boxes)
    grids = []
    for box, nc in zip(boxes, cells):
        bc = {}
        for a in range(d):
            for side in (0, 1):
                coord = box[a][side]
                if abs(coord - domain[a][side]) <= _TOL:
                    bc[(a, side)] = face_bc[(a, side)]
                else:
                    bc[(a, side)] = BCKind.INTERFACE
        sub_regions = [
            (box_r, name)
            for box_r, name in regions
            if all(
                max(box_r[a][0], box[a][0]) < min(box_r[a][1], box[a][1]) - _TOL
                for a in range(d)
            )
        ]
        grids.append(
            build_grid(
                domain=box,
                cells=nc,
                regions=sub_regions,
                default_material=default_material,
                face_bc=bc,
            )
        )
    # all subdomain grids must share one material table
    names = [default_material]
    for _box, name in regions:
        if name not in names:
            names.append(name)
    unified = []
    for g in grids:
        remap = np.array([names.index(n) for n in g.material_names], dtype=np.int64)
        unified.append(
            TensorGrid(
                axes=g.axes,
                material_ids=remap[g.material_ids],
                material_names=names,
                face_bc=g.face_bc,
            )
        )
    return SubdomainLayout(
        domain=domain,
        boxes=boxes,
        subdomains=unified,
        interfaces=_find_interfaces(boxes, d),
    )


@dataclass
class InterfaceMesh:
    """Common refinement (overlay) of the two facet partitions on an interface.

    Patches are the tensor cells of the per-axis unions of both sides'
    breakpoints.  ``parents[side]`` maps every patch to the boundary facet
    of that side's grid containing it, and ``signs[side]`` is +1/-1
    according to whether the side's outward normal agrees with the global
    facet orientation (+e_axis).
    """

    interface: Interface
    ticks: tuple[np.ndarray, ...]
    patch_areas: np.ndarray
    parents: dict[int, np.ndarray]
    signs: dict[int, float]

    @property
    def n_patches(self) -> int:
        return self.patch_areas.size

    @property
    def area(self) -> float:
        return float(self.patch_areas.sum())

    def side_facets(self, side: int) -> tuple[np.ndarray, np.ndarray]:
        """Unique parent facet ids of one side and the patch->local map."""
        uniq, inv = np.unique(self.parents[side], return_inverse=True)
        return uniq, inv


def _restrict_ticks(ticks: np.ndarray, lo: float, hi: float, what: str) -> np.ndarray:
    scale = max(abs(lo), abs(hi), 1.0)
    sel = ticks[(ticks >= lo - _TOL * scale) & (ticks <= hi + _TOL * scale)]
    if sel.size < 2 or abs(sel[0] - lo) > _TOL * scale or abs(sel[-1] - hi) > _TOL * scale:
        raise LayoutError(f"{what}: grid does not restrict to the interface box")
    return sel


def overlay_traces(layout: SubdomainLayout, interface: Interface) -> InterfaceMesh:
    """Build the overlay mesh of an interface with back-maps to both sides."""
    d = len(layout.domain)
    trans_axes = [b for b in range(d) if b != interface.axis]
    side_ticks: dict[int, list[np.ndarray]] = {}
    for side in (interface.lower, interface.upper):
        grid = layout.subdomains[side]
        side_ticks[side] = [
            _restrict_ticks(
                grid.axes[b], lo, hi, f"interface ({interface.i},{interface.j})"
            )
            for b, (lo, hi) in zip(trans_axes, interface.span)
        ]
    union = [
        np.union1d(side_ticks[interface.lower][k], side_ticks[interface.upper][k])
        for k in range(len(trans_axes))
    ]
    widths = [np.diff(u) for u in union]
    patch_shape = tuple(w.size for w in widths)
    multi = np.indices(patch_shape).reshape(len(trans_axes), -1)
    areas = np.ones(multi.shape[1])
    centers = []
    for k in range(len(trans_axes)):
        areas *= widths[k][multi[k]]
        centers.append(0.5 * (union[k][multi[k]] + union[k][multi[k] + 1]))
    parents = {}
    signs = {}
    for side in (interface.lower, interface.upper):
        grid = layout.subdomains[side]
        is_lower = side == interface.lower
        # facet plane index along the normal axis within this grid
        plane = grid.shape[interface.axis] if is_lower else 0
        fmulti = np.empty((d, multi.shape[1]), dtype=np.int64)
        fmulti[interface.axis] = plane
        for k, b in enumerate(trans_axes):
            fmulti[b] = np.searchsorted(grid.axes[b], centers[k], side="right") - 1
        parents[side] = grid.facet_index(interface.axis, fmulti)
        signs[side] = 1.0 if is_lower else -1.0
    return InterfaceMesh(
        interface=interface,
        ticks=tuple(union),
        patch_areas=areas,
        parents=parents,
        signs=signs,
    )
