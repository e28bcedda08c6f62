"""DD+L2-jumps multi-domain discretization.

Each subdomain carries its own RTN0 x Q0 system with free interface
facets; weak normal-flux continuity is enforced through interface
multipliers living in M_h = T_i,h + T_j,h, the sum of the two facet-trace
spaces on the interface overlay.  The coupled form adds

    + int_Gamma [p.n] m  -  int_Gamma [q.n] l

to the sum of the subdomain forms.  Because the overlay refines both
parent partitions, the projections Pi_i of the side traces into M_h are
plain injections, the discrete jump equals the true jump patch-wise, and
the solved flux is jump-free up to the solver residual.

M_h is realized by an L2-orthonormal patch-value basis of the span of
both sides' facet indicators (weighted SVD).  For matching interfaces and
for 1D interfaces this span is exactly the space of patch-wise constants;
for crossing-type nonmatching 2D interfaces it is a strict subspace, and
using the strict sum keeps the coupled system nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .coefficients import MatrixBundle
from .errors import LayoutError
from .fem import (
    AssembledSystem,
    CellCoefficients,
    MixedField,
    assemble_mono,
    sparse_direct_solve,
    unpack_solution,
)
from .mesh import InterfaceMesh, SubdomainLayout, overlay_traces

__all__ = [
    "MultiplierSpace",
    "MultiDomainSolution",
    "DdmSystem",
    "build_multiplier_space",
    "project_trace_to_multiplier",
    "project_multiplier_to_trace",
    "discrete_jump",
    "assemble_ddm",
    "solve_ddm",
    "check_jump_free",
    "check_interface_assumption",
]


@dataclass
class MultiplierSpace:
    """Overlay meshes plus a basis of M_h per interface.

    ``bases[k]`` has shape (n_patches, n_mult): columns are patch-value
    vectors of an L2(Gamma)-orthonormal basis of T_i,h + T_j,h.
    """

    layout: SubdomainLayout
    meshes: list[InterfaceMesh]
    bases: list[np.ndarray]

    @property
    def n_mult(self) -> int:
        return sum(z.shape[1] for z in self.bases)

    def side_indicator(self, k: int, side: int) -> tuple[np.ndarray, np.ndarray]:
        """(C, facet_ids): C[patch, local_facet] = 1 if patch in facet."""
        mesh = self.meshes[k]
        uniq, inv = mesh.side_facets(side)
        C = np.zeros((mesh.n_patches, uniq.size))
        C[np.arange(mesh.n_patches), inv] = 1.0
        return C, uniq


def build_multiplier_space(layout: SubdomainLayout) -> MultiplierSpace:
    meshes = [overlay_traces(layout, itf) for itf in layout.interfaces]
    bases = []
    for mesh in meshes:
        cols = []
        for side in (mesh.interface.lower, mesh.interface.upper):
            _uniq, inv = mesh.side_facets(side)
            n = inv.max() + 1
            C = np.zeros((mesh.n_patches, n))
            C[np.arange(mesh.n_patches), inv] = 1.0
            cols.append(C)
        C = np.hstack(cols)
        sw = np.sqrt(mesh.patch_areas)
        U, s, _vt = np.linalg.svd(sw[:, None] * C, full_matrices=False)
        rank = int((s > 1e-10 * s[0]).sum())
        bases.append(U[:, :rank] / sw[:, None])
    return MultiplierSpace(layout=layout, meshes=meshes, bases=bases)


def project_trace_to_multiplier(
    space: MultiplierSpace, k: int, side: int, trace: np.ndarray
) -> np.ndarray:
    """Pi_side: facet-trace values (..., n_side_facets) -> patch values.

    The overlay refines the parent partition, so the projection is the
    injection: each patch inherits its parent facet's value.
    """
    _uniq, inv = space.meshes[k].side_facets(side)
    return np.asarray(trace)[..., inv]


def project_multiplier_to_trace(
    space: MultiplierSpace, k: int, side: int, patch_values: np.ndarray
) -> np.ndarray:
    """pi_side: patch values (..., n_patches) -> area-weighted facet means."""
    mesh = space.meshes[k]
    _uniq, inv = mesh.side_facets(side)
    w = mesh.patch_areas
    n = int(inv.max()) + 1
    patch_values = np.asarray(patch_values, dtype=float)
    single = patch_values.ndim == 1
    pv = np.atleast_2d(patch_values)
    den = np.zeros(n)
    np.add.at(den, inv, w)
    num = np.zeros((pv.shape[0], n))
    for i in range(pv.shape[0]):
        np.add.at(num[i], inv, pv[i] * w)
    out = num / den[None, :]
    return out[0] if single else out


def discrete_jump(
    space: MultiplierSpace, k: int, trace_lower: np.ndarray, trace_upper: np.ndarray
) -> np.ndarray:
    """Patch values of [p.n] from outward-normal traces of both sides.

    Both the discrete jump and the true jump coincide patch-wise here
    because the side projections are injections.
    """
    mesh = space.meshes[k]
    lo = project_trace_to_multiplier(space, k, mesh.interface.lower, trace_lower)
    up = project_trace_to_multiplier(space, k, mesh.interface.upper, trace_upper)
    return lo + up


@dataclass
class DdmSystem:
    matrix: sp.csc_matrix
    rhs: np.ndarray
    sub_systems: list[AssembledSystem]
    offsets: list[int]
    mult_offset: int
    space: MultiplierSpace
    nc: int


@dataclass
class MultiDomainSolution:
    fields: list[MixedField]
    multipliers: list[np.ndarray]  # (nc, n_mult_k) coefficients per interface
    space: MultiplierSpace

    def multiplier_patch_values(self, k: int) -> np.ndarray:
        """(nc, n_patches) values of l_h on the overlay patches."""
        return self.multipliers[k] @ self.space.bases[k].T


def assemble_ddm(
    layout: SubdomainLayout,
    bundles: Mapping[str, MatrixBundle],
    sources: Sequence[np.ndarray],
    space: MultiplierSpace | None = None,
    coeffs_list: Sequence[CellCoefficients] | None = None,
) -> DdmSystem:
    """Couple the per-subdomain mono blocks through interface multipliers."""
    if space is None:
        space = build_multiplier_space(layout)
    if coeffs_list is None:
        coeffs_list = [CellCoefficients(g, bundles) for g in layout.subdomains]
    subs = [
        assemble_mono(g, bundles, src, coeffs=cf)
        for g, src, cf in zip(layout.subdomains, sources, coeffs_list)
    ]
    nc = subs[0].layout.nc
    offsets = []
    pos = 0
    for s in subs:
        offsets.append(pos)
        pos += s.layout.size
    mult_offset = pos
    mult_pos = []
    for z in space.bases:
        mult_pos.append(pos)
        pos += nc * z.shape[1]
    size = pos

    rows, cols, vals = [], [], []
    for s, off in zip(subs, offsets):
        coo = s.matrix.tocoo()
        rows.append(coo.row + off)
        cols.append(coo.col + off)
        vals.append(coo.data)

    for k, mesh in enumerate(space.meshes):
        Z = space.bases[k]
        m = Z.shape[1]
        W = mesh.patch_areas
        for side in (mesh.interface.lower, mesh.interface.upper):
            C, uniq = space.side_indicator(k, side)
            sign = mesh.signs[side]
            # int over Gamma of 1_F z_k, scaled by the side's outward sign
            M = sign * (Z.T @ (W[:, None] * C))  # (m, n_side_facets)
            sub = subs[side]
            act = sub.layout.facet_to_active[uniq]
            if np.any(act < 0):
                raise LayoutError("interface facet unexpectedly eliminated")
            mi, fi = np.nonzero(np.abs(M) > 0)
            data = M[mi, fi]
            for c in range(nc):
                prow = offsets[side] + c * sub.layout.n_active + act[fi]
                lrow = mult_pos[k] + c * m + mi
                # + int [p.n] m   (multiplier test rows)
                rows.append(lrow)
                cols.append(prow)
                vals.append(data)
                # - int [q.n] l   (flux test rows)
                rows.append(prow)
                cols.append(lrow)
                vals.append(-data)

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsc()
    rhs = np.zeros(size)
    for s, off in zip(subs, offsets):
        rhs[off : off + s.layout.size] = s.rhs
    return DdmSystem(
        matrix=matrix,
        rhs=rhs,
        sub_systems=subs,
        offsets=offsets,
        mult_offset=mult_offset,
        space=space,
        nc=nc,
    )


def solve_ddm(system: DdmSystem, rtol: float = 1e-10) -> MultiDomainSolution:
    x = sparse_direct_solve(system.matrix, system.rhs, rtol=rtol)
    fields = []
    for s, off in zip(system.sub_systems, system.offsets):
        fields.append(unpack_solution(s.layout, x[off : off + s.layout.size]))
    multipliers = []
    pos = system.mult_offset
    for z in system.space.bases:
        m = z.shape[1]
        multipliers.append(x[pos : pos + system.nc * m].reshape(system.nc, m).copy())
        pos += system.nc * m
    return MultiDomainSolution(
        fields=fields, multipliers=multipliers, space=system.space
    )


def _side_traces(
    space: MultiplierSpace, sol: MultiDomainSolution, k: int, side: int
) -> np.ndarray:
    """Outward-normal traces (nc, n_side_facets) of one side's solution."""
    mesh = space.meshes[k]
    uniq, _inv = mesh.side_facets(side)
    return mesh.signs[side] * sol.fields[side].p[:, uniq]


def check_jump_free(sol: MultiDomainSolution) -> tuple[float, float]:
    """(max |[p.n]| over patches/components, max |trace|) for scaling."""
    space = sol.space
    worst = 0.0
    scale = 0.0
    for k, mesh in enumerate(space.meshes):
        lo = _side_traces(space, sol, k, mesh.interface.lower)
        up = _side_traces(space, sol, k, mesh.interface.upper)
        jump = discrete_jump(space, k, lo, up)
        if jump.size:
            worst = max(worst, float(np.abs(jump).max()))
            scale = max(scale, float(np.abs(lo).max()), float(np.abs(up).max()))
    return worst, scale


def _restricted_min_eig(num: np.ndarray, den: np.ndarray, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of the pencil (num, den) on range(den)."""
    w, V = np.linalg.eigh(den)
    keep = w > tol * max(w.max(), 1e-300)
    if not keep.any():
        return np.inf
    B = V[:, keep] / np.sqrt(w[keep])[None, :]
    return float(np.linalg.eigvalsh(B.T @ num @ B).min())


def check_interface_assumption(space: MultiplierSpace) -> tuple[float, float]:
    """Numerical (beta_h, gamma_h) over all interfaces.

    beta_h: smallest Rayleigh quotient of int [q]_h [q] against int [q]^2
    over the interface trace dofs (jump-free directions excluded).
    gamma_h: smallest Rayleigh quotient of sum_sides ||pi_side m||^2
    against ||m||_M^2 over M_h.
    """
    beta = np.inf
    gamma = np.inf
    for k, mesh in enumerate(space.meshes):
        Z = space.bases[k]
        W = mesh.patch_areas
        sides = (mesh.interface.lower, mesh.interface.upper)
        Cs = []
        for side in sides:
            C, _uniq = space.side_indicator(k, side)
            Cs.append(mesh.signs[side] * C)
        J = np.hstack(Cs)  # tau -> patch values of [q.n]
        PM = Z @ (Z.T * W[None, :])  # L2 projection onto M_h in patch coords
        den = J.T @ (W[:, None] * J)
        num = J.T @ (W[:, None] * (PM @ J))
        num = 0.5 * (num + num.T)
        beta = min(beta, _restricted_min_eig(num, den))
        # gamma over the orthonormal basis of M_h
        Q = np.zeros((Z.shape[1], Z.shape[1]))
        for side in sides:
            C, _uniq = space.side_indicator(k, side)
            areas = (W[:, None] * C).sum(axis=0)
            Pi = (C.T * W[None, :]) @ Z / areas[:, None]  # facet means of z_k
            Q += Pi.T @ (areas[:, None] * Pi)
        gamma = min(gamma, float(np.linalg.eigvalsh(0.5 * (Q + Q.T)).min()))
    return beta, gamma
