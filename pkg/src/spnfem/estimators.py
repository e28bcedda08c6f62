"""A posteriori error estimators and the local dual-norm oracle.

Per cell K and Robin facet F the three estimators are

    eta_r_K  = || de^-1/2 (S_f - H^T div p_h - Te phi~) ||_{0,K}
    eta_f_K  = || do^-1/2 (To p_h + H grad phi~) ||_{0,K}
    eta_bc_F = (do_max_KF h_perp_F)^-1/2 || Gt^-1/2 (H phi~ - Gt (p_h.n)) ||_{0,F}

with de/do the diagonal parts of Te/To and phi~ the conforming Q1
reconstruction.  All integrands are polynomial of degree at most two per
axis, so the order-2 tensor Gauss rule used here is exact.

The aggregated local indicator is

    eta_K^2 = eta_r_K^2 + sum_{K' in N(K)} eta_f_K'^2
            + sum_{F in dK inter Gamma_V} eta_bc_F^2,

where N(K) is K plus its facet neighbors; on subdomain grids the neighbor
set is automatically restricted to the subdomain (the DDM variant).

``approximate_local_dual_norm`` maximizes the residual functional of the
reconstructed solution over a refined discrete test subspace supported on
the patch N(K) (scalar part on K only), normalized in the strengthened
norm.  The maximum of a linear functional over the unit ball of an SPD
Gram matrix G is sqrt(R^T G^-1 R); nested refinements give monotone lower
bounds of the true local dual norm.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import AssumptionViolationError, ConfigurationError
from .fem import MASS_REF, CellCoefficients, MixedField
from .mesh import BCKind, SubdomainLayout, TensorGrid, cell_neighbors
from .reconstruction import NodalFluxField

__all__ = [
    "EstimatorField",
    "residual_estimator",
    "flux_estimator",
    "robin_bc_estimator",
    "delta_star_residual",
    "local_indicator",
    "compute_estimators",
    "approximate_local_dual_norm",
]

_G1 = 0.5 - 0.5 / np.sqrt(3.0)
_G2 = 0.5 + 0.5 / np.sqrt(3.0)


def _tensor_rule(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Order-2 Gauss points/weights on the unit cube of given dimension."""
    pts_1d = np.array([_G1, _G2])
    pts = np.array(list(itertools.product(pts_1d, repeat=dim)))
    wts = np.full(pts.shape[0], 0.5**dim)
    return pts, wts


def _corner_shapes(pts: np.ndarray) -> np.ndarray:
    """N[pt, corner] for multilinear corners, bit a of corner = upper on axis a."""
    npts, dim = pts.shape
    out = np.ones((npts, 2**dim))
    for corner in range(2**dim):
        for a in range(dim):
            xi = pts[:, a]
            out[:, corner] *= xi if (corner >> a) & 1 else 1.0 - xi
    return out


def _corner_shape_grads(pts: np.ndarray) -> np.ndarray:
    """dN[pt, corner, axis] on the unit cube."""
    npts, dim = pts.shape
    out = np.ones((npts, 2**dim, dim))
    for corner in range(2**dim):
        for a in range(dim):
            for b in range(dim):
                xi = pts[:, b]
                if b == a:
                    out[:, corner, a] *= 1.0 if (corner >> b) & 1 else -1.0
                else:
                    out[:, corner, a] *= xi if (corner >> b) & 1 else 1.0 - xi
    return out


def residual_estimator(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    source: np.ndarray,
    field: MixedField,
    recon: NodalFluxField,
    star: bool = False,
) -> np.ndarray:
    """Per-cell residual estimator; ``star`` switches to the delta_star
    weight that degrades gracefully when Te vanishes on a cell."""
    if star:
        weight = coeffs.delta_star_cells
    else:
        weight = coeffs.delta_e_cells
        if np.any(weight <= 0.0):
            raise AssumptionViolationError(
                "delta_e vanishes on some cell; use delta_star_residual"
            )
    pts, wts = _tensor_rule(grid.dim)
    N = _corner_shapes(pts)
    V = recon.cell_corner_values()
    phi_q = np.einsum("mkc,pc->mkp", V, N)
    te_phi = np.einsum("knm,mkp->nkp", coeffs.Te_cells, phi_q)
    b = source - coeffs.Ht @ field.div
    resid = b[:, :, None] - te_phi
    sq = np.einsum("nkp,p->nk", resid**2, wts)
    vals = grid.cell_volumes[None, :] * sq / weight.T
    return np.sqrt(vals.sum(axis=0))


def delta_star_residual(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    source: np.ndarray,
    field: MixedField,
    recon: NodalFluxField,
) -> np.ndarray:
    return residual_estimator(grid, coeffs, source, field, recon, star=True)


def flux_estimator(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    field: MixedField,
    recon: NodalFluxField,
) -> np.ndarray:
    pts, wts = _tensor_rule(grid.dim)
    dN = _corner_shape_grads(pts)
    V = recon.cell_corner_values()
    grad_ref = np.einsum("mkc,pca->mkpa", V, dN)
    grad = grad_ref / grid.cell_widths[None, :, None, :]
    hg = np.einsum("nm,mkpa->nkpa", coeffs.H, grad)
    pvals = np.empty_like(hg)
    for a in range(grid.dim):
        lo, hi = field.axis_dofs(a)
        xi = pts[:, a]
        pvals[:, :, :, a] = (
            lo[:, :, None] * (1.0 - xi)[None, None, :]
            + hi[:, :, None] * xi[None, None, :]
        )
    v = np.einsum("knm,mkpa->nkpa", coeffs.To_cells, pvals) + hg
    sq = np.einsum("nkpa,p->nk", v**2, wts)
    vals = grid.cell_volumes[None, :] * sq / coeffs.delta_o_cells.T
    return np.sqrt(vals.sum(axis=0))


def _outward_sign(grid: TensorGrid, facets: np.ndarray) -> np.ndarray:
    return np.where(grid.facet_cells[facets, 0] >= 0, 1.0, -1.0)


def robin_bc_estimator(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    field: MixedField,
    recon: NodalFluxField,
) -> np.ndarray:
    """Per-facet Robin estimator; zero on facets outside Gamma_V."""
    out = np.zeros(grid.n_facets)
    robin = grid.boundary_facets(BCKind.ROBIN)
    if robin.size == 0:
        return out
    owner = grid.facet_owner[robin]
    mat = coeffs.mat_index[owner]
    pts, wts = _tensor_rule(grid.dim - 1)
    N = _corner_shapes(pts)
    Vf = recon.values[:, grid.facet_vertices[robin]]  # (nc, nR, 2^(d-1))
    phi_f = np.einsum("mfc,pc->mfp", Vf, N)
    h_phi = np.einsum("nm,mfp->nfp", coeffs.H, phi_f)
    trace = field.p[:, robin] * _outward_sign(grid, robin)[None, :]
    gtt = np.einsum("fnm,mf->nf", coeffs.Gt_mats[mat], trace)
    e = h_phi - gtt[:, :, None]
    quad = np.einsum("nfp,fnm,mfp->fp", e, coeffs.Gt_inv_mats[mat], e)
    weight = 1.0 / (coeffs.delta_o_max[mat] * grid.facet_hperp[robin])
    out[robin] = np.sqrt(weight * grid.facet_area[robin] * (quad @ wts))
    return out


def local_indicator(
    grid: TensorGrid,
    eta_r: np.ndarray,
    eta_f: np.ndarray,
    eta_bc: np.ndarray,
    mode: str = "mono",
    layout: SubdomainLayout | None = None,
) -> np.ndarray:
    """Aggregate eta_K per cell.  In ``ddm`` mode the grid must be one of
    the layout's subdomain grids, whose neighbor structure realizes the
    restricted set N*(K)."""
    if mode not in ("mono", "ddm"):
        raise ConfigurationError(f"unknown indicator mode {mode!r}")
    if mode == "ddm":
        if layout is None:
            raise ConfigurationError("ddm indicators require the subdomain layout")
        if not any(g is grid for g in layout.subdomains):
            raise ConfigurationError("grid is not part of the given layout")
    f2 = (eta_f**2).reshape(grid.shape)
    acc = f2.copy()
    for a in range(grid.dim):
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        padded = np.pad(f2, pad)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[a] = slice(0, grid.shape[a])
        hi[a] = slice(2, grid.shape[a] + 2)
        acc += padded[tuple(lo)] + padded[tuple(hi)]
    total = eta_r**2 + acc.ravel()
    robin = grid.boundary_facets(BCKind.ROBIN)
    if robin.size:
        np.add.at(total, grid.facet_owner[robin], eta_bc[robin] ** 2)
    return np.sqrt(total)


@dataclass
class EstimatorField:
    """All estimator values on one grid."""

    grid: TensorGrid
    eta_r: np.ndarray
    eta_f: np.ndarray
    eta_bc: np.ndarray
    eta_K: np.ndarray

    @property
    def total(self) -> float:
        """eta(T_h) = (sum_K eta_K^2)^(1/2), the marking aggregate."""
        return float(np.sqrt((self.eta_K**2).sum()))


def compute_estimators(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    source: np.ndarray,
    field: MixedField,
    recon: NodalFluxField,
    star: bool = False,
    mode: str = "mono",
    layout: SubdomainLayout | None = None,
) -> EstimatorField:
    eta_r = residual_estimator(grid, coeffs, source, field, recon, star=star)
    eta_f = flux_estimator(grid, coeffs, field, recon)
    eta_bc = robin_bc_estimator(grid, coeffs, field, recon)
    eta_K = local_indicator(grid, eta_r, eta_f, eta_bc, mode=mode, layout=layout)
    return EstimatorField(
        grid=grid, eta_r=eta_r, eta_f=eta_f, eta_bc=eta_bc, eta_K=eta_K
    )


# -- local dual-norm oracle --------------------------------------------------------


def approximate_local_dual_norm(
    grid: TensorGrid,
    coeffs: CellCoefficients,
    source: np.ndarray,
    field: MixedField,
    recon: NodalFluxField,
    cell: int,
    levels: int = 2,
) -> float:
    """Lower bound of the local dual norm |z - z~|_{+,K} on a refined patch.

    Test fields: RTN0/Q0 on the 2^levels-fold tensor refinement of N(K),
    with the scalar part supported on K, zero normal traces on the patch
    boundary and on exterior facets away from dK, and free traces on
    dK inter (Gamma_V, Gamma_D, interfaces).  The value is
    sqrt(R^T G^-1 R) for the residual functional R and the strengthened
    Gram G restricted to that subspace.
    """
    d = grid.dim
    nc = coeffs.nc
    r = 2**levels
    patch = cell_neighbors(grid, cell)
    npc = patch.size
    kloc = int(np.nonzero(patch == cell)[0][0])
    pmulti = np.array([np.unravel_index(int(k), grid.shape) for k in patch])
    multi_map = {tuple(m): i for i, m in enumerate(pmulti)}
    widths = grid.cell_widths[patch]
    lows = np.array(
        [[grid.axes[a][pmulti[i, a]] for a in range(d)] for i in range(npc)]
    )
    subw = widths / r
    subvol = subw.prod(axis=1)
    Te = coeffs.Te_cells[patch]
    To = coeffs.To_cells[patch]
    dstar = coeffs.delta_star_cells[patch]
    d_o = coeffs.delta_o_cells[patch]
    domax = coeffs.delta_o_max_cells[patch]
    hk2 = grid.cell_diameters[patch] ** 2
    Gt_K = coeffs.Gt_mats[coeffs.mat_index[cell]]
    corner_vals = recon.cell_corner_values()[:, patch]  # (nc, npc, 2^d)

    def phi_tilde(pc: int, u: np.ndarray) -> np.ndarray:
        """Reconstruction at unit coords u (npts, d) of patch cell pc."""
        return np.einsum("mc,pc->mp", corner_vals[:, pc], _corner_shapes(u))

    def grad_phi_tilde(pc: int, u: np.ndarray) -> np.ndarray:
        g = np.einsum("mc,pca->mpa", corner_vals[:, pc], _corner_shape_grads(u))
        return g / widths[pc][None, None, :]

    def p_vals(pc: int, u: np.ndarray) -> np.ndarray:
        """p_h at unit coords of patch cell pc, (nc, npts, d)."""
        out = np.empty((nc, u.shape[0], d))
        k = int(patch[pc])
        for a in range(d):
            lo = field.p[:, grid.cell_facets[k, a, 0]]
            hi = field.p[:, grid.cell_facets[k, a, 1]]
            out[:, :, a] = lo[:, None] * (1 - u[:, a])[None, :] + hi[:, None] * u[:, a][None, :]
        return out

    sub_shape = (r,) * d
    n_sub = r**d

    # enumerate refined facets; each gets a dict entry
    facets: list[dict] = []
    # (pc, sub_flat, axis, side) -> facet index
    slot: dict[tuple[int, int, int, int], int] = {}

    def classify_boundary(pc: int, a: int, cell_side: int):
        """Status of a refined facet lying on the original facet
        (patch[pc], a, cell_side).  Returns (free, robin_on_dK, orig_facet)."""
        f = int(grid.cell_facets[patch[pc], a, cell_side])
        if not grid.facet_exterior[f]:
            return False, False, f
        kind = int(grid.facet_bc[f])
        if pc != kloc or kind == int(BCKind.NEUMANN):
            return False, False, f
        return True, kind == int(BCKind.ROBIN), f

    for pc in range(npc):
        for sub_flat in range(n_sub):
            sm = np.array(np.unravel_index(sub_flat, sub_shape))
            for a in range(d):
                area = subvol[pc] / subw[pc, a]
                # upper facet
                if sm[a] < r - 1:
                    sm2 = sm.copy()
                    sm2[a] += 1
                    entry = dict(
                        axis=a, area=area, free=True, robin=False, orig=None,
                        lower=(pc, sub_flat), upper=(pc, int(np.ravel_multi_index(sm2, sub_shape))),
                    )
                else:
                    nb = tuple(pmulti[pc] + np.eye(d, dtype=int)[a])
                    if nb in multi_map:
                        pc2 = multi_map[nb]
                        sm2 = sm.copy()
                        sm2[a] = 0
                        entry = dict(
                            axis=a, area=area, free=True, robin=False, orig=None,
                            lower=(pc, sub_flat),
                            upper=(pc2, int(np.ravel_multi_index(sm2, sub_shape))),
                        )
                    else:
                        free, robin, forig = classify_boundary(pc, a, 1)
                        entry = dict(
                            axis=a, area=area, free=free, robin=robin, orig=forig,
                            lower=(pc, sub_flat), upper=None,
                        )
                idx = len(facets)
                facets.append(entry)
                slot[(pc, sub_flat, a, 1)] = idx
                if entry["upper"] is not None:
                    pc2, sf2 = entry["upper"]
                    slot[(pc2, sf2, a, 0)] = idx
                # lower facet only when nothing below will enumerate it
                if sm[a] == 0:
                    nb = tuple(pmulti[pc] - np.eye(d, dtype=int)[a])
                    if nb not in multi_map:
                        free, robin, forig = classify_boundary(pc, a, 0)
                        idx = len(facets)
                        facets.append(
                            dict(
                                axis=a, area=area, free=free, robin=robin,
                                orig=forig, lower=None, upper=(pc, sub_flat),
                            )
                        )
                        slot[(pc, sub_flat, a, 0)] = idx

    free_ids = [i for i, f in enumerate(facets) if f["free"]]
    fnum = {i: n for n, i in enumerate(free_ids)}
    n_q = len(free_ids) * nc
    ndof = n_q + n_sub * nc

    def qdof(fi: int, c: int) -> int:
        return fnum[fi] * nc + c

    def sdof(sub_flat: int, c: int) -> int:
        return n_q + sub_flat * nc + c

    G = np.zeros((ndof, ndof))
    R = np.zeros(ndof)
    pts, wts = _tensor_rule(d)

    src_K = source[:, cell]
    hdiv_K = coeffs.Ht @ field.div[:, cell]

    for pc in range(npc):
        for sub_flat in range(n_sub):
            sm = np.array(np.unravel_index(sub_flat, sub_shape))
            vol = subvol[pc]
            # subcell facet dofs and divergence coefficients
            fdofs = np.full((d, 2), -1, dtype=np.int64)
            coef = np.zeros((d, 2))
            for a in range(d):
                for side in (0, 1):
                    fi = slot[(pc, sub_flat, a, side)]
                    if facets[fi]["free"]:
                        fdofs[a, side] = fi
                    coef[a, side] = (1.0 if side else -1.0) * (vol / subw[pc, a]) / vol
            # (do q, q) per axis + div coupling, same component
            for c in range(nc):
                for a in range(d):
                    for s1 in (0, 1):
                        if fdofs[a, s1] < 0:
                            continue
                        i1 = qdof(fdofs[a, s1], c)
                        for s2 in (0, 1):
                            if fdofs[a, s2] < 0:
                                continue
                            i2 = qdof(fdofs[a, s2], c)
                            G[i1, i2] += d_o[pc, c] * vol * MASS_REF[s1, s2]
                for a1 in range(d):
                    for s1 in (0, 1):
                        if fdofs[a1, s1] < 0:
                            continue
                        i1 = qdof(fdofs[a1, s1], c)
                        for a2 in range(d):
                            for s2 in (0, 1):
                                if fdofs[a2, s2] < 0:
                                    continue
                                i2 = qdof(fdofs[a2, s2], c)
                                G[i1, i2] += (
                                    domax[pc] * hk2[pc] * vol
                                    * coef[a1, s1] * coef[a2, s2]
                                )
            # scalar block and residual on K
            if pc == kloc:
                center = (sm + 0.5) / r  # unit coords in the original cell
                phi_c = phi_tilde(pc, center[None, :])[:, 0]
                rval = src_K - hdiv_K - Te[pc] @ phi_c
                for c in range(nc):
                    si = sdof(sub_flat, c)
                    G[si, si] += dstar[pc, c] * vol
                    R[si] += vol * rval[c]
            # volume part of the q residual: -(To p_h + H grad phi~, w)
            u0 = sm / r
            upts = u0[None, :] + pts / r  # unit coords in original cell
            v = np.einsum("nm,mpa->npa", To[pc], p_vals(pc, upts)) + np.einsum(
                "nm,mpa->npa", coeffs.H, grad_phi_tilde(pc, upts)
            )
            for a in range(d):
                xi = pts[:, a]  # subcell-local coordinate along a
                for side, shape in ((0, 1.0 - xi), (1, xi)):
                    fi = fdofs[a, side]
                    if fi < 0:
                        continue
                    integ = vol * np.einsum("np,p->n", v[:, :, a] * shape[None, :], wts)
                    for c in range(nc):
                        R[qdof(fi, c)] -= integ[c]

    # boundary coupling: Robin subfacets of dK
    for fi in free_ids:
        fe = facets[fi]
        if not fe["robin"]:
            continue
        forig = fe["orig"]
        a = fe["axis"]
        hp = grid.facet_hperp[forig]
        area = fe["area"]
        for c1 in range(nc):
            for c2 in range(nc):
                G[qdof(fi, c1), qdof(fi, c2)] += (
                    domax[kloc] * hp * area * Gt_K[c1, c2]
                )
        # residual boundary term (H phi~ - Gt (p.n), w.n)
        pc, sub_flat = fe["lower"] if fe["lower"] is not None else fe["upper"]
        on_upper = fe["lower"] is not None
        nsign = 1.0 if on_upper else -1.0
        sm = np.array(np.unravel_index(sub_flat, sub_shape))
        center = (sm + 0.5) / r
        center[a] = (sm[a] + (1.0 if on_upper else 0.0)) / r
        phi_c = phi_tilde(pc, center[None, :])[:, 0]
        sig = 1.0 if grid.facet_cells[forig, 0] >= 0 else -1.0
        trace = sig * field.p[:, forig]
        e = coeffs.H @ phi_c - Gt_K @ trace
        for c in range(nc):
            R[qdof(fi, c)] += nsign * area * e[c]

    if ndof == 0:
        return 0.0
    x = la.solve(G, R, assume_a="pos")
    return float(np.sqrt(max(R @ x, 0.0)))
