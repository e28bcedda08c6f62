"""RTN0 x Q0 mixed discretization of the multigroup SPN system.

Unknowns are the odd-moment currents p (one normal-trace dof per facet and
component, signed by the global facet orientation) and the even-moment
fluxes phi (one value per cell and component).  The assembled bilinear form
is

    -(To p, q) + (phi, H^T div q) + (psi, H^T div p) + (Te phi, psi)
    - (Gt (p.n), (q.n))_{Gamma_V},        Gt = H Gamma_e^-1 H^T,

with homogeneous boundary data: Robin (vacuum) facets contribute the Gt
boundary block, Neumann (reflection) facets have their dof eliminated, and
Dirichlet facets contribute nothing (natural condition in mixed form).
All integrals are closed-form: coefficients and sources are piecewise
constant and the local RTN0/Q0 integrands polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import MatrixBundle
from .errors import ConfigurationError, SingularSystemError
from .mesh import BCKind, TensorGrid

__all__ = [
    "CellCoefficients",
    "DofLayout",
    "AssembledSystem",
    "MixedField",
    "LocalCellMatrices",
    "local_rtn0_matrices",
    "build_dof_layout",
    "assemble_mono",
    "solve_system",
    "s_norm",
    "x_norm_sq",
    "t_coercivity_check",
    "equilibrium_residual",
]

# reference per-axis RTN0 mass block for unit-normal-trace basis on [0,1]
MASS_REF = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


@dataclass(frozen=True)
class LocalCellMatrices:
    """Exact local matrices of one cuboid cell.

    ``vector_mass[a]`` couples the two facet dofs of axis a; ``div_coeff``
    maps the signed facet dofs to the (constant) divergence, entry (a, side)
    = sign * |F| / |K|; ``scalar_mass`` is the cell volume.
    """

    vector_mass: np.ndarray  # (d, 2, 2)
    div_coeff: np.ndarray  # (d, 2)
    scalar_mass: float


def local_rtn0_matrices(widths) -> LocalCellMatrices:
    widths = np.asarray(widths, dtype=float)
    if np.any(widths <= 0):
        raise ValueError("cell extents must be positive")
    vol = float(widths.prod())
    d = widths.size
    vmass = np.broadcast_to(vol * MASS_REF, (d, 2, 2)).copy()
    div = np.empty((d, 2))
    for a in range(d):
        face = vol / widths[a]
        div[a, 0] = -face / vol
        div[a, 1] = face / vol
    return LocalCellMatrices(vector_mass=vmass, div_coeff=div, scalar_mass=vol)


class CellCoefficients:
    """Per-cell coefficient matrices gathered from the material bundles."""

    def __init__(self, grid: TensorGrid, bundles: Mapping[str, MatrixBundle]):
        self.grid = grid
        missing = [n for n in grid.material_names if n not in bundles]
        if missing:
            raise ConfigurationError(f"no coefficient bundle for materials {missing}")
        mats = [bundles[n] for n in grid.material_names]
        ref = mats[0]
        for b in mats[1:]:
            if b.nc != ref.nc or b.constants.order != ref.constants.order:
                raise ConfigurationError("bundles disagree on order/group structure")
        self.nc = ref.nc
        self.H = ref.H
        self.Ht = ref.H.T.copy()
        self.bundles = mats
        self.To_mats = np.stack([b.To for b in mats])
        self.Te_mats = np.stack([b.Te for b in mats])
        self.Gt_mats = np.stack([b.Gamma_tilde for b in mats])
        self.Gt_inv_mats = np.stack([np.linalg.inv(b.Gamma_tilde) for b in mats])
        self.Ge_inv_mats = np.stack([np.linalg.inv(b.Gamma_e) for b in mats])
        self.delta_e_mats = np.stack([b.delta_e for b in mats])
        self.delta_o_mats = np.stack([b.delta_o for b in mats])
        self.delta_o_max = self.delta_o_mats.max(axis=1)
        # delta_star: delta_e where positive on the whole cell, else identity
        self.delta_star_mats = np.where(
            (self.delta_e_mats > 0.0).all(axis=1, keepdims=True),
            self.delta_e_mats,
            1.0,
        )
        self.Te_inv_T_mats = np.stack(
            [
                b.Te_inv.T if b.Te_inv is not None else np.full_like(b.Te, np.nan)
                for b in mats
            ]
        )
        self.mat_index = grid.material_ids

    @cached_property
    def To_cells(self) -> np.ndarray:
        return self.To_mats[self.mat_index]

    @cached_property
    def Te_cells(self) -> np.ndarray:
        return self.Te_mats[self.mat_index]

    @cached_property
    def delta_e_cells(self) -> np.ndarray:
        return self.delta_e_mats[self.mat_index]

    @cached_property
    def delta_o_cells(self) -> np.ndarray:
        return self.delta_o_mats[self.mat_index]

    @cached_property
    def delta_star_cells(self) -> np.ndarray:
        return self.delta_star_mats[self.mat_index]

    @cached_property
    def delta_o_max_cells(self) -> np.ndarray:
        return self.delta_o_max[self.mat_index]


@dataclass(frozen=True)
class DofLayout:
    """Global numbering: vector dofs first (component-major over active
    facets), then scalar dofs (component-major over cells)."""

    grid: TensorGrid
    nc: int
    active_facets: np.ndarray
    facet_to_active: np.ndarray

    @property
    def n_active(self) -> int:
        return self.active_facets.size

    @property
    def n_p(self) -> int:
        return self.nc * self.n_active

    @property
    def n_phi(self) -> int:
        return self.nc * self.grid.n_cells

    @property
    def size(self) -> int:
        return self.n_p + self.n_phi

    def pdof(self, c, facets):
        return np.asarray(c) * self.n_active + self.facet_to_active[facets]

    def sdof(self, c, cells):
        return self.n_p + np.asarray(c) * self.grid.n_cells + np.asarray(cells)


def build_dof_layout(grid: TensorGrid, nc: int) -> DofLayout:
    active = np.nonzero(grid.facet_bc != int(BCKind.NEUMANN))[0]
    to_active = np.full(grid.n_facets, -1, dtype=np.int64)
    to_active[active] = np.arange(active.size)
    return DofLayout(grid=grid, nc=nc, active_facets=active, facet_to_active=to_active)


@dataclass
class AssembledSystem:
    matrix: sp.csc_matrix
    rhs: np.ndarray
    layout: DofLayout
    coeffs: CellCoefficients


def _facet_signs() -> np.ndarray:
    return np.array([-1.0, 1.0])


def assemble_mono(
    grid: TensorGrid,
    bundles: Mapping[str, MatrixBundle],
    source: np.ndarray,
    coeffs: CellCoefficients | None = None,
) -> AssembledSystem:
    """Assemble the mono-domain system.  ``source`` has shape (nc, n_cells).

    Subdomain grids are assembled identically: INTERFACE facets keep free
    dofs and add no boundary term.
    """
    if coeffs is None:
        coeffs = CellCoefficients(grid, bundles)
    nc = coeffs.nc
    source = np.asarray(source, dtype=float)
    if source.shape != (nc, grid.n_cells):
        raise ConfigurationError(
            f"source must have shape ({nc}, {grid.n_cells}), got {source.shape}"
        )
    layout = build_dof_layout(grid, nc)
    n_active = layout.n_active
    vol = grid.cell_volumes
    cc = np.arange(nc)
    rows_all, cols_all, vals_all = [], [], []

    # -(To p, q): per axis, the 2x2 reference mass times cell volume
    To_cells = coeffs.To_cells
    for a in range(grid.dim):
        act = layout.facet_to_active[grid.cell_facets[:, a, :]]  # (ncells, 2)
        vals = (
            -To_cells[:, :, :, None, None]
            * vol[:, None, None, None, None]
            * MASS_REF[None, None, None, :, :]
        )
        rows = (
            cc[None, :, None, None, None] * n_active
            + act[:, None, None, :, None]
            + np.zeros((1, 1, nc, 1, 2), dtype=np.int64)
        )
        cols = (
            cc[None, None, :, None, None] * n_active
            + act[:, None, None, None, :]
            + np.zeros((1, nc, 1, 2, 1), dtype=np.int64)
        )
        ok = (act[:, None, None, :, None] >= 0) & (act[:, None, None, None, :] >= 0)
        ok = np.broadcast_to(ok, rows.shape)
        rows_all.append(rows[ok])
        cols_all.append(cols[ok])
        vals_all.append(np.broadcast_to(vals, rows.shape)[ok])

    # (phi, H^T div q) and (psi, H^T div p): signed facet areas against H^T
    Ht = coeffs.Ht
    kk = np.arange(grid.n_cells)
    for a in range(grid.dim):
        widths_a = grid.cell_widths[:, a]
        for side, sign in ((0, -1.0), (1, 1.0)):
            f = grid.cell_facets[:, a, side]
            act = layout.facet_to_active[f]
            good = act >= 0
            area = sign * vol / widths_a
            # value for scalar row (c) against vector col (c'): Ht[c, c']
            vals = Ht[None, :, :] * area[:, None, None]
            srow = (layout.n_p + cc[None, :, None] * grid.n_cells + kk[:, None, None]
                    + np.zeros((1, 1, nc), dtype=np.int64))
            pcol = (cc[None, None, :] * n_active + act[:, None, None]
                    + np.zeros((1, nc, 1), dtype=np.int64))
            ok = np.broadcast_to(good[:, None, None], srow.shape)
            vals_b = np.broadcast_to(vals, srow.shape)
            rows_all.append(srow[ok])
            cols_all.append(pcol[ok])
            vals_all.append(vals_b[ok])
            rows_all.append(pcol[ok])
            cols_all.append(srow[ok])
            vals_all.append(vals_b[ok])

    # (Te phi, psi)
    Te_cells = coeffs.Te_cells
    vals = Te_cells * vol[:, None, None]
    srow = (layout.n_p + cc[None, :, None] * grid.n_cells + kk[:, None, None]
            + np.zeros((1, 1, nc), dtype=np.int64))
    scol = (layout.n_p + cc[None, None, :] * grid.n_cells + kk[:, None, None]
            + np.zeros((1, nc, 1), dtype=np.int64))
    rows_all.append(srow.ravel())
    cols_all.append(scol.ravel())
    vals_all.append(np.broadcast_to(vals, srow.shape).ravel())

    # -(Gt (p.n), (q.n)) on Robin facets (orientation signs cancel)
    robin = grid.boundary_facets(BCKind.ROBIN)
    if robin.size:
        owner = grid.facet_owner[robin]
        Gt = coeffs.Gt_mats[coeffs.mat_index[owner]]  # (nrobin, nc, nc)
        act = layout.facet_to_active[robin]
        area = grid.facet_area[robin]
        vals = -Gt * area[:, None, None]
        rows = (cc[None, :, None] * n_active + act[:, None, None]
                + np.zeros((1, 1, nc), dtype=np.int64))
        cols = (cc[None, None, :] * n_active + act[:, None, None]
                + np.zeros((1, nc, 1), dtype=np.int64))
        rows_all.append(rows.ravel())
        cols_all.append(cols.ravel())
        vals_all.append(np.broadcast_to(vals, rows.shape).ravel())

    matrix = sp.coo_matrix(
        (
            np.concatenate(vals_all),
            (np.concatenate(rows_all), np.concatenate(cols_all)),
        ),
        shape=(layout.size, layout.size),
    ).tocsc()
    rhs = np.zeros(layout.size)
    rhs[layout.n_p :] = (source * vol[None, :]).ravel()
    return AssembledSystem(matrix=matrix, rhs=rhs, layout=layout, coeffs=coeffs)


@dataclass
class MixedField:
    """Discrete solution: facet currents p (nc, n_facets; eliminated facets
    hold exact zeros) and cell fluxes phi (nc, n_cells)."""

    grid: TensorGrid
    nc: int
    p: np.ndarray
    phi: np.ndarray

    @cached_property
    def div(self) -> np.ndarray:
        """Cell-wise constant divergence per component, (nc, n_cells)."""
        grid = self.grid
        out = np.zeros((self.nc, grid.n_cells))
        for a in range(grid.dim):
            lo = self.p[:, grid.cell_facets[:, a, 0]]
            hi = self.p[:, grid.cell_facets[:, a, 1]]
            out += (hi - lo) / grid.cell_widths[:, a][None, :]
        return out

    def axis_dofs(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper facet dof values along axis a, each (nc, n_cells)."""
        return (
            self.p[:, self.grid.cell_facets[:, a, 0]],
            self.p[:, self.grid.cell_facets[:, a, 1]],
        )

    def phi_l2_norm(self) -> float:
        return float(np.sqrt((self.phi**2 * self.grid.cell_volumes[None, :]).sum()))


def unpack_solution(layout: DofLayout, x: np.ndarray) -> MixedField:
    nc = layout.nc
    p = np.zeros((nc, layout.grid.n_facets))
    p[:, layout.active_facets] = x[: layout.n_p].reshape(nc, layout.n_active)
    phi = x[layout.n_p :].reshape(nc, layout.grid.n_cells).copy()
    return MixedField(grid=layout.grid, nc=nc, p=p, phi=phi)


def solve_system(system: AssembledSystem, rtol: float = 1e-10) -> MixedField:
    """Direct sparse solve with a verified relative algebraic residual."""
    x = sparse_direct_solve(system.matrix, system.rhs, rtol=rtol)
    return unpack_solution(system.layout, x)


def sparse_direct_solve(matrix: sp.csc_matrix, rhs: np.ndarray, rtol: float = 1e-10):
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    try:
        lu = spla.splu(matrix.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:  # singular factorization
        raise SingularSystemError(str(exc)) from exc
    res = np.linalg.norm(matrix @ x - rhs) / bnorm
    if res > rtol:
        x = x + lu.solve(rhs - matrix @ x)  # one step of iterative refinement
        res = np.linalg.norm(matrix @ x - rhs) / bnorm
    if not np.isfinite(res) or res > rtol:
        raise SingularSystemError(f"relative residual {res:.3e} exceeds {rtol:.1e}")
    return x


# -- norms ---------------------------------------------------------------------


def _p_l2_terms(field: MixedField, weights: np.ndarray) -> float:
    """sum_c sum_K w[c,K] * int_K p_c^2 with the exact per-axis quadratic form."""
    grid = field.grid
    vol = grid.cell_volumes
    total = 0.0
    for a in range(grid.dim):
        lo, hi = field.axis_dofs(a)
        q = (lo**2 + lo * hi + hi**2) / 3.0
        total += float((weights * q * vol[None, :]).sum())
    return total


def s_norm(
    grid: TensorGrid, coeffs: CellCoefficients, field: MixedField, star: bool = False
) -> float:
    """Strengthened norm of a discrete field:

    ||z||_S^2 = (do p, p) + (de phi, phi)
              + sum_K do_max_K h_K^2 ||div p||_K^2
              + sum_{Robin F} do_max_{K_F} h_perp_F ||Gt^(1/2) (p.n)||_F^2.

    With ``star`` the scalar weight is delta_star instead of delta_e.
    """
    vol = grid.cell_volumes
    total = _p_l2_terms(field, coeffs.delta_o_cells.T)
    de = coeffs.delta_star_cells if star else coeffs.delta_e_cells
    total += float((de.T * field.phi**2 * vol[None, :]).sum())
    dmax = coeffs.delta_o_max_cells
    hk2 = grid.cell_diameters**2
    total += float((dmax * hk2 * (field.div**2).sum(axis=0) * vol).sum())
    robin = grid.boundary_facets(BCKind.ROBIN)
    if robin.size:
        owner = grid.facet_owner[robin]
        Gt = coeffs.Gt_mats[coeffs.mat_index[owner]]
        tr = field.p[:, robin].T  # (nrobin, nc)
        quad = np.einsum("fc,fcd,fd->f", tr, Gt, tr)
        total += float(
            (coeffs.delta_o_max[coeffs.mat_index[owner]]
             * grid.facet_hperp[robin] * grid.facet_area[robin] * quad).sum()
        )
    return float(np.sqrt(total))


def x_norm_sq(grid: TensorGrid, field: MixedField) -> float:
    """Squared graph norm: ||p||^2 + ||div p||^2 + ||p.n||^2_{Robin} + ||phi||^2."""
    vol = grid.cell_volumes
    total = _p_l2_terms(field, np.ones_like(field.phi))
    total += float(((field.div**2).sum(axis=0) * vol).sum())
    total += float((field.phi**2 * vol[None, :]).sum())
    robin = grid.boundary_facets(BCKind.ROBIN)
    if robin.size:
        total += float(
            (grid.facet_area[robin] * (field.p[:, robin] ** 2).sum(axis=0)).sum()
        )
    return total


# -- discrete T-coercivity probe --------------------------------------------------


@dataclass
class TCoercivityReport:
    alpha: float
    trials: int
    violations: int
    min_margin: float  # min over trials of c(z, Tz) - alpha ||z||_X^2

    @property
    def ok(self) -> bool:
        return self.violations == 0


def apply_t_map(coeffs: CellCoefficients, field: MixedField) -> MixedField:
    """T(p, phi) = (-p, (phi + Te^-T H^T div p) / 2), cell-wise exact for
    piecewise-constant coefficients."""
    Te_inv_T = coeffs.Te_inv_T_mats[coeffs.mat_index]  # (ncells, nc, nc)
    if np.isnan(Te_inv_T).any():
        raise ConfigurationError("T-map needs invertible Te on every material")
    hdiv = np.einsum("cd,dk->ck", coeffs.Ht, field.div)
    psi = 0.5 * (field.phi + np.einsum("kcd,dk->ck", Te_inv_T, hdiv))
    return MixedField(grid=field.grid, nc=field.nc, p=-field.p, phi=psi)


def t_coercivity_check(
    system: AssembledSystem,
    alpha: float,
    trials: int = 100,
    seed: int = 0,
    rtol: float = 1e-9,
) -> TCoercivityReport:
    """Check c(z_h, T_h z_h) >= alpha ||z_h||_X^2 on random discrete fields."""
    layout = system.layout
    rng = np.random.default_rng(seed)
    violations = 0
    min_margin = np.inf
    for _ in range(trials):
        x = rng.standard_normal(layout.size)
        z = unpack_solution(layout, x)
        tz = apply_t_map(system.coeffs, z)
        tz_vec = np.concatenate(
            [tz.p[:, layout.active_facets].ravel(), tz.phi.ravel()]
        )
        cval = float(tz_vec @ (system.matrix @ x))
        xn = x_norm_sq(layout.grid, z)
        margin = cval - alpha * xn
        min_margin = min(min_margin, margin)
        if margin < -rtol * max(abs(cval), alpha * xn, 1.0):
            violations += 1
    return TCoercivityReport(
        alpha=alpha, trials=trials, violations=violations, min_margin=min_margin
    )


def equilibrium_residual(
    coeffs: CellCoefficients, source: np.ndarray, field: MixedField
) -> float:
    """Max cell-wise violation of H^T div p + Te phi = S_f (exact balance)."""
    lhs = np.einsum("cd,dk->ck", coeffs.Ht, field.div) + np.einsum(
        "kcd,dk->ck", coeffs.Te_cells, field.phi
    )
    return float(np.abs(lhs - source).max())
