"""Coefficient matrices of the multigroup simplified-PN (SPN) model.

An odd angular order N carries nhat = (N+1)/2 even moments and nhat odd
moments per energy group.  For G groups all block matrices act on vectors
with nc = nhat*G components, ordered group-major: component c = g*nhat + i
where i indexes the parity-ordered moment list (even moments 0,2,..,N-1 for
scalar-type quantities, odd moments 1,3,..,N for current-type quantities).

The model is defined by the moment weights

    t_m = alpha_m^2 / (2m+1),   alpha_0 = 1,
    alpha_{m+1} = (4(m+1)^2 - 1) / ((m+1) alpha_m),

the coupling matrix H (block diagonal over groups, each block the
nhat x nhat upper bidiagonal of ones), the even/odd removal matrices
Te/To built from removal and scattering cross sections, and the vacuum
boundary matrix Gamma_e assembled from weighted Legendre products on (0,1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.polynomial.legendre import leggauss, legval

from .errors import (
    AssumptionViolationError,
    InvalidOrderError,
    NotADiffusionModelError,
)

__all__ = [
    "AngularConstants",
    "Material",
    "CrossSectionSet",
    "MatrixBundle",
    "AssumptionReport",
    "DiffusionView",
    "compute_angular_constants",
    "upper_bidiagonal_block",
    "assemble_parity_matrices",
    "assemble_robin_matrices",
    "build_bundle",
    "build_bundles",
    "validate_coefficient_assumptions",
    "diffusion_reduction",
    "material_from_diffusion",
]


@dataclass(frozen=True)
class AngularConstants:
    """Moment recurrence constants alpha_m and weights t_m for m = 0..N."""

    order: int
    alpha: np.ndarray
    t: np.ndarray

    @property
    def nhat(self) -> int:
        return (self.order + 1) // 2

    @property
    def even_moments(self) -> np.ndarray:
        return np.arange(0, self.order + 1, 2)

    @property
    def odd_moments(self) -> np.ndarray:
        return np.arange(1, self.order + 1, 2)


def compute_angular_constants(order: int) -> AngularConstants:
    """Evaluate the alpha/t recurrence for an odd order N >= 1."""
    if order < 1 or order % 2 == 0:
        raise InvalidOrderError(f"angular order must be odd and >= 1, got {order}")
    alpha = np.empty(order + 1)
    alpha[0] = 1.0
    for m in range(order):
        alpha[m + 1] = (4.0 * (m + 1) ** 2 - 1.0) / ((m + 1) * alpha[m])
    m = np.arange(order + 1)
    t = alpha**2 / (2 * m + 1)
    return AngularConstants(order=order, alpha=alpha, t=t)


@dataclass(frozen=True)
class Material:
    """Cross sections of one material.

    sigma_t has shape (G,); sigma_s has shape (N+1, G, G) with
    sigma_s[m, g, g'] the Legendre moment m of scattering from group g
    to group g' (cm^-1).
    """

    name: str
    sigma_t: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma_t", np.asarray(self.sigma_t, dtype=float))
        object.__setattr__(self, "sigma_s", np.asarray(self.sigma_s, dtype=float))
        G = self.sigma_t.shape[0]
        if self.sigma_s.ndim != 3 or self.sigma_s.shape[1:] != (G, G):
            raise ValueError(
                f"sigma_s must have shape (N+1, {G}, {G}), got {self.sigma_s.shape}"
            )

    @property
    def groups(self) -> int:
        return self.sigma_t.shape[0]

    @property
    def order(self) -> int:
        return self.sigma_s.shape[0] - 1

    def removal(self, m: int) -> np.ndarray:
        """Sigma_r,m per group: total minus self-scattering of moment m."""
        return self.sigma_t - np.diag(self.sigma_s[m])


@dataclass(frozen=True)
class CrossSectionSet:
    """All materials of a problem, sharing one order and group structure."""

    order: int
    groups: int
    materials: Mapping[str, Material]

    def __post_init__(self):
        for name, mat in self.materials.items():
            if mat.groups != self.groups or mat.order != self.order:
                raise ValueError(
                    f"material {name!r} has (N={mat.order}, G={mat.groups}), "
                    f"expected (N={self.order}, G={self.groups})"
                )


def material_from_diffusion(
    name: str,
    diffusion: np.ndarray,
    sigma_a: np.ndarray,
    scattering: np.ndarray | None = None,
) -> Material:
    """Build SP1 cross sections reproducing given diffusion data.

    diffusion and sigma_a are per-group arrays; scattering[g, g'] is the
    transfer cross section from g to g' (zero diagonal, optional).  The
    resulting material has To = 1/D per group and Te with diagonal
    sigma_a + out-scattering, off-diagonal -scattering.
    """
    D = np.atleast_1d(np.asarray(diffusion, dtype=float))
    sa = np.atleast_1d(np.asarray(sigma_a, dtype=float))
    G = D.shape[0]
    if scattering is None:
        scattering = np.zeros((G, G))
    S = np.asarray(scattering, dtype=float)
    sigma_s = np.zeros((2, G, G))
    sigma_s[0] = S
    sigma_t = sa + S.sum(axis=1)
    # moment-1 self scattering chosen so that 3*(sigma_t - sigma_s1) = 1/D
    sigma_s[1] = np.diag(sigma_t - 1.0 / (3.0 * D))
    return Material(name=name, sigma_t=sigma_t, sigma_s=sigma_s)


def upper_bidiagonal_block(nhat: int) -> np.ndarray:
    """The nhat x nhat block H_hat with H_hat[i,j] = delta_ij + delta_{i,j-1}."""
    return np.eye(nhat) + np.diag(np.ones(nhat - 1), k=1)


def _block_diag(block: np.ndarray, groups: int) -> np.ndarray:
    nhat = block.shape[0]
    out = np.zeros((groups * nhat, groups * nhat))
    for g in range(groups):
        out[g * nhat : (g + 1) * nhat, g * nhat : (g + 1) * nhat] = block
    return out


def assemble_parity_matrices(
    material: Material,
    constants: AngularConstants,
    allow_vanishing_te: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None, np.ndarray]:
    """Assemble H, Te, To and the inverses for one material.

    Diagonal blocks are diag(t_m * Sigma_r,m) over the parity's moments;
    the (g, g') off-diagonal block is -diag(t_m * sigma_s[m, g', g]),
    i.e. scattering *into* g from g'.  A singular Te or To cannot occur
    under the model assumptions and raises, except that the pure-diffusion
    degeneration Te -> 0 may be admitted explicitly (Te_inv is then None).
    """
    G = material.groups
    nhat = constants.nhat
    nc = nhat * G
    H = _block_diag(upper_bidiagonal_block(nhat), G)
    Te = np.zeros((nc, nc))
    To = np.zeros((nc, nc))
    for parity, T in ((constants.even_moments, Te), (constants.odd_moments, To)):
        for i, m in enumerate(parity):
            tm = constants.t[m]
            for g in range(G):
                for gp in range(G):
                    if g == gp:
                        T[g * nhat + i, g * nhat + i] = tm * material.removal(m)[g]
                    else:
                        T[g * nhat + i, gp * nhat + i] = -tm * material.sigma_s[m, gp, g]
    if abs(np.linalg.det(To)) < np.finfo(float).tiny:
        raise AssumptionViolationError(
            f"To is singular for material {material.name!r}"
        )
    if abs(np.linalg.det(Te)) < np.finfo(float).tiny:
        if not allow_vanishing_te:
            raise AssumptionViolationError(
                f"Te is singular for material {material.name!r}"
            )
        Te_inv = None
    else:
        Te_inv = np.linalg.inv(Te)
    return H, Te, To, Te_inv, np.linalg.inv(To)


def assemble_robin_matrices(
    constants: AngularConstants, groups: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vacuum boundary matrices (Gamma_e, Gamma_e_tilde = H Gamma_e^-1 H^T).

    Gamma_e_hat[i,j] = alpha_{2(i-1)} alpha_{2(j-1)} int_0^1 x P_{2(i-1)} P_{2(j-1)} dx,
    integrated with a Gauss-Legendre rule exact for the polynomial integrand
    (degree 4(nhat-1)+1, so 2*nhat+2 points are always sufficient).
    """
    nhat = constants.nhat
    npts = 2 * nhat + 2
    x, w = leggauss(npts)
    x = 0.5 * (x + 1.0)  # map to (0, 1)
    w = 0.5 * w
    # P_{2i}(x) at the quadrature points, rows i = 0..nhat-1
    P = np.empty((nhat, npts))
    for i in range(nhat):
        coeffs = np.zeros(2 * i + 1)
        coeffs[2 * i] = 1.0
        P[i] = legval(x, coeffs)
    gamma_hat = np.empty((nhat, nhat))
    for i in range(nhat):
        for j in range(nhat):
            integral = np.sum(w * x * P[i] * P[j])
            gamma_hat[i, j] = constants.alpha[2 * i] * constants.alpha[2 * j] * integral
    gamma_hat = 0.5 * (gamma_hat + gamma_hat.T)
    Gamma_e = _block_diag(gamma_hat, groups)
    H = _block_diag(upper_bidiagonal_block(nhat), groups)
    Gamma_tilde = H @ np.linalg.inv(Gamma_e) @ H.T
    Gamma_tilde = 0.5 * (Gamma_tilde + Gamma_tilde.T)
    return Gamma_e, Gamma_tilde


@dataclass(frozen=True)
class MatrixBundle:
    """All coefficient matrices of one material, on the nc-component space."""

    material: str
    constants: AngularConstants
    groups: int
    H: np.ndarray
    Te: np.ndarray
    To: np.ndarray
    Te_inv: np.ndarray | None
    To_inv: np.ndarray
    Gamma_e: np.ndarray
    Gamma_tilde: np.ndarray

    @property
    def nc(self) -> int:
        return self.constants.nhat * self.groups

    @property
    def delta_e(self) -> np.ndarray:
        """Diagonal part of Te as a vector."""
        return np.diag(self.Te).copy()

    @property
    def delta_o(self) -> np.ndarray:
        return np.diag(self.To).copy()

    @property
    def diffusion(self) -> np.ndarray:
        """The second-order operator coefficient H^T To^-1 H."""
        return self.H.T @ self.To_inv @ self.H


def build_bundle(
    material: Material,
    constants: AngularConstants,
    allow_vanishing_te: bool = False,
) -> MatrixBundle:
    H, Te, To, Te_inv, To_inv = assemble_parity_matrices(
        material, constants, allow_vanishing_te=allow_vanishing_te
    )
    Gamma_e, Gamma_tilde = assemble_robin_matrices(constants, material.groups)
    return MatrixBundle(
        material=material.name,
        constants=constants,
        groups=material.groups,
        H=H,
        Te=Te,
        To=To,
        Te_inv=Te_inv,
        To_inv=To_inv,
        Gamma_e=Gamma_e,
        Gamma_tilde=Gamma_tilde,
    )


def build_bundles(xs: CrossSectionSet) -> dict[str, MatrixBundle]:
    constants = compute_angular_constants(xs.order)
    return {name: build_bundle(mat, constants) for name, mat in xs.materials.items()}


def _sym_min_eig(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (A + A.T)).min())


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the coefficient checks plus the coercivity bounds.

    Bound naming: *_star are quadratic-form lower bounds (smallest eigenvalue
    of the symmetric part), *_sup are operator-norm upper bounds (largest
    singular value).  ht_star is the *squared* smallest singular value of H^T.
    """

    material: str
    removal_positive: bool
    scattering_dominated: bool
    epsilon_required: float
    epsilon_limit: float
    quadratic_bounds_positive: bool
    to_star: float
    to_sup: float
    te_star: float
    te_sup: float
    te_inv_star: float
    gamma_tilde_star: float
    gamma_tilde_sup: float
    ht_star: float
    ht_sup: float
    alpha: float
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_coefficient_assumptions(bundle: MatrixBundle) -> AssumptionReport:
    """Check positivity/dominance assumptions and compute coercivity bounds.

    Never raises: violations are reported as flags.  The predicted
    coercivity constant is

        alpha = min{ (To)_*, 1/2 (H^T)_* (Te^-1)_*, (Gt)_*, 1/2 (Te)_* }.
    """
    constants = bundle.constants
    G = bundle.groups
    nhat = constants.nhat
    violations = []

    # (i): removal diagonal entries positive for both parities
    diag_e = bundle.delta_e
    diag_o = bundle.delta_o
    removal_positive = bool(np.all(diag_e > 0.0) and np.all(diag_o > 0.0))
    if not removal_positive:
        violations.append("removal (i): t_m*Sigma_r,m not positive everywhere")

    # (ii): inter-group scattering dominated by removal with eps < 1/(G-1)
    epsilon_limit = np.inf if G == 1 else 1.0 / (G - 1)
    epsilon_required = 0.0
    for parity in (constants.even_moments, constants.odd_moments):
        T = bundle.Te if parity[0] % 2 == 0 else bundle.To
        for i in range(nhat):
            for g in range(G):
                r = T[g * nhat + i, g * nhat + i]
                for gp in range(G):
                    if gp == g:
                        continue
                    # |Sigma_s,m^{g->g'}| appears scaled by t_m in row g'
                    s = abs(T[gp * nhat + i, g * nhat + i])
                    if r > 0:
                        epsilon_required = max(epsilon_required, s / r)
                    elif s > 0:
                        epsilon_required = np.inf
    scattering_dominated = bool(epsilon_required < epsilon_limit)
    if not scattering_dominated:
        violations.append(
            f"scattering (ii): requires eps={epsilon_required:.4g} "
            f">= 1/(G-1)={epsilon_limit:.4g}"
        )

    # (iii): quadratic forms of To^-1 and Te bounded below by a positive constant
    to_star = _sym_min_eig(bundle.To)
    te_star = _sym_min_eig(bundle.Te)
    te_inv_star = _sym_min_eig(bundle.Te_inv) if bundle.Te_inv is not None else 0.0
    to_inv_star = _sym_min_eig(bundle.To_inv)
    quadratic_bounds_positive = bool(to_inv_star > 0.0 and te_star > 0.0)
    if not quadratic_bounds_positive:
        violations.append("bounds (iii): To^-1 or Te quadratic form not positive")

    gt_eigs = np.linalg.eigvalsh(bundle.Gamma_tilde)
    sv_ht = np.linalg.svd(bundle.H.T, compute_uv=False)
    report = AssumptionReport(
        material=bundle.material,
        removal_positive=removal_positive,
        scattering_dominated=scattering_dominated,
        epsilon_required=float(epsilon_required),
        epsilon_limit=float(epsilon_limit),
        quadratic_bounds_positive=quadratic_bounds_positive,
        to_star=to_star,
        to_sup=float(np.linalg.norm(bundle.To, 2)),
        te_star=te_star,
        te_sup=float(np.linalg.norm(bundle.Te, 2)),
        te_inv_star=te_inv_star,
        gamma_tilde_star=float(gt_eigs.min()),
        gamma_tilde_sup=float(gt_eigs.max()),
        ht_star=float(sv_ht.min() ** 2),
        ht_sup=float(sv_ht.max()),
        alpha=float(
            min(
                to_star,
                0.5 * sv_ht.min() ** 2 * te_inv_star,
                gt_eigs.min(),
                0.5 * te_star,
            )
        ),
        violations=tuple(violations),
    )
    return report


@dataclass(frozen=True)
class DiffusionView:
    """Diffusion reduction of an SP1 bundle: D = To^-1, Gamma_tilde = 2 I."""

    material: str
    groups: int
    D: np.ndarray


def diffusion_reduction(bundle: MatrixBundle) -> DiffusionView:
    """Expose the SP1 bundle as a multigroup diffusion model (nhat = 1 only)."""
    if bundle.constants.nhat != 1:
        raise NotADiffusionModelError(
            f"diffusion view requires nhat = 1, got nhat = {bundle.constants.nhat}"
        )
    if not np.allclose(bundle.Gamma_e, 0.5 * np.eye(bundle.nc), rtol=0, atol=1e-14):
        raise NotADiffusionModelError("Gamma_e != I/2; not the SP1 vacuum matrix")
    if not np.allclose(bundle.Gamma_tilde, 2.0 * np.eye(bundle.nc), rtol=0, atol=1e-13):
        raise NotADiffusionModelError("Gamma_tilde != 2I; not the SP1 vacuum matrix")
    return DiffusionView(
        material=bundle.material, groups=bundle.groups, D=bundle.To_inv.copy()
    )
