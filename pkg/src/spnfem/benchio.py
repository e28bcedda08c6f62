"""Problem configuration, benchmark presets, manufactured solutions, I/O.

Configurations are plain-data (JSON-friendly) descriptions of a problem:
cross sections per material, box regions, per-face boundary kinds, a
per-material source, the mesh, and the AMR/DDM parameters.  ``realize``
turns a configuration into grids, coefficient bundles and a source
callback usable by the solver and the AMR drivers.

The benchmark preset reproduces the rodded small-core geometry: domain
(0,25)^d, core (0,15)^d, an absorber column next to the core, reflection
on the low faces and vacuum on the high faces, with the cross sections
shipped in ``data/takeda_model1_xs.json`` (external benchmark input).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np

from .amr import AmrConfig, AmrIterationRecord
from .coefficients import (
    CrossSectionSet,
    Material,
    MatrixBundle,
    build_bundles,
    compute_angular_constants,
)
from .errors import ConfigurationError, SchemaError
from .mesh import BCKind, SubdomainLayout, TensorGrid, build_grid, build_layout

__all__ = [
    "ProblemConfig",
    "MaterialSpec",
    "RegionSpec",
    "SubdomainSpec",
    "Realized",
    "parse_config",
    "emit_config",
    "realize",
    "takeda_preset",
    "mms_problem",
    "MmsExact",
    "l2_error_phi",
    "l2_error_p",
    "export_csv",
    "read_csv_records",
    "export_vtk",
]

_BC_NAMES = {
    "dirichlet": BCKind.DIRICHLET,
    "neumann": BCKind.NEUMANN,
    "reflection": BCKind.NEUMANN,
    "robin": BCKind.ROBIN,
    "vacuum": BCKind.ROBIN,
}
_FACE_KEYS = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")


@dataclass
class MaterialSpec:
    sigma_t: list
    sigma_s: list  # [moment][from_group][to_group]


@dataclass
class RegionSpec:
    box: list  # [[lo, hi] per axis]
    material: str


@dataclass
class SubdomainSpec:
    box: list
    cells: list


@dataclass
class ProblemConfig:
    order: int
    groups: int
    domain: list
    materials: dict
    default_material: str
    regions: list
    boundary: dict  # face key -> kind name
    source: dict  # material name -> per-group values (or per-moment-per-group)
    mesh_cells: list | None = None
    mesh_breakpoints: list | None = None
    theta: float | list = 0.5
    eps_rel: float = 4e-3
    max_iterations: int = 20
    mode: str = "mono"
    subdomains: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.domain)


def _check(problems: list, cond: bool, path: str, msg: str) -> bool:
    if not cond:
        problems.append(f"{path}: {msg}")
    return cond


def config_from_dict(data: dict) -> ProblemConfig:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise SchemaError(["top level: expected an object"])
    order = data.get("order")
    _check(problems, isinstance(order, int) and order >= 1 and order % 2 == 1,
           "order", "must be an odd positive integer")
    groups = data.get("groups")
    _check(problems, isinstance(groups, int) and groups >= 1,
           "groups", "must be a positive integer")
    domain = data.get("domain")
    dim = len(domain) if isinstance(domain, list) else 0
    _check(problems, isinstance(domain, list) and dim in (2, 3)
           and all(isinstance(b, list) and len(b) == 2 and b[0] < b[1] for b in domain),
           "domain", "must be a list of 2 or 3 [lo, hi] pairs")

    materials = {}
    raw_mats = data.get("materials")
    if _check(problems, isinstance(raw_mats, dict) and raw_mats,
              "materials", "must be a non-empty object"):
        for name, m in raw_mats.items():
            path = f"materials.{name}"
            st = m.get("sigma_t")
            ss = m.get("sigma_s")
            ok = _check(problems, isinstance(st, list) and len(st) == groups,
                        f"{path}.sigma_t", f"must list {groups} values")
            ok &= _check(
                problems,
                isinstance(ss, list) and len(ss) == (order or 0) + 1
                and all(isinstance(r, list) and len(r) == groups
                        and all(isinstance(c, list) and len(c) == groups for c in r)
                        for r in ss),
                f"{path}.sigma_s",
                f"must be a [{(order or 0) + 1}][{groups}][{groups}] array",
            )
            if ok:
                materials[name] = MaterialSpec(sigma_t=st, sigma_s=ss)

    default_material = data.get("default_material")
    _check(problems, isinstance(default_material, str) and default_material in materials,
           "default_material", "must name a material")

    regions = []
    for i, r in enumerate(data.get("regions", [])):
        path = f"regions[{i}]"
        ok = _check(problems, isinstance(r, dict) and isinstance(r.get("box"), list)
                    and len(r.get("box", [])) == dim,
                    f"{path}.box", f"must list {dim} [lo, hi] pairs")
        ok &= _check(problems, r.get("material") in materials,
                     f"{path}.material", "must name a material")
        if ok:
            regions.append(RegionSpec(box=r["box"], material=r["material"]))

    boundary = {}
    raw_bc = data.get("boundary", {})
    for key in _FACE_KEYS[: 2 * dim]:
        kind = raw_bc.get(key)
        if _check(problems, isinstance(kind, str) and kind.lower() in _BC_NAMES,
                  f"boundary.{key}", f"must be one of {sorted(_BC_NAMES)}"):
            boundary[key] = kind.lower()

    source = {}
    for name, vals in data.get("source", {}).items():
        path = f"source.{name}"
        if _check(problems, name in materials, path, "must name a material"):
            nhat = ((order or 1) + 1) // 2
            flat_ok = isinstance(vals, list) and len(vals) == groups and all(
                isinstance(v, (int, float)) for v in vals)
            full_ok = isinstance(vals, list) and len(vals) == nhat and all(
                isinstance(r, list) and len(r) == groups for r in vals)
            if _check(problems, flat_ok or full_ok, path,
                      f"must list {groups} values or a [{nhat}][{groups}] array"):
                source[name] = vals

    mesh = data.get("mesh", {})
    mesh_cells = mesh.get("cells")
    mesh_breakpoints = mesh.get("breakpoints")
    _check(problems, (mesh_cells is None) != (mesh_breakpoints is None),
           "mesh", "give exactly one of cells or breakpoints")
    if mesh_cells is not None:
        _check(problems, isinstance(mesh_cells, list) and len(mesh_cells) == dim
               and all(isinstance(n, int) and n >= 1 for n in mesh_cells),
               "mesh.cells", f"must list {dim} positive integers")

    amr = data.get("amr", {})
    theta = amr.get("theta", 0.5)
    thetas = theta if isinstance(theta, list) else [theta]
    _check(problems, all(isinstance(t, (int, float)) and 0 < t <= 1 for t in thetas),
           "amr.theta", "must be in (0, 1]")
    eps_rel = amr.get("eps_rel", 4e-3)
    _check(problems, isinstance(eps_rel, (int, float)) and eps_rel > 0,
           "amr.eps_rel", "must be positive")
    max_iterations = amr.get("max_iterations", 20)
    _check(problems, isinstance(max_iterations, int) and max_iterations >= 0,
           "amr.max_iterations", "must be a non-negative integer")
    mode = amr.get("mode", "mono")
    _check(problems, mode in ("mono", "ddm"), "amr.mode", "must be mono or ddm")

    subdomains = []
    for i, s in enumerate(data.get("subdomains", [])):
        path = f"subdomains[{i}]"
        ok = _check(problems, isinstance(s, dict) and isinstance(s.get("box"), list)
                    and len(s.get("box", [])) == dim, f"{path}.box",
                    f"must list {dim} [lo, hi] pairs")
        ok &= _check(problems, isinstance(s.get("cells"), list)
                     and len(s.get("cells", [])) == dim, f"{path}.cells",
                     f"must list {dim} cell counts")
        if ok:
            subdomains.append(SubdomainSpec(box=s["box"], cells=s["cells"]))
    if mode == "ddm":
        _check(problems, len(subdomains) >= 1, "subdomains",
               "ddm mode needs at least one subdomain")
    if isinstance(theta, list):
        _check(problems, len(thetas) == len(subdomains), "amr.theta",
               "per-subdomain theta list must match the subdomain count")

    if problems:
        raise SchemaError(problems)
    return ProblemConfig(
        order=order,
        groups=groups,
        domain=domain,
        materials=materials,
        default_material=default_material,
        regions=regions,
        boundary=boundary,
        source=source,
        mesh_cells=mesh_cells,
        mesh_breakpoints=mesh_breakpoints,
        theta=theta,
        eps_rel=float(eps_rel),
        max_iterations=max_iterations,
        mode=mode,
        subdomains=subdomains,
    )


def parse_config(text: str) -> ProblemConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError([f"invalid JSON: {exc}"]) from exc
    return config_from_dict(data)


def config_to_dict(cfg: ProblemConfig) -> dict:
    return {
        "order": cfg.order,
        "groups": cfg.groups,
        "domain": cfg.domain,
        "materials": {
            name: {"sigma_t": m.sigma_t, "sigma_s": m.sigma_s}
            for name, m in cfg.materials.items()
        },
        "default_material": cfg.default_material,
        "regions": [{"box": r.box, "material": r.material} for r in cfg.regions],
        "boundary": cfg.boundary,
        "source": cfg.source,
        "mesh": (
            {"cells": cfg.mesh_cells}
            if cfg.mesh_cells is not None
            else {"breakpoints": cfg.mesh_breakpoints}
        ),
        "amr": {
            "theta": cfg.theta,
            "eps_rel": cfg.eps_rel,
            "max_iterations": cfg.max_iterations,
            "mode": cfg.mode,
        },
        "subdomains": [{"box": s.box, "cells": s.cells} for s in cfg.subdomains],
    }


def emit_config(cfg: ProblemConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)


@dataclass
class Realized:
    """Problem pieces ready for the solver/AMR drivers."""

    config: ProblemConfig
    xs: CrossSectionSet
    bundles: dict[str, MatrixBundle]
    grid: TensorGrid
    layout: SubdomainLayout | None
    source_fn: Callable[[TensorGrid], np.ndarray]
    amr: AmrConfig
    nc: int


def _face_bc(cfg: ProblemConfig) -> dict[tuple[int, int], BCKind]:
    out = {}
    for a in range(cfg.dim):
        for side in (0, 1):
            key = _FACE_KEYS[2 * a + side]
            out[(a, side)] = _BC_NAMES[cfg.boundary[key]]
    return out


def realize(cfg: ProblemConfig) -> Realized:
    materials = {
        name: Material(name=name, sigma_t=np.array(m.sigma_t),
                       sigma_s=np.array(m.sigma_s))
        for name, m in cfg.materials.items()
    }
    xs = CrossSectionSet(order=cfg.order, groups=cfg.groups, materials=materials)
    bundles = build_bundles(xs)
    nhat = (cfg.order + 1) // 2
    nc = nhat * cfg.groups
    regions = [(r.box, r.material) for r in cfg.regions]
    face_bc = _face_bc(cfg)

    grid = build_grid(
        domain=cfg.domain,
        cells=cfg.mesh_cells,
        breakpoints=cfg.mesh_breakpoints,
        regions=regions,
        default_material=cfg.default_material,
        face_bc=face_bc,
    )

    layout = None
    if cfg.subdomains:
        layout = build_layout(
            domain=cfg.domain,
            boxes=[s.box for s in cfg.subdomains],
            cells=[s.cells for s in cfg.subdomains],
            regions=regions,
            default_material=cfg.default_material,
            face_bc=face_bc,
        )

    # material-wise constant source, expanded to all moment components
    names = grid.material_names
    table = np.zeros((len(names), nc))
    for mat_name, vals in cfg.source.items():
        if mat_name not in names:
            raise ConfigurationError(f"source references unused material {mat_name!r}")
        row = names.index(mat_name)
        arr = np.asarray(vals, dtype=float)
        if arr.ndim == 1:  # per group, moment 0 only
            for g in range(cfg.groups):
                table[row, g * nhat] = arr[g]
        else:  # (nhat, groups)
            for i in range(nhat):
                for g in range(cfg.groups):
                    table[row, g * nhat + i] = arr[i, g]

    def source_fn(g: TensorGrid) -> np.ndarray:
        return table[g.material_ids].T.copy()

    theta = tuple(cfg.theta) if isinstance(cfg.theta, list) else cfg.theta
    amr = AmrConfig(
        theta=theta,
        eps_rel=cfg.eps_rel,
        max_iterations=cfg.max_iterations,
        mode=cfg.mode,
    )
    return Realized(
        config=cfg, xs=xs, bundles=bundles, grid=grid, layout=layout,
        source_fn=source_fn, amr=amr, nc=nc,
    )


# -- benchmark preset -----------------------------------------------------------


def _load_benchmark_xs() -> dict:
    text = resources.files("spnfem.data").joinpath("takeda_model1_xs.json").read_text()
    return json.loads(text)


def takeda_preset(configuration: str = "mono1", dim: int = 3) -> ProblemConfig:
    """Rodded small-core benchmark preset.

    Configurations: mono1 (theta 0.5), mono2 (theta 0.2), ddm1 (all
    subdomain thetas 0.5), ddm2 (absorber subdomain 0.7, the rest 0.2).
    ``dim=2`` builds the planar analogue used by the fast test suite.
    """
    configuration = configuration.lower()
    if configuration not in ("mono1", "mono2", "ddm1", "ddm2"):
        raise ConfigurationError(f"unknown configuration {configuration!r}")
    if dim not in (2, 3):
        raise ConfigurationError("dim must be 2 or 3")
    data = _load_benchmark_xs()
    source = {"core": data["materials"]["core"]["nu_sigma_f"]}
    if dim == 3:
        domain = [[0.0, 25.0]] * 3
        core = [[0.0, 15.0]] * 3
        rod = [[15.0, 20.0], [0.0, 5.0], [0.0, 25.0]]
        cells = [5, 5, 5]
        sub_boxes = [
            [[0.0, 15.0], [0.0, 15.0], [0.0, 15.0]],
            [[15.0, 20.0], [0.0, 5.0], [0.0, 25.0]],
            [[20.0, 25.0], [0.0, 25.0], [0.0, 25.0]],
            [[15.0, 20.0], [5.0, 25.0], [0.0, 25.0]],
            [[0.0, 15.0], [15.0, 25.0], [0.0, 25.0]],
            [[0.0, 15.0], [0.0, 15.0], [15.0, 25.0]],
        ]
        rod_sub = 1
    else:
        domain = [[0.0, 25.0]] * 2
        core = [[0.0, 15.0]] * 2
        rod = [[15.0, 20.0], [0.0, 5.0]]
        cells = [5, 5]
        sub_boxes = [
            [[0.0, 15.0], [0.0, 15.0]],
            [[15.0, 20.0], [0.0, 5.0]],
            [[20.0, 25.0], [0.0, 25.0]],
            [[15.0, 20.0], [5.0, 25.0]],
            [[0.0, 15.0], [15.0, 25.0]],
        ]
        rod_sub = 1
    boundary = {}
    for a in range(dim):
        boundary[_FACE_KEYS[2 * a]] = "reflection"
        boundary[_FACE_KEYS[2 * a + 1]] = "vacuum"
    ddm = configuration.startswith("ddm")
    subdomains = []
    if ddm:
        for box in sub_boxes:
            ncell = [max(1, round((hi - lo) / 5.0)) for lo, hi in box]
            subdomains.append({"box": box, "cells": ncell})
    if configuration == "mono1":
        theta = 0.5
    elif configuration == "mono2":
        theta = 0.2
    elif configuration == "ddm1":
        theta = [0.5] * len(sub_boxes)
    else:
        theta = [0.2] * len(sub_boxes)
        theta[rod_sub] = 0.7
    return config_from_dict(
        {
            "order": data["order"],
            "groups": data["groups"],
            "domain": domain,
            "materials": {
                name: {"sigma_t": m["sigma_t"], "sigma_s": m["sigma_s"]}
                for name, m in data["materials"].items()
            },
            "default_material": "reflector",
            "regions": [
                {"box": core, "material": "core"},
                {"box": rod, "material": "control_rod"},
            ],
            "boundary": boundary,
            "source": source,
            "mesh": {"cells": cells},
            "amr": {
                "theta": theta,
                "eps_rel": 4e-3,
                "max_iterations": 20,
                "mode": "ddm" if ddm else "mono",
            },
            "subdomains": subdomains,
        }
    )


# -- manufactured solutions -----------------------------------------------------


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class MmsExact:
    """Separable manufactured solution phi_c = A_c prod_i sin(pi x_i / L_i)."""

    lengths: tuple[float, ...]
    amps: np.ndarray  # (nc,)
    bundle: MatrixBundle
    p_coef: np.ndarray  # (nc,) coefficient of grad(Pi)
    s_coef: np.ndarray  # (nc,) coefficient of Pi in the source

    @property
    def dim(self) -> int:
        return len(self.lengths)

    def shape_product(self, x: np.ndarray) -> np.ndarray:
        out = np.ones(x.shape[0])
        for a, L in enumerate(self.lengths):
            out *= np.sin(np.pi * x[:, a] / L)
        return out

    def phi(self, x: np.ndarray) -> np.ndarray:
        return self.amps[:, None] * self.shape_product(x)[None, :]

    def p(self, x: np.ndarray) -> np.ndarray:
        """(nc, npts, d) exact currents -To^-1 H grad phi."""
        npts = x.shape[0]
        grad = np.ones((npts, self.dim))
        for a, L in enumerate(self.lengths):
            for b in range(self.dim):
                arg = np.pi * x[:, b] / self.lengths[b]
                grad[:, a] *= (
                    np.pi / L * np.cos(arg) if b == a else np.sin(arg)
                )
        return self.p_coef[:, None, None] * grad[None, :, :]

    def source_at(self, x: np.ndarray) -> np.ndarray:
        return self.s_coef[:, None] * self.shape_product(x)[None, :]

    def source_cells(self, grid: TensorGrid) -> np.ndarray:
        """Cell averages of the source by order-4 Gauss per axis (separable)."""
        pts, wts = _gauss(4)
        means = []
        for a in range(grid.dim):
            t = grid.axes[a]
            w = np.diff(t)
            xg = t[:-1, None] + w[:, None] * pts[None, :]
            means.append((np.sin(np.pi * xg / self.lengths[a]) * wts[None, :]).sum(axis=1))
        m = means[0][grid.cell_multi[0]]
        for a in range(1, grid.dim):
            m = m * means[a][grid.cell_multi[a]]
        return self.s_coef[:, None] * m[None, :]


def _mms_material(order: int, groups: int) -> Material:
    """Smooth constant cross sections satisfying the model assumptions."""
    st = np.array([1.0 + 0.1 * g for g in range(groups)])
    ss = np.zeros((order + 1, groups, groups))
    moment_scale = [0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 0.0005]
    for m in range(order + 1):
        for g in range(groups):
            ss[m, g, g] = moment_scale[m] * st[g]
            for gp in range(groups):
                if gp != g:
                    ss[m, g, gp] = 0.02 * st[g] if m == 0 else 0.0
    return Material(name="mms", sigma_t=st, sigma_s=ss)


def mms_problem(
    dim: int,
    groups: int = 2,
    order: int = 1,
    cells: int = 8,
    lengths: Sequence[float] | None = None,
    material: Material | None = None,
) -> tuple[TensorGrid, dict[str, MatrixBundle], MmsExact]:
    """Dirichlet manufactured problem on a box, with exact fields.

    The exact flux vanishes on the boundary, so the all-Dirichlet setting
    is conforming.  The projected source is only approximately piecewise
    constant; the problem is meant for convergence studies.
    """
    if lengths is None:
        lengths = (1.0,) * dim
    if material is None:
        material = _mms_material(order, groups)
    else:
        material = Material(name="mms", sigma_t=material.sigma_t,
                            sigma_s=material.sigma_s)
        groups = material.groups
        order = material.order
    constants = compute_angular_constants(order)
    xs = CrossSectionSet(order=order, groups=groups, materials={"mms": material})
    bundles = build_bundles(xs)
    bundle = bundles["mms"]
    nc = bundle.nc
    amps = 1.0 + 0.25 * np.arange(nc)
    kappa = sum((np.pi / L) ** 2 for L in lengths)
    p_coef = -(bundle.To_inv @ bundle.H) @ amps
    s_coef = (kappa * bundle.diffusion + bundle.Te) @ amps
    exact = MmsExact(
        lengths=tuple(float(L) for L in lengths),
        amps=amps,
        bundle=bundle,
        p_coef=p_coef,
        s_coef=s_coef,
    )
    grid = build_grid(
        domain=[(0.0, L) for L in lengths],
        cells=[cells] * dim,
        regions=[],
        default_material="mms",
        face_bc={(a, s): BCKind.DIRICHLET for a in range(dim) for s in (0, 1)},
    )
    return grid, bundles, exact


def _cell_gauss_points(grid: TensorGrid, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical tensor Gauss points (ncells, n^d, d) and weights (n^d,)."""
    pts, wts = _gauss(n)
    d = grid.dim
    import itertools as it

    combos = np.array(list(it.product(range(n), repeat=d)))
    unit = pts[combos]  # (n^d, d)
    weights = np.prod(wts[combos], axis=1)
    lows = np.stack(
        [grid.axes[a][grid.cell_multi[a]] for a in range(d)], axis=1
    )  # (ncells, d)
    phys = lows[:, None, :] + grid.cell_widths[:, None, :] * unit[None, :, :]
    return phys, weights


def l2_error_phi(grid: TensorGrid, phi: np.ndarray, exact: MmsExact, n: int = 3) -> float:
    phys, w = _cell_gauss_points(grid, n)
    ncells, npts, d = phys.shape
    ex = exact.phi(phys.reshape(-1, d)).reshape(-1, ncells, npts)
    diff = ex - phi[:, :, None]
    sq = np.einsum("nkp,p->k", diff**2, w)
    return float(np.sqrt((sq * grid.cell_volumes).sum()))


def l2_error_p(grid: TensorGrid, field, exact: MmsExact, n: int = 3) -> float:
    phys, w = _cell_gauss_points(grid, n)
    ncells, npts, d = phys.shape
    pts, _ = _gauss(n)
    ex = exact.p(phys.reshape(-1, d)).reshape(-1, ncells, npts, d)
    num = np.zeros(ncells)
    unit = (phys - np.stack(
        [grid.axes[a][grid.cell_multi[a]] for a in range(d)], axis=1
    )[:, None, :]) / grid.cell_widths[:, None, :]
    for a in range(d):
        lo, hi = field.axis_dofs(a)
        ph = lo[:, :, None] + (hi - lo)[:, :, None] * unit[None, :, :, a]
        diff = ex[:, :, :, a] - ph
        num += np.einsum("nkp,p->k", diff**2, w)
    return float(np.sqrt((num * grid.cell_volumes).sum()))


# -- CSV / VTK -------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".17g")


def export_csv(records: Sequence[AmrIterationRecord], path: str) -> None:
    """Fixed-column CSV of the iteration records (bit-stable formatting)."""
    n_sub = 0
    has_err = False
    for r in records:
        if r.sub_eta_max is not None:
            n_sub = max(n_sub, len(r.sub_eta_max))
        if r.rel_s_error is not None:
            has_err = True
    header = [
        "iteration", "n_cells", "eta_max", "eta_bnd_cell_max",
        "eta_bc_max", "eta_bc_ratio_max", "eps_amr", "phi_norm",
    ]
    header += [f"eta_max_sub{s + 1}" for s in range(n_sub)]
    if has_err:
        header.append("rel_s_error")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in records:
        row = [
            str(r.iteration), str(r.n_cells), _fmt(r.eta_max),
            _fmt(r.eta_bnd_cell_max), _fmt(r.eta_bc_max),
            _fmt(r.eta_bc_ratio_max), _fmt(r.eps_amr), _fmt(r.phi_norm),
        ]
        subs = r.sub_eta_max or ()
        row += [_fmt(subs[s]) if s < len(subs) else "" for s in range(n_sub)]
        if has_err:
            row.append(_fmt(r.rel_s_error))
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv_records(path: str) -> list[AmrIterationRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    sub_cols = [i for i, h in enumerate(header) if h.startswith("eta_max_sub")]
    err_col = header.index("rel_s_error") if "rel_s_error" in header else None

    def num(s: str) -> float:
        return np.nan if s == "" else float(s)

    out = []
    for row in rows[1:]:
        subs = tuple(num(row[i]) for i in sub_cols) if sub_cols else None
        err = None
        if err_col is not None and row[err_col] != "":
            err = float(row[err_col])
        out.append(
            AmrIterationRecord(
                iteration=int(row[0]),
                n_cells=int(row[1]),
                eta_max=num(row[2]),
                eta_bnd_cell_max=num(row[3]),
                eta_bc_max=num(row[4]),
                eta_bc_ratio_max=num(row[5]),
                eps_amr=num(row[6]),
                phi_norm=num(row[7]),
                sub_eta_max=subs,
                rel_s_error=err,
            )
        )
    return out


def export_vtk(
    path: str,
    grid: TensorGrid,
    cell_data: Mapping[str, np.ndarray] | None = None,
    point_data: Mapping[str, np.ndarray] | None = None,
    title: str = "spnfem output",
) -> None:
    """Legacy ASCII VTK rectilinear grid with cell and point scalars."""
    d = grid.dim
    axes = list(grid.axes) + [np.array([0.0])] * (3 - d)
    dims = [t.size for t in axes]

    def coord_block(name: str, t: np.ndarray) -> str:
        vals = " ".join(format(v, ".17g") for v in t)
        return f"{name}_COORDINATES {t.size} double\n{vals}\n"

    def data_block(arrays: Mapping[str, np.ndarray], cellwise: bool) -> str:
        out = []
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=float)
            if cellwise:
                shaped = arr.reshape(grid.shape)
            else:
                shaped = arr.reshape(grid.vertex_shape)
            flat = shaped.T.ravel()  # VTK wants x fastest; ours is slowest
            out.append(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            out.append("\n".join(format(v, ".17g") for v in flat))
            out.append("\n")
        return "".join(out)

    parts = [
        "# vtk DataFile Version 3.0\n",
        f"{title}\n",
        "ASCII\n",
        "DATASET RECTILINEAR_GRID\n",
        f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n",
        coord_block("X", axes[0]),
        coord_block("Y", axes[1]),
        coord_block("Z", axes[2]),
    ]
    if cell_data:
        parts.append(f"CELL_DATA {grid.n_cells}\n")
        parts.append(data_block(cell_data, cellwise=True))
    if point_data:
        parts.append(f"POINT_DATA {grid.n_vertices}\n")
        parts.append(data_block(point_data, cellwise=False))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(parts))
