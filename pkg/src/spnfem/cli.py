"""Command-line entry points: run, solve, verify, preset."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import benchio
from .amr import AmrConfig, run_amr_ddm, run_amr_mono
from .ddm import assemble_ddm, check_jump_free, solve_ddm
from .fem import (
    CellCoefficients,
    assemble_mono,
    solve_system,
    t_coercivity_check,
)
from .coefficients import validate_coefficient_assumptions
from .reconstruction import average_reconstruct


def _load_config(args) -> benchio.ProblemConfig:
    with open(args.config, encoding="utf-8") as fh:
        return benchio.parse_config(fh.read())


def _apply_overrides(cfg: benchio.ProblemConfig, args) -> benchio.ProblemConfig:
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if getattr(args, "theta", None) is not None:
        cfg.theta = args.theta
    if getattr(args, "eps_rel", None) is not None:
        cfg.eps_rel = args.eps_rel
    if getattr(args, "max_iter", None) is not None:
        cfg.max_iterations = args.max_iter
    return cfg


def _dump_vtk(realized, grid, sol, recon, est, out_dir, tag):
    cell_data = {}
    nhat = (realized.config.order + 1) // 2
    for g in range(realized.config.groups):
        for i in range(nhat):
            c = g * nhat + i
            cell_data[f"phi_m{2 * i}_g{g + 1}"] = sol.phi[c]
    if est is not None:
        cell_data["eta_r"] = est.eta_r
        cell_data["eta_f"] = est.eta_f
        cell_data["eta_K"] = est.eta_K
    point_data = {}
    if recon is not None:
        for g in range(realized.config.groups):
            point_data[f"phi_recon_g{g + 1}"] = recon.values[g * nhat]
    benchio.export_vtk(
        os.path.join(out_dir, f"{tag}.vtk"), grid, cell_data, point_data
    )


def cmd_run(args) -> int:
    cfg = _apply_overrides(_load_config(args), args)
    realized = benchio.realize(cfg)
    os.makedirs(args.out, exist_ok=True)
    if cfg.mode == "ddm":
        result = run_amr_ddm(
            realized.layout, realized.bundles, realized.source_fn, realized.amr
        )
        for s, (g, f, e) in enumerate(
            zip(result.layout.subdomains, result.solution.fields, result.estimators)
        ):
            if args.vtk:
                _dump_vtk(realized, g, f, None, e, args.out, f"final_sub{s + 1}")
    else:
        result = run_amr_mono(
            realized.grid, realized.bundles, realized.source_fn, realized.amr
        )
        if args.vtk:
            _dump_vtk(
                realized, result.grid, result.solution, result.recon,
                result.estimators, args.out, "final",
            )
    csv_path = os.path.join(args.out, "records.csv")
    benchio.export_csv(result.records, csv_path)
    last = result.records[-1]
    status = "converged" if result.converged else "max-iterations reached"
    print(f"{status}: {len(result.records)} iterations, {last.n_cells} cells, "
          f"max eta_K = {last.eta_max:.5g} (eps = {last.eps_amr:.5g})")
    print(f"records written to {csv_path}")
    return 0


def cmd_solve(args) -> int:
    cfg = _apply_overrides(_load_config(args), args)
    realized = benchio.realize(cfg)
    os.makedirs(args.out, exist_ok=True)
    if cfg.mode == "ddm":
        sources = [realized.source_fn(g) for g in realized.layout.subdomains]
        system = assemble_ddm(realized.layout, realized.bundles, sources)
        sol = solve_ddm(system)
        jump, scale = check_jump_free(sol)
        norm = float(np.sqrt(sum(f.phi_l2_norm() ** 2 for f in sol.fields)))
        print(f"solved {realized.layout.n_cells} cells on "
              f"{realized.layout.n_subdomains} subdomains; ||phi|| = {norm:.6g}; "
              f"max interface jump = {jump:.3e}")
    else:
        coeffs = CellCoefficients(realized.grid, realized.bundles)
        system = assemble_mono(
            realized.grid, realized.bundles, realized.source_fn(realized.grid),
            coeffs=coeffs,
        )
        sol = solve_system(system)
        recon = average_reconstruct(realized.grid, coeffs, sol)
        print(f"solved {realized.grid.n_cells} cells; ||phi|| = "
              f"{sol.phi_l2_norm():.6g}")
        if args.vtk:
            _dump_vtk(realized, realized.grid, sol, recon, None, args.out, "solve")
    return 0


def cmd_verify(args) -> int:
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failures += 1

    # manufactured-solution convergence (2D)
    errors = []
    for n in (8, 16, 32):
        grid, bundles, exact = benchio.mms_problem(dim=2, cells=n)
        coeffs = CellCoefficients(grid, bundles)
        system = assemble_mono(grid, bundles, exact.source_cells(grid), coeffs=coeffs)
        sol = solve_system(system)
        errors.append(
            (benchio.l2_error_phi(grid, sol.phi, exact),
             benchio.l2_error_p(grid, sol, exact))
        )
    orders = [
        (np.log2(errors[i][0] / errors[i + 1][0]),
         np.log2(errors[i][1] / errors[i + 1][1]))
        for i in range(len(errors) - 1)
    ]
    phi_order = min(o[0] for o in orders)
    p_order = min(o[1] for o in orders)
    report("mms convergence", phi_order >= 0.9 and p_order >= 0.9,
           f"observed orders phi {phi_order:.3f}, p {p_order:.3f}")

    # discrete T-coercivity probe
    cfg = benchio.takeda_preset("mono1", dim=2)
    realized = benchio.realize(cfg)
    alpha = min(
        validate_coefficient_assumptions(b).alpha for b in realized.bundles.values()
    )
    system = assemble_mono(
        realized.grid, realized.bundles, realized.source_fn(realized.grid)
    )
    probe = t_coercivity_check(system, alpha=alpha, trials=50, seed=7)
    report("t-coercivity probe", probe.ok,
           f"alpha = {alpha:.4g}, min margin = {probe.min_margin:.3e}")

    # DDM matching equivalence on the 2D preset
    ddm_cfg = benchio.takeda_preset("ddm1", dim=2)
    ddm = benchio.realize(ddm_cfg)
    sources = [ddm.source_fn(g) for g in ddm.layout.subdomains]
    sol_ddm = solve_ddm(assemble_ddm(ddm.layout, ddm.bundles, sources))
    jump, scale = check_jump_free(sol_ddm)
    report("ddm jump-free", jump <= 1e-9 * max(scale, 1.0),
           f"max jump {jump:.3e} (scale {scale:.3g})")
    return 1 if failures else 0


def cmd_preset(args) -> int:
    cfg = benchio.takeda_preset(args.name, dim=args.dim)
    text = benchio.emit_config(cfg)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spnfem",
        description="Mixed RTN0/Q0 SPN solver with a posteriori estimators and AMR",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the adaptive refinement loop")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="out")
    run.add_argument("--mode", choices=["mono", "ddm"])
    run.add_argument("--theta", type=float)
    run.add_argument("--eps-rel", dest="eps_rel", type=float)
    run.add_argument("--max-iter", dest="max_iter", type=int)
    run.add_argument("--vtk", action="store_true")
    run.set_defaults(func=cmd_run)

    solve = sub.add_parser("solve", help="single solve on the initial mesh")
    solve.add_argument("--config", required=True)
    solve.add_argument("--out", default="out")
    solve.add_argument("--mode", choices=["mono", "ddm"])
    solve.add_argument("--vtk", action="store_true")
    solve.set_defaults(func=cmd_solve)

    verify = sub.add_parser("verify", help="quick built-in verification suite")
    verify.set_defaults(func=cmd_verify)

    preset = sub.add_parser("preset", help="emit a benchmark configuration")
    preset.add_argument("--name", default="mono1",
                        choices=["mono1", "mono2", "ddm1", "ddm2"])
    preset.add_argument("--dim", type=int, default=3, choices=[2, 3])
    preset.add_argument("--out")
    preset.set_defaults(func=cmd_preset)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
