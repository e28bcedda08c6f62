"""Independent dense assembly oracle.

Rebuilds the mono-domain system with plain nested loops and numerical
quadrature for every volume integral, sharing only the dof numbering with
the production path.  Used to cross-check the vectorized sparse assembly
entry-wise on small grids.
"""

from __future__ import annotations

import itertools

import numpy as np

from spnfem.fem import build_dof_layout
from spnfem.mesh import BCKind


def _gauss01(n=2):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def dense_assemble(grid, bundles, source):
    nc = next(iter(bundles.values())).nc
    layout = build_dof_layout(grid, nc)
    A = np.zeros((layout.size, layout.size))
    b = np.zeros(layout.size)
    gx, gw = _gauss01(2)
    d = grid.dim
    pts = list(itertools.product(range(2), repeat=d))

    for k in range(grid.n_cells):
        bundle = bundles[grid.material_names[grid.material_ids[k]]]
        w = grid.cell_widths[k]
        vol = grid.cell_volumes[k]
        # local facet dof list: (axis, side, global facet)
        local = [
            (a, s, int(grid.cell_facets[k, a, s])) for a in range(d) for s in (0, 1)
        ]

        def shape(a, s, xi):
            # vector basis of facet (a, s): component a only, per-axis linear
            return (1.0 - xi[a]) if s == 0 else xi[a]

        def div(a, s):
            return (1.0 if s == 1 else -1.0) / w[a]

        # -(To p, q) by tensor quadrature
        for (a1, s1, f1) in local:
            i1 = layout.facet_to_active[f1]
            if i1 < 0:
                continue
            for (a2, s2, f2) in local:
                i2 = layout.facet_to_active[f2]
                if i2 < 0 or a1 != a2:
                    continue  # different components of the vector are orthogonal
                integral = 0.0
                for combo in itertools.product(range(2), repeat=d):
                    xi = np.array([gx[c] for c in combo])
                    wq = np.prod([gw[c] for c in combo])
                    integral += wq * shape(a1, s1, xi) * shape(a2, s2, xi)
                integral *= vol
                for c1 in range(nc):
                    for c2 in range(nc):
                        A[c1 * layout.n_active + i1, c2 * layout.n_active + i2] -= (
                            bundle.To[c1, c2] * integral
                        )
        # (phi, H^T div q) + (psi, H^T div p)
        for (a, s, f) in local:
            i = layout.facet_to_active[f]
            if i < 0:
                continue
            integral = div(a, s) * vol
            for c1 in range(nc):
                for c2 in range(nc):
                    r = layout.n_p + c1 * grid.n_cells + k
                    q = c2 * layout.n_active + i
                    A[r, q] += bundle.H.T[c1, c2] * integral
                    A[q, r] += bundle.H.T[c1, c2] * integral
        # (Te phi, psi)
        for c1 in range(nc):
            for c2 in range(nc):
                A[layout.n_p + c1 * grid.n_cells + k,
                  layout.n_p + c2 * grid.n_cells + k] += bundle.Te[c1, c2] * vol
        # source
        for c in range(nc):
            b[layout.n_p + c * grid.n_cells + k] += source[c, k] * vol

    # Robin boundary: -(Gt (p.n), (q.n)), traces constant +-1
    for f in range(grid.n_facets):
        if grid.facet_bc[f] != int(BCKind.ROBIN):
            continue
        i = layout.facet_to_active[f]
        owner = grid.facet_owner[f]
        bundle = bundles[grid.material_names[grid.material_ids[owner]]]
        area = grid.facet_area[f]
        for c1 in range(nc):
            for c2 in range(nc):
                A[c1 * layout.n_active + i, c2 * layout.n_active + i] -= (
                    bundle.Gamma_tilde[c1, c2] * area
                )
    return A, b
