"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from spnfem.coefficients import Material


def random_valid_material(
    rng: np.random.Generator, order: int, groups: int, name: str = "rand"
) -> Material:
    """Cross sections satisfying the removal/dominance assumptions."""
    sigma_t = rng.uniform(0.5, 2.0, size=groups)
    sigma_s = np.zeros((order + 1, groups, groups))
    for m in range(order + 1):
        self_frac = rng.uniform(0.1, 0.5) / (1 + m)
        for g in range(groups):
            sigma_s[m, g, g] = self_frac * sigma_t[g]
        removal = sigma_t - np.diag(sigma_s[m])
        if groups > 1:
            # inter-group transfer well below the dominance limit
            limit = 0.5 / (groups - 1)
            for g in range(groups):
                for gp in range(groups):
                    if gp != g:
                        sigma_s[m, g, gp] = rng.uniform(0, limit) * removal[g]
    return Material(name=name, sigma_t=sigma_t, sigma_s=sigma_s)
