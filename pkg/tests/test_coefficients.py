"""Coefficient assembly: recurrence, parity matrices, Robin matrices, checks."""

from fractions import Fraction

import numpy as np
import pytest

from spnfem.coefficients import (
    assemble_parity_matrices,
    assemble_robin_matrices,
    build_bundle,
    build_bundles,
    compute_angular_constants,
    diffusion_reduction,
    material_from_diffusion,
    upper_bidiagonal_block,
    validate_coefficient_assumptions,
    CrossSectionSet,
    Material,
)
from spnfem.errors import (
    AssumptionViolationError,
    InvalidOrderError,
    NotADiffusionModelError,
)

from util import random_valid_material


def exact_recurrence(order: int):
    """Independent oracle: the alpha/t recurrence in exact rational arithmetic."""
    alpha = [Fraction(1)]
    for m in range(order):
        alpha.append(Fraction(4 * (m + 1) ** 2 - 1, 1) / ((m + 1) * alpha[m]))
    t = [a * a / (2 * m + 1) for m, a in enumerate(alpha)]
    return alpha, t


class TestAngularConstants:
    def test_sp1_values(self):
        ac = compute_angular_constants(1)
        assert np.allclose(ac.alpha, [1.0, 3.0], rtol=0, atol=0)
        assert np.allclose(ac.t, [1.0, 3.0], rtol=0, atol=0)

    def test_sp3_values(self):
        ac = compute_angular_constants(3)
        assert ac.t[2] == pytest.approx(1.25, rel=1e-15)
        assert ac.t[3] == pytest.approx(28.0 / 9.0, rel=1e-15)
        assert ac.alpha[2] == pytest.approx(2.5, rel=1e-15)
        assert ac.alpha[3] == pytest.approx(14.0 / 3.0, rel=1e-15)

    @pytest.mark.parametrize("order", [1, 3, 5, 7, 9])
    def test_matches_rational_oracle(self, order):
        ac = compute_angular_constants(order)
        alpha, t = exact_recurrence(order)
        for m in range(order + 1):
            assert ac.alpha[m] == pytest.approx(float(alpha[m]), rel=1e-14)
            assert ac.t[m] == pytest.approx(float(t[m]), rel=1e-14)
            assert ac.alpha[m] > 0 and ac.t[m] > 0

    @pytest.mark.parametrize("order", [0, 2, -1, 4])
    def test_rejects_non_odd_orders(self, order):
        with pytest.raises(InvalidOrderError):
            compute_angular_constants(order)


class TestParityMatrices:
    def test_bidiagonal_pattern(self):
        for nhat in range(1, 6):
            H = upper_bidiagonal_block(nhat)
            expect = np.eye(nhat, dtype=int) + np.eye(nhat, k=1, dtype=int)
            assert np.array_equal(H.astype(int), expect)
        assert np.array_equal(upper_bidiagonal_block(2), [[1, 1], [0, 1]])

    def test_sp1_one_group(self):
        mat = Material(
            name="m", sigma_t=[1.0], sigma_s=[[[0.5]], [[0.0]]]
        )
        ac = compute_angular_constants(1)
        H, Te, To, Te_inv, To_inv = assemble_parity_matrices(mat, ac)
        assert np.allclose(Te, [[0.5]], rtol=1e-15)
        assert np.allclose(To, [[3.0]], rtol=1e-15)
        assert np.allclose(H, [[1.0]])

    def test_two_groups_no_transfer_is_block_diagonal(self):
        rng = np.random.default_rng(3)
        mat = random_valid_material(rng, order=3, groups=2)
        sigma_s = mat.sigma_s.copy()
        for m in range(4):
            sigma_s[m] = np.diag(np.diag(sigma_s[m]))
        mat = Material(name="m", sigma_t=mat.sigma_t, sigma_s=sigma_s)
        ac = compute_angular_constants(3)
        _H, Te, To, _Tei, _Toi = assemble_parity_matrices(mat, ac)
        nhat = 2
        assert np.all(Te[:nhat, nhat:] == 0) and np.all(Te[nhat:, :nhat] == 0)
        assert np.all(To[:nhat, nhat:] == 0) and np.all(To[nhat:, :nhat] == 0)

    def test_inverse_identity(self):
        rng = np.random.default_rng(11)
        ac = compute_angular_constants(3)
        for _ in range(5):
            mat = random_valid_material(rng, order=3, groups=3)
            _H, _Te, To, _Tei, To_inv = assemble_parity_matrices(mat, ac)
            err = np.linalg.norm(To @ To_inv - np.eye(To.shape[0]))
            assert err <= 1e-12 * np.linalg.norm(To)

    def test_singular_te_guard(self):
        mat = Material(name="void", sigma_t=[1.0], sigma_s=[[[1.0]], [[0.0]]])
        ac = compute_angular_constants(1)
        with pytest.raises(AssumptionViolationError):
            assemble_parity_matrices(mat, ac)
        _H, Te, _To, Te_inv, _Toi = assemble_parity_matrices(
            mat, ac, allow_vanishing_te=True
        )
        assert Te_inv is None and Te[0, 0] == 0.0


class TestRobinMatrices:
    def test_sp1(self):
        ac = compute_angular_constants(1)
        Ge, Gt = assemble_robin_matrices(ac, groups=1)
        assert np.allclose(Ge, [[0.5]], rtol=0, atol=1e-15)
        assert np.allclose(Gt, [[2.0]], rtol=0, atol=1e-14)

    def test_sp3_exact_values(self):
        ac = compute_angular_constants(3)
        Ge, _Gt = assemble_robin_matrices(ac, groups=1)
        expect = np.array([[0.5, 0.3125], [0.3125, 0.78125]])
        assert np.allclose(Ge, expect, rtol=0, atol=1e-12)

    def test_groups_block_structure(self):
        ac = compute_angular_constants(3)
        Ge1, Gt1 = assemble_robin_matrices(ac, groups=1)
        Ge2, Gt2 = assemble_robin_matrices(ac, groups=2)
        assert np.allclose(Ge2[:2, :2], Ge1) and np.allclose(Ge2[2:, 2:], Ge1)
        assert np.all(Ge2[:2, 2:] == 0)
        assert np.allclose(Gt2[:2, :2], Gt1)

    @pytest.mark.parametrize("order", [1, 3, 5, 7, 9])
    def test_symmetric_positive_definite(self, order):
        ac = compute_angular_constants(order)
        Ge, Gt = assemble_robin_matrices(ac, groups=2)
        assert np.array_equal(Ge, Ge.T)
        assert np.linalg.eigvalsh(Ge).min() > 0
        assert np.linalg.eigvalsh(Gt).min() > 0


class TestValidation:
    def test_clean_one_group(self):
        mat = Material(name="m", sigma_t=[1.0], sigma_s=[[[0.0]], [[0.0]]])
        bundle = build_bundle(mat, compute_angular_constants(1))
        report = validate_coefficient_assumptions(bundle)
        assert report.ok
        assert report.alpha > 0

    def test_dominance_violation_flagged(self):
        # transfer 1->2 exceeds the group-1 removal
        mat = Material(
            name="m",
            sigma_t=[1.0, 1.0],
            sigma_s=[
                [[0.8, 0.5], [0.0, 0.5]],
                [[0.0, 0.0], [0.0, 0.0]],
            ],
        )
        bundle = build_bundle(mat, compute_angular_constants(1))
        report = validate_coefficient_assumptions(bundle)
        assert not report.scattering_dominated
        assert not report.ok and any("scattering" in v for v in report.violations)

    def test_diffusion_bounds(self):
        mat = material_from_diffusion("m", diffusion=[1.0], sigma_a=[0.5])
        bundle = build_bundle(mat, compute_angular_constants(1))
        report = validate_coefficient_assumptions(bundle)
        assert report.to_star == pytest.approx(1.0, rel=1e-14)
        assert report.te_star == pytest.approx(0.5, rel=1e-14)
        assert report.alpha == pytest.approx(0.25, rel=1e-13)  # te_star / 2

    def test_quadratic_form_bounds_hold(self):
        rng = np.random.default_rng(5)
        mat = random_valid_material(rng, order=3, groups=2)
        bundle = build_bundle(mat, compute_angular_constants(3))
        report = validate_coefficient_assumptions(bundle)
        assert report.ok
        for _ in range(100):
            x = rng.standard_normal(bundle.nc)
            n2 = x @ x
            assert x @ bundle.To @ x >= report.to_star * n2 - 1e-12
            assert x @ bundle.Gamma_tilde @ x >= report.gamma_tilde_star * n2 - 1e-12

    def test_benchmark_materials_pass(self):
        from spnfem.benchio import realize, takeda_preset

        realized = realize(takeda_preset("mono1", dim=2))
        for bundle in realized.bundles.values():
            report = validate_coefficient_assumptions(bundle)
            assert report.ok, report.violations
            assert report.epsilon_required < 1.0


class TestDiffusionReduction:
    def test_sp1_view(self):
        mat = material_from_diffusion("m", diffusion=[2.0], sigma_a=[0.3])
        bundle = build_bundle(mat, compute_angular_constants(1))
        view = diffusion_reduction(bundle)
        assert np.allclose(view.D, [[2.0]], rtol=1e-14)

    def test_two_group_diagonal(self):
        mat = material_from_diffusion("m", diffusion=[1.5, 0.4], sigma_a=[0.1, 0.2])
        bundle = build_bundle(mat, compute_angular_constants(1))
        view = diffusion_reduction(bundle)
        assert np.allclose(view.D, np.diag([1.5, 0.4]), rtol=1e-14)

    def test_rejects_sp3(self):
        rng = np.random.default_rng(9)
        mat = random_valid_material(rng, order=3, groups=1)
        bundle = build_bundle(mat, compute_angular_constants(3))
        with pytest.raises(NotADiffusionModelError):
            diffusion_reduction(bundle)


def test_build_bundles_shares_constants():
    rng = np.random.default_rng(2)
    xs = CrossSectionSet(
        order=3,
        groups=2,
        materials={
            "a": random_valid_material(rng, 3, 2, "a"),
            "b": random_valid_material(rng, 3, 2, "b"),
        },
    )
    bundles = build_bundles(xs)
    assert bundles["a"].constants is bundles["b"].constants
    assert bundles["a"].nc == 4
