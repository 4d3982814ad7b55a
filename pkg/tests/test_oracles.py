"""The reference computations themselves: laminate formulas and Richardson."""

import numpy as np
import pytest

from perihom import fem, tensors as T
from perihom.errors import SingularBlock
from perihom.mesh import BoundaryPartition, DomainSpec, build_mesh
from perihom.oracles import (LaminateProfile, dense_element_stiffness,
                             fine_reference, laminate_cell_oracle,
                             manufactured_sine, richardson_estimate,
                             scalar_harmonic_mean)

UNIT = DomainSpec((0.0, 0.0), (1.0, 1.0))
ALL_D = BoundaryPartition(frozenset({"left", "right", "bottom", "top"}))


class TestLaminateOracle:
    def test_equal_volume_scalar_phases(self):
        assert scalar_harmonic_mean([1.0, 5.0]) == pytest.approx(5.0 / 3.0)

    def test_single_phase_trivial(self):
        t = T.isotropic_tensor(1.0, 1.0).entries
        profile = LaminateProfile(direction=0, breakpoints=(), phase_tensors=(t,))
        slopes, a_hat = laminate_cell_oracle(profile)
        assert np.abs(slopes).max() <= 1e-14
        np.testing.assert_allclose(a_hat, t, atol=1e-14)

    def test_identical_phases_degenerate(self):
        t = T.isotropic_tensor(2.0, 0.5).entries
        profile = LaminateProfile(direction=0, breakpoints=(-0.1,),
                                  phase_tensors=(t, t.copy()))
        slopes, a_hat = laminate_cell_oracle(profile)
        assert np.abs(slopes).max() <= 1e-14
        np.testing.assert_allclose(a_hat, t, atol=1e-14)

    def test_scalar_surrogate_block_formula(self):
        eye = np.einsum("ij,ab->ijab", np.eye(2), np.eye(2))
        profile = LaminateProfile(direction=0, breakpoints=(0.0,),
                                  phase_tensors=(1.0 * eye, 5.0 * eye))
        slopes, a_hat = laminate_cell_oracle(profile)
        assert a_hat[0, 0, 0, 0] == pytest.approx(5.0 / 3.0)
        assert a_hat[1, 1, 0, 0] == pytest.approx(3.0)
        assert slopes[0, 0, 0, 0] == pytest.approx(2.0 / 3.0)
        assert slopes[1, 0, 0, 0] == pytest.approx(-2.0 / 3.0)

    def test_elasticity_result_keeps_symmetries(self):
        phases = (T.isotropic_tensor(1.0, 1.0).entries,
                  T.isotropic_tensor(5.0, 5.0).entries)
        profile = LaminateProfile(direction=0, breakpoints=(0.0,),
                                  phase_tensors=phases)
        _, a_hat = laminate_cell_oracle(profile)
        assert T.validate_symmetries(a_hat, tol=1e-12) == []
        # transverse shear sees the arithmetic mean in at least one entry family
        assert a_hat[0, 0, 0, 0] < 0.5 * (phases[0][0, 0, 0, 0] + phases[1][0, 0, 0, 0])

    def test_singular_block(self):
        zero = np.zeros((2, 2, 2, 2))
        profile = LaminateProfile(direction=0, breakpoints=(0.0,),
                                  phase_tensors=(zero, zero))
        with pytest.raises(SingularBlock):
            laminate_cell_oracle(profile)

    def test_breakpoint_validation(self):
        t = T.isotropic_tensor(1.0, 1.0).entries
        with pytest.raises(ValueError):
            LaminateProfile(direction=0, breakpoints=(0.2, 0.1),
                            phase_tensors=(t, t, t))


class TestDenseElementOracle:
    def test_matches_closed_form_rigid_annihilation(self):
        K = dense_element_stiffness(T.isotropic_tensor(1.0, 1.0), 0.5)
        # translations are in the element null space
        for comp in range(2):
            vec = np.zeros(8)
            vec[comp::2] = 1.0
            assert np.abs(K @ vec).max() <= 1e-14
        assert np.abs(K - K.T).max() <= 1e-14

    def test_quadrature_order_insensitive(self):
        t = T.isotropic_tensor(0.7, 1.9)
        k1 = dense_element_stiffness(t, 0.3, order=8)
        k2 = dense_element_stiffness(t, 0.3, order=16)
        assert np.abs(k1 - k2).max() <= 1e-13


class TestRichardson:
    def test_estimate_formula(self):
        assert richardson_estimate(4.0, 1.0, order=2) == pytest.approx(1.0)

    def test_manufactured_certificate_shrinks_by_four(self):
        lam = mu = 1.0
        u_ex, body = manufactured_sine(lam, mu)
        coeff = fem.ConstantCoefficient(T.isotropic_tensor(lam, mu))
        ests = []
        for m in (8, 16):
            mesh = build_mesh(UNIT, 1.0 / m, ALL_D)
            spec = fem.MixedProblemSpec(mesh=mesh, coeff=coeff, body_force=body,
                                        dirichlet_data=u_ex, mode="dirichlet")
            _, est = fine_reference(spec, refinement=2, tol=1e-12)
            assert est["informative"]
            ests.append(est["L2"])
        ratio = ests[0] / ests[1]
        assert 3.3 <= ratio <= 4.8  # order-2 halving

    def test_certificate_tracks_true_error(self):
        lam = mu = 1.0
        u_ex, body = manufactured_sine(lam, mu)
        coeff = fem.ConstantCoefficient(T.isotropic_tensor(lam, mu))
        mesh = build_mesh(UNIT, 1 / 16, ALL_D)
        spec = fem.MixedProblemSpec(mesh=mesh, coeff=coeff, body_force=body,
                                    dirichlet_data=u_ex, mode="dirichlet")
        ref, est = fine_reference(spec, refinement=2, tol=1e-12)
        sol = fem.solve_mixed(spec, tol=1e-12)
        true_err = fem.l2_norm(mesh, sol.u - u_ex(mesh.nodes))
        # the estimate certifies the fine solve; it must be below the coarse error
        assert est["L2"] <= true_err
        assert est["L2"] >= 0.1 * true_err / 4.0

    def test_refinement_one_is_flagged(self):
        u_ex, body = manufactured_sine(1.0, 1.0)
        mesh = build_mesh(UNIT, 1 / 8, ALL_D)
        spec = fem.MixedProblemSpec(
            mesh=mesh, coeff=fem.ConstantCoefficient(T.isotropic_tensor(1.0, 1.0)),
            body_force=body, dirichlet_data=u_ex, mode="dirichlet")
        sol, est = fine_reference(spec, refinement=1)
        assert not est["informative"]
        assert np.isnan(est["L2"])
