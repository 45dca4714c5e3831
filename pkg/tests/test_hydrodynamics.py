"""Slow projections, conductivity, Fourier law, and shifted-background response."""

import numpy as np
import pytest

from pboltz.hydrodynamics import (
    CollisionResponse,
    DeflatedInverse,
    DiffusivityModel,
    SlowBasis,
    SlowState,
    compute_kappa,
    currents,
    enforce_parity,
    fourier_law_check,
    nonlinear_diffusivity,
    observables,
    slaved_state,
)


@pytest.fixture(scope="module")
def basis12(stack12):
    _, disp, _ = stack12
    return SlowBasis(disp)


@pytest.fixture(scope="module")
def kappa12(stack12, operators12, summary12):
    _, disp, _ = stack12
    return compute_kappa(operators12[2], disp, summary12)


@pytest.fixture(scope="module")
def solver12(stack12, operators12, summary12):
    _, disp, _ = stack12
    return DeflatedInverse(operators12[2], disp, summary12)


@pytest.fixture(scope="module")
def response12(stack12, collision12, operators12, summary12):
    _, disp, _ = stack12
    return CollisionResponse(collision12, operators12[2], disp, summary12)


class TestSlowBasis:
    def test_gram_entries_are_dispersion_moments(self, stack12, basis12):
        grid, disp, _ = stack12
        G = basis12.gram
        assert np.isclose(G[0, 0], 1.0)
        assert np.isclose(G[0, 1], grid.integrate(disp.winv))
        assert np.isclose(G[1, 1], grid.integrate(disp.winv2))

    def test_orthonormal_pair(self, basis12):
        ip = basis12.inner
        for i in range(2):
            for j in range(2):
                val = ip.inner(basis12.u[:, i], basis12.u[:, j])
                assert np.isclose(val, float(i == j), atol=1e-12)

    def test_projection_idempotent_and_orthogonal(self, basis12, rng):
        f = rng.standard_normal(basis12.e.shape[0])
        Pf = basis12.project_P(f)
        assert np.allclose(basis12.project_P(Pf), Pf, atol=1e-14)
        assert abs(basis12.inner.inner(Pf, basis12.project_Q(f))) < 1e-12

    def test_projects_members_to_themselves(self, stack12, basis12):
        _, disp, _ = stack12
        assert np.allclose(basis12.project_P(disp.winv), disp.winv)

    def test_annihilates_odd_fields(self, stack12, basis12):
        _, disp, _ = stack12
        odd = disp.grad[:, 0] * disp.winv2
        assert np.abs(basis12.project_P(odd)).max() < 1e-14

    def test_gradient_of_slow_stays_orthogonal(self, stack12, basis12, rng):
        # odd times even is odd: P(d1 omega * P f) = 0
        grid, disp, _ = stack12
        f = rng.standard_normal(grid.size)
        g = disp.grad[:, 0] * basis12.project_P(f)
        assert np.abs(basis12.project_P(g)).max() < 1e-10

    def test_state_round_trip(self, stack12, basis12):
        _, disp, _ = stack12
        state = SlowState(0.7, -0.3)
        back = basis12.state_from_field(state.as_field(disp))
        assert np.isclose(back.t1, 0.7)
        assert np.isclose(back.t2, -0.3)


class TestObservables:
    def test_slow_members(self, stack12, basis12):
        grid, disp, _ = stack12
        t1, t2 = observables(disp, disp.winv)
        assert np.isclose(t1, 1.0)
        assert np.isclose(t2, grid.integrate(disp.winv))

    def test_odd_fields_have_zero_observables(self, stack12):
        _, disp, _ = stack12
        odd = disp.grad[:, 0] * disp.winv
        t1, t2 = observables(disp, odd)
        assert abs(t1) < 1e-15
        assert abs(t2) < 1e-15

    def test_axiswise_even_fields_have_near_eps_currents(self, stack12, rng):
        # per-axis even fields cancel pairwise in the averaged quadrature;
        # the only leak is the self-paired -pi plane where sin(-pi) ~ 1e-16
        grid, disp, _ = stack12
        f = rng.standard_normal(grid.size)
        even = enforce_parity(grid, f, (+1, +1))
        j1, j2 = currents(disp, even)
        assert np.abs(j1).max() < 1e-13
        assert np.abs(j2).max() < 1e-13

    def test_point_even_fields_have_tiny_currents(self, stack12, rng):
        # even under the full point reflection only: cancellation happens in
        # the global sum, leaving roundoff at the 1e-15 level
        grid, disp, _ = stack12
        f = rng.standard_normal(grid.size)
        even = 0.5 * (f + f[grid.reflection()])
        j1, j2 = currents(disp, even)
        assert np.abs(j1).max() < 1e-12
        assert np.abs(j2).max() < 1e-12

    def test_current_of_odd_test_field(self, stack12):
        # w = d1 omega * omega^-3 gives a nonzero first component with a
        # quadrature-oracle value, and an exactly zero second component
        grid, disp, _ = stack12
        w = disp.grad[:, 0] * disp.winv2 * disp.winv
        j1, _ = currents(disp, w)
        expect = -grid.integrate(disp.grad[:, 0] ** 2 * disp.winv2) / (2 * np.pi)
        assert np.isclose(j1[0], expect, rtol=1e-12)
        assert abs(j1[1]) < 1e-15

    def test_enforce_parity_is_exact(self, stack12, rng):
        grid, _, _ = stack12
        f = rng.standard_normal(grid.size)
        g = enforce_parity(grid, f, (-1, +1))
        assert np.array_equal(g[grid.axis_reflection(0)], -g)
        assert np.array_equal(g[grid.axis_reflection(1)], g)


class TestKappa:
    def test_symmetric_positive_definite(self, kappa12):
        K = kappa12.kappa_op
        assert np.allclose(K, K.T)
        assert kappa12.mu.min() > 0.0

    def test_pairing_matrix_symmetric_positive_diagonal(self, kappa12):
        K = kappa12.kappa_ab
        assert abs(K[0, 1] - K[1, 0]) < 1e-8 * np.abs(K).max()
        assert K[0, 0] > 0.0 and K[1, 1] > 0.0

    def test_direction_invariance(self, stack12, operators12, summary12, kappa12):
        _, disp, _ = stack12
        other = compute_kappa(operators12[2], disp, summary12, axis=1)
        dev = np.abs(other.kappa_op - kappa12.kappa_op).max()
        assert dev < 1e-8 * np.abs(kappa12.kappa_op).max()

    def test_cross_direction_elements_vanish(self, kappa12):
        assert kappa12.cross_direction_sup < 1e-8 * np.abs(kappa12.kappa_ab).max()

    def test_gram_round_trip(self, kappa12):
        assert np.allclose(kappa12.convert_ab_to_op(), kappa12.kappa_op)

    def test_solve_residual_small(self, kappa12):
        assert kappa12.solve_residual < 1e-8


class TestFourierLaw:
    def test_zero_state_gives_zero(self, stack12, kappa12, solver12):
        _, disp, _ = stack12
        state = SlowState(0.0, 0.0)
        v = slaved_state(solver12, state, np.array([0.05, 0.0]))
        assert np.abs(v).max() == 0.0
        rep = fourier_law_check(kappa12, state, np.array([0.05, 0.0]), v)
        assert rep.residual == 0.0

    @pytest.mark.parametrize(
        "tvec,p",
        [
            ((1.0, 0.0), (0.05, 0.0)),
            ((0.3, -0.2), (0.0, 0.05)),
            ((0.1, 0.4), (0.03, 0.04)),
        ],
    )
    def test_slaved_states_satisfy_law(self, kappa12, solver12, tvec, p):
        state = SlowState(*tvec)
        p = np.asarray(p)
        v = slaved_state(solver12, state, p)
        rep = fourier_law_check(kappa12, state, p, v, solver=solver12)
        assert rep.passed
        assert rep.residual < 0.1 * rep.bound

    def test_slaved_state_lies_in_fast_subspace(self, kappa12, solver12, basis12):
        v = slaved_state(solver12, SlowState(1.0, 0.0), np.array([0.05, 0.0]))
        overlap = np.abs(basis12.project_P(v)).max() / np.abs(v).max()
        assert overlap < 1e-12


class TestCollisionResponse:
    def test_zero_shift_matches_deflated_inverse(self, response12, solver12, stack12):
        _, disp, _ = stack12
        g = disp.grad[:, 0] * disp.winv
        x, diag = response12.solve(np.zeros_like(g), g)
        assert diag["residual"] < 1e-10
        y = solver12.apply(g)
        assert np.linalg.norm(x - y) < 1e-9 * np.linalg.norm(y)

    def test_shift_term_vanishes_at_zero(self, response12, stack12, rng):
        grid, _, _ = stack12
        v = rng.standard_normal(grid.size)
        m = response12.shift_term(np.zeros(grid.size), v)
        assert np.abs(m).max() == 0.0

    def test_shift_term_linear_in_direction(self, response12, stack12, rng):
        grid, disp, _ = stack12
        Tf = SlowState(0.01, 0.0).as_field(disp)
        v = rng.standard_normal(grid.size)
        m1 = response12.shift_term(Tf, v)
        m2 = response12.shift_term(Tf, 2.0 * v)
        assert np.allclose(m2, 2.0 * m1, rtol=1e-10)

    def test_batch_solve_matches_single(self, response12, stack12, rng):
        grid, disp, _ = stack12
        Ts = 0.01 * rng.standard_normal((3, 1)) * disp.winv2
        rhs = disp.grad[:, 0] * disp.winv
        xb = response12.solve_batch(Ts, np.broadcast_to(rhs, (3, grid.size)))
        for i in range(3):
            xi, _ = response12.solve(Ts[i], rhs)
            assert np.linalg.norm(xb[i] - xi) < 1e-8 * np.linalg.norm(xi)

    def test_rejects_nonpositive_background(self, response12, stack12, rng):
        grid, disp, _ = stack12
        v = rng.standard_normal(grid.size)
        with pytest.raises(ValueError):
            response12.shift_term(-2.0 * disp.winv, v)


class TestNonlinearDiffusivity:
    def test_zero_shift_reproduces_conductivity(self, response12, kappa12):
        K0 = nonlinear_diffusivity(response12, SlowState(0.0, 0.0))
        dev = np.abs(K0.matrix_op - kappa12.kappa_op).max()
        assert dev < 1e-8 * np.abs(kappa12.kappa_op).max()

    def test_shifted_matrix_positive(self, response12):
        K = nonlinear_diffusivity(response12, SlowState(0.01, 0.0))
        sym = 0.5 * (K.matrix_op + K.matrix_op.T)
        assert np.linalg.eigvalsh(sym).min() > 0.0

    def test_continuity_under_halving(self, response12):
        K0 = nonlinear_diffusivity(response12, SlowState(0.0, 0.0)).matrix_op
        K1 = nonlinear_diffusivity(response12, SlowState(0.01, 0.0)).matrix_op
        K2 = nonlinear_diffusivity(response12, SlowState(0.005, 0.0)).matrix_op
        d1 = np.abs(K1 - K0).max()
        d2 = np.abs(K2 - K0).max()
        assert 1.6 < d1 / d2 < 2.4

    def test_rejects_nonpositive_background(self, response12, stack12):
        with pytest.raises(ValueError):
            nonlinear_diffusivity(response12, SlowState(-2.0, 0.0))

    def test_response_surface_matches_direct(self, response12):
        model = DiffusivityModel(response12)
        direct = nonlinear_diffusivity(response12, SlowState(0.01, 0.0)).matrix_op
        dev = np.abs(model.evaluate(0.01, 0.0) - direct).max()
        assert dev < 1e-3 * np.abs(direct).max()
        assert model.curvature > 0.0
