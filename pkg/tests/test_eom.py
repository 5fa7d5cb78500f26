import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinboson.ansatz import AnsatzVariant, MultiDState, initial_state, norm
from spinboson.eom import (
    IntegratorConfig,
    TrajectoryAbortError,
    assemble_eom,
    param_count,
    run_trajectory,
    solve_eom,
    state_derivative,
    state_to_vector,
    step,
    vector_to_state,
)
from spinboson.model import (
    DiscretizedBath,
    SpectralDensityParams,
    SystemParams,
    discretize_bath,
)
from spinboson.oracle import FockConfig, analytic_two_level, fock_propagate


def small_bath():
    return DiscretizedBath(
        omegas=np.array([0.5, 1.3]),
        lambdas=np.array([0.2, 0.15]),
        gamma_norm=0.05,
    )


def random_state(seed, variant, m, n_b, scale=0.4):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=m) + 1j * rng.normal(size=m)
    b = rng.normal(size=m) + 1j * rng.normal(size=m)
    f = scale * (rng.normal(size=(m, n_b)) + 1j * rng.normal(size=(m, n_b)))
    if variant is AnsatzVariant.D2:
        return MultiDState(variant=variant, a=a, b=b, f=f)
    g = scale * (rng.normal(size=(m, n_b)) + 1j * rng.normal(size=(m, n_b)))
    return MultiDState(variant=variant, a=a, b=b, f=f, g=g)


def noisy_initial(variant, m, n_b, seed=0, amp=1e-2):
    rng = np.random.default_rng(seed)
    noise = amp * (rng.uniform(-1, 1, (m, n_b)) + 1j * rng.uniform(-1, 1, (m, n_b)))
    return initial_state(variant, m=m, alpha=np.zeros(n_b, dtype=complex), noise=noise)


class TestAssembly:
    @pytest.mark.parametrize("variant", list(AnsatzVariant))
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_metric_hermitian_psd(self, variant, m):
        sys = SystemParams(epsilon=0.3, delta=0.2)
        bath = small_bath()
        state = random_state(11 + m, variant, m, 2)
        metric, rhs = assemble_eom(state, sys, bath)
        k = param_count(m, 2, variant)
        assert metric.shape == (k, k)
        assert rhs.shape == (k,)
        np.testing.assert_allclose(metric, metric.conj().T, atol=1e-12)
        evals = np.linalg.eigvalsh(metric)
        assert evals.min() > -1e-12

    def test_bath_mismatch_rejected(self):
        state = noisy_initial(AnsatzVariant.D2, 1, 3)
        with pytest.raises(ValueError):
            assemble_eom(state, SystemParams(), small_bath())

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_metric_hermitian_random(self, seed):
        state = random_state(seed, AnsatzVariant.D1, 2, 2, scale=0.8)
        metric, _ = assemble_eom(state, SystemParams(epsilon=0.5, delta=0.4), small_bath())
        np.testing.assert_allclose(metric, metric.conj().T, atol=1e-10)


class TestSolve:
    def test_well_conditioned_solve(self):
        state = noisy_initial(AnsatzVariant.D1, 2, 2, seed=3)
        metric, rhs = assemble_eom(state, SystemParams(delta=0.2), small_bath())
        du, info = solve_eom(metric, rhs)
        assert not info.used_pinv
        assert np.linalg.norm(metric @ du + 1j * rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1)

    def test_pinv_fallback_on_duplicate_branches(self):
        # two identical branches make the Gram matrix exactly singular
        f = np.tile(np.array([[0.2 + 0.1j, -0.3j]]), (2, 1))
        state = MultiDState(
            variant=AnsatzVariant.D2,
            a=np.array([0.7, 0.7], dtype=complex),
            b=np.array([0.1, 0.1], dtype=complex),
            f=f,
        )
        metric, rhs = assemble_eom(state, SystemParams(delta=0.3), small_bath())
        du, info = solve_eom(metric, rhs, reg_eps=0.0)
        assert info.used_pinv
        # the pseudo-inverse solution still satisfies the projected system
        assert np.linalg.norm(metric @ du + 1j * rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1)

    def test_abort_on_unsolvable_system(self):
        k = 4
        metric = np.zeros((k, k), dtype=complex)
        rhs = np.ones(k, dtype=complex)
        with pytest.raises(TrajectoryAbortError):
            solve_eom(metric, rhs, reg_eps=0.0)


class TestVectorRoundTrip:
    @pytest.mark.parametrize("variant", list(AnsatzVariant))
    def test_round_trip(self, variant):
        state = random_state(9, variant, 3, 4)
        y = state_to_vector(state)
        assert y.size == param_count(3, 4, variant)
        back = vector_to_state(y, 3, 4, variant)
        np.testing.assert_array_equal(back.a, state.a)
        np.testing.assert_array_equal(back.f, state.f)
        if variant is AnsatzVariant.D1:
            np.testing.assert_array_equal(back.g, state.g)


class TestTwoLevelLimit:
    """Decoupled bath: the spin follows the closed-form Rabi solution."""

    @pytest.mark.parametrize("variant", list(AnsatzVariant))
    def test_unbiased(self, variant):
        sys = SystemParams(epsilon=0.0, delta=0.25)
        bath = DiscretizedBath(
            omegas=np.array([0.8, 1.7]), lambdas=np.zeros(2), gamma_norm=0.0
        )
        state = initial_state(variant, m=1, alpha=np.zeros(2, dtype=complex))
        grid = np.linspace(0.0, 40.0, 81)
        res = run_trajectory(
            state, sys, bath, IntegratorConfig(t_final=40.0, tol_rel=1e-10, tol_abs=1e-12), grid
        )
        np.testing.assert_allclose(res.pz, analytic_two_level(sys, grid), atol=1e-8)
        assert res.norm_drift < 1e-8

    def test_biased(self):
        sys = SystemParams(epsilon=0.4, delta=0.3)
        bath = DiscretizedBath(
            omegas=np.array([1.0]), lambdas=np.zeros(1), gamma_norm=0.0
        )
        state = initial_state(AnsatzVariant.D1, m=1, alpha=np.zeros(1, dtype=complex))
        grid = np.linspace(0.0, 30.0, 61)
        res = run_trajectory(
            state, sys, bath, IntegratorConfig(t_final=30.0, tol_rel=1e-10, tol_abs=1e-12), grid
        )
        np.testing.assert_allclose(res.pz, analytic_two_level(sys, grid), atol=1e-8)

    def test_frozen_spin(self):
        # delta = 0: populations cannot move regardless of coupling
        sys = SystemParams(epsilon=0.3, delta=0.0)
        bath = small_bath()
        state = noisy_initial(AnsatzVariant.D1, 2, 2, seed=4)
        grid = np.linspace(0.0, 20.0, 21)
        res = run_trajectory(
            state, sys, bath, IntegratorConfig(t_final=20.0, tol_rel=1e-10, tol_abs=1e-12), grid
        )
        np.testing.assert_allclose(res.pz, 1.0, atol=1e-8)


class TestAgainstExactPropagation:
    def test_single_mode_converges_with_multiplicity(self):
        sys = SystemParams(epsilon=0.0, delta=0.4)
        bath = DiscretizedBath(
            omegas=np.array([1.0]), lambdas=np.array([0.4]), gamma_norm=0.16
        )
        alpha = np.array([0.6 + 0.2j])
        fcfg = FockConfig(n_max=(25,), dt=0.5, t_final=15.0)
        exact = fock_propagate(sys, bath, alpha, fcfg)

        errs = []
        for m in (1, 3):
            rng = np.random.default_rng(2)
            noise = 1e-2 * (
                rng.uniform(-1, 1, (m, 1)) + 1j * rng.uniform(-1, 1, (m, 1))
            )
            state = initial_state(AnsatzVariant.D1, m=m, alpha=alpha, noise=noise)
            res = run_trajectory(
                state,
                sys,
                bath,
                IntegratorConfig(t_final=15.0, tol_rel=1e-10, tol_abs=1e-12),
                fcfg.times,
            )
            errs.append(np.max(np.abs(res.pz - exact.pz)))
        assert errs[1] < 0.5 * errs[0]
        assert errs[1] < 2e-2


class TestConservation:
    @pytest.mark.parametrize("variant", list(AnsatzVariant))
    def test_norm_and_energy(self, variant):
        sys = SystemParams(epsilon=0.2, delta=0.3)
        bath = small_bath()
        state = noisy_initial(variant, 2, 2, seed=8)
        grid = np.linspace(0.0, 25.0, 26)
        res = run_trajectory(
            state, sys, bath, IntegratorConfig(t_final=25.0, tol_rel=1e-10, tol_abs=1e-12), grid
        )
        assert res.norm_drift < 1e-7
        assert res.energy_drift < 1e-7


class TestSchemes:
    _ref = None

    def setup_method(self):
        self.sys = SystemParams(epsilon=0.0, delta=0.3)
        self.bath = small_bath()
        self.state = noisy_initial(AnsatzVariant.D2, 2, 2, seed=12)
        self.grid = np.linspace(0.0, 10.0, 21)

    def reference(self):
        if TestSchemes._ref is None:
            TestSchemes._ref = run_trajectory(
                self.state,
                self.sys,
                self.bath,
                IntegratorConfig(t_final=10.0, tol_rel=1e-12, tol_abs=1e-13),
                self.grid,
            )
        return TestSchemes._ref

    def test_rk4_matches_adaptive(self):
        ref = self.reference()
        res = run_trajectory(
            self.state,
            self.sys,
            self.bath,
            IntegratorConfig(scheme="rk4", dt=0.02, t_final=10.0),
            self.grid,
        )
        np.testing.assert_allclose(res.pz, ref.pz, atol=1e-5)

    def test_etdrk4_matches_adaptive(self):
        ref = self.reference()
        res = run_trajectory(
            self.state,
            self.sys,
            self.bath,
            IntegratorConfig(scheme="etdrk4", dt=0.02, t_final=10.0),
            self.grid,
        )
        np.testing.assert_allclose(res.pz, ref.pz, atol=1e-5)

    def test_rk4_fourth_order_convergence(self):
        ref = self.reference()

        def err(dt):
            res = run_trajectory(
                self.state,
                self.sys,
                self.bath,
                IntegratorConfig(scheme="rk4", dt=dt, t_final=10.0),
                self.grid,
            )
            return np.max(np.abs(res.pz - ref.pz))

        # compare in the truncation-dominated regime, above the floor set by
        # the regularized linear solves
        e1, e2 = err(0.4), err(0.2)
        assert e2 < e1 / 8.0  # at least ~3rd order observed on P_z

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError):
            run_trajectory(
                self.state,
                self.sys,
                self.bath,
                IntegratorConfig(scheme="euler", t_final=10.0),
                self.grid,
            )

    def test_bad_grid_rejected(self):
        cfg = IntegratorConfig(t_final=10.0)
        with pytest.raises(ValueError):
            run_trajectory(self.state, self.sys, self.bath, cfg, np.array([0.0, 11.0]))
        with pytest.raises(ValueError):
            run_trajectory(self.state, self.sys, self.bath, cfg, np.array([1.0, 0.5]))


class TestStepAndDerivative:
    def test_single_step_preserves_norm(self):
        sys = SystemParams(delta=0.3)
        bath = small_bath()
        state = noisy_initial(AnsatzVariant.D1, 2, 2, seed=21)
        new, diag = step(state, sys, bath, IntegratorConfig(dt=0.01))
        assert diag["norm_drift"] < 1e-10
        assert abs(norm(new) - 1.0) < 1e-8

    def test_derivative_shapes(self):
        sys = SystemParams(delta=0.3)
        bath = small_bath()
        state = noisy_initial(AnsatzVariant.D1, 2, 2, seed=22)
        deriv, info = state_derivative(state, sys, bath, IntegratorConfig())
        assert deriv.da.shape == (2,)
        assert deriv.df.shape == (2, 2)
        assert deriv.dg.shape == (2, 2)
        assert np.isfinite(info.residual)

    def test_d2_derivative_has_no_dg(self):
        sys = SystemParams(delta=0.3)
        bath = small_bath()
        state = noisy_initial(AnsatzVariant.D2, 2, 2, seed=23)
        deriv, _ = state_derivative(state, sys, bath, IntegratorConfig())
        assert deriv.dg is None
