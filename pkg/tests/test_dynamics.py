import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from sispatch.dynamics import (
    FlowPath,
    IntegrationSettings,
    dp54_step,
    harnack_ratio,
    integrate,
    linear_flow,
    linear_flow_path,
)
from sispatch.errors import ZeroComponent
from sispatch.model import rhs_vector
from sispatch.netmat import perron_vector, validate_connectivity

from conftest import ASYM2, CYCLE3, SYM2, random_connectivity, scenario


class TestDormandPrince:
    def test_fifth_order_on_exponential(self):
        errs = []
        for h in (0.2, 0.1):
            y, _, _ = dp54_step(lambda x: -x, np.array([1.0]), h)
            errs.append(abs(y[0] - np.exp(-h)))
        assert errs[0] / errs[1] == pytest.approx(64.0, rel=0.1)

    def test_backward_step_inverts(self):
        f = lambda x: np.array([x[1], -x[0]])  # noqa: E731
        y0 = np.array([1.0, 0.0])
        y1, _, _ = dp54_step(f, y0, 0.01)
        y2, _, _ = dp54_step(f, y1, -0.01)
        np.testing.assert_allclose(y2, y0, atol=1e-13)

    def test_fsal(self):
        f = lambda x: -2.0 * x  # noqa: E731
        y1, f1, _ = dp54_step(f, np.array([1.0]), 0.1)
        np.testing.assert_array_equal(f1, f(y1))


class TestIntegrate:
    @pytest.mark.parametrize("mechanism", ["mass_action", "standard_incidence"])
    def test_matches_scipy(self, mechanism):
        sc = scenario(ASYM2, [1.5, 0.8], [1.0, 1.2], 0.7, 0.4, [2.0, 1.0], [0.5, 0.5], mechanism=mechanism)
        traj = integrate(sc, IntegrationSettings(t_end=5.0))
        ref = solve_ivp(lambda t, y: rhs_vector(sc, y), (0, 5), sc.initial_state.as_vector(),
                        method="DOP853", rtol=1e-12, atol=1e-14, t_eval=traj.times)
        np.testing.assert_allclose(np.hstack([traj.S, traj.I]), ref.y.T, atol=1e-8)

    def test_samples_on_grid(self):
        sc = scenario(SYM2, [1, 1], [1, 2], 1.0, 0.0, [1, 1], [1, 1])
        traj = integrate(sc, IntegrationSettings(t_end=3.05, sample_interval=0.5))
        np.testing.assert_allclose(traj.times, [0, 0.5, 1, 1.5, 2, 2.5, 3, 3.05])
        assert np.all(np.diff(traj.times) > 0)

    def test_conservation_and_positivity(self, rng):
        L = random_connectivity(rng, 5)
        S0, I0 = rng.uniform(0.1, 2, 5), rng.uniform(0, 1, 5)
        sc = scenario(np.asarray(L), rng.uniform(0.5, 3, 5), rng.uniform(0.5, 3, 5), 0.5, 0.2, S0, I0)
        traj = integrate(sc, IntegrationSettings(t_end=50.0))
        assert traj.conservation_error.max() <= 1e-9 * sc.N
        assert traj.S.min() >= 0 and traj.I.min() >= 0
        assert traj.clamp_events == 0

    def test_disease_free_limit(self):
        sc = scenario(ASYM2, [1, 1], [5, 5], 1.0, 1.0, [2.0, 1.0], [1e-12, 0.0])
        traj = integrate(sc, IntegrationSettings(t_end=60.0))
        alpha = perron_vector(sc.L).alpha
        np.testing.assert_allclose(traj.S[-1], sc.N * alpha, atol=1e-8)

    def test_uninfected_patch_stays_uninfected(self):
        sc = scenario(SYM2, [1, 1], [1, 2], 1.0, 0.0, [1, 1], [1, 0])
        traj = integrate(sc, IntegrationSettings(t_end=20.0))
        assert np.all(traj.I[:, 1] == 0.0)

    def test_cumulative_infection(self):
        sc = scenario(SYM2, [1, 1], [1, 2], 1.0, 0.0, [1, 1], [1, 1])
        traj = integrate(sc, IntegrationSettings(t_end=10.0))
        ref = np.concatenate([[0], np.cumsum(0.5 * np.diff(traj.times) * (traj.I[1:, 0] + traj.I[:-1, 0]))])
        np.testing.assert_allclose(traj.J[:, 0], ref, atol=1e-3)
        assert np.all(np.diff(traj.J, axis=0) >= 0)

    def test_steady_state_flag(self):
        sc = scenario(CYCLE3, [1, 1, 1], [2, 2, 2], 1.0, 0.0, [0.5] * 3, [0.5] * 3)
        assert integrate(sc, IntegrationSettings(t_end=200.0)).converged
        assert not integrate(sc, IntegrationSettings(t_end=0.5)).converged

    def test_until(self):
        sc = scenario(SYM2, [1, 1], [1, 2], 1.0, 0.0, [1, 1], [1, 1])
        traj = integrate(sc, IntegrationSettings(t_end=2.0))
        head = traj.until(1.0)
        assert head.times[-1] == 1.0
        assert head.S.shape == (11, 2) and head.J.shape == (11, 2)

    @pytest.mark.parametrize("field,value", [("rel_tol", 0.0), ("t_end", -1.0), ("rel_tol", 1e-16)])
    def test_bad_settings(self, field, value):
        with pytest.raises(ValueError):
            IntegrationSettings(**{field: value})


class TestLinearFlow:
    def test_explicit_two_patch(self):
        L = validate_connectivity(SYM2)
        np.testing.assert_allclose(linear_flow(1.0, L, [3.0, 1.0], 50.0), [2.0, 2.0], atol=1e-8)
        t = 0.7
        np.testing.assert_allclose(
            linear_flow(1.0, L, [3.0, 1.0], t), [2 + np.exp(-2 * t), 2 - np.exp(-2 * t)], atol=1e-11
        )

    def test_matches_matrix_exponential(self, rng):
        L = random_connectivity(rng, 6)
        X0 = rng.uniform(0, 3, 6)
        np.testing.assert_allclose(linear_flow(0.8, L, X0, 2.0), expm(1.6 * np.asarray(L)) @ X0, atol=1e-10)

    def test_perron_direction_is_fixed(self, rng):
        L = random_connectivity(rng, 4)
        alpha = perron_vector(L).alpha
        np.testing.assert_allclose(linear_flow(1.0, L, 3 * alpha, 10.0), 3 * alpha, atol=1e-12)

    def test_distance_to_limit_nonincreasing(self, rng):
        L = random_connectivity(rng, 5)
        alpha = perron_vector(L).alpha
        X0 = rng.uniform(0, 4, 5)
        path = linear_flow_path(1.0, L, X0, 20.0)
        dist = np.abs(path.X - X0.sum() * alpha).sum(axis=1)
        assert dist[-1] <= dist[len(dist) // 2]


class TestHarnack:
    def test_stationary_profile(self):
        L = validate_connectivity(ASYM2)
        alpha = perron_vector(L).alpha
        path = linear_flow_path(1.0, L, 2 * alpha, 5.0)
        assert harnack_ratio(path, "X") == pytest.approx(alpha.max() / alpha.min(), rel=1e-10)

    def test_two_patch_bound(self):
        path = linear_flow_path(1.0, validate_connectivity(SYM2), [3.0, 1.0], 10.0)
        bound = (2 + 2 * np.exp(-2)) / (2 - 2 * np.exp(-2))
        assert harnack_ratio(path, "X", 1.0) <= bound + 1e-10
        assert bound == pytest.approx(1.3130, abs=1e-4)

    def test_zero_component(self):
        path = FlowPath(np.array([0.0, 1.0, 2.0]), np.array([[1.0, 1.0], [1.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(ZeroComponent):
            harnack_ratio(path, "X")

    def test_t_min_below_one(self):
        path = FlowPath(np.array([0.0, 1.0]), np.ones((2, 2)))
        with pytest.raises(ValueError):
            harnack_ratio(path, "X", 0.5)
