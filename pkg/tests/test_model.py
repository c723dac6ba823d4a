import numpy as np
import pytest

from sispatch.errors import NonFiniteState, ScenarioInvalid
from sispatch.model import Mechanism, State, classify, incidence, local_risk, rhs, rhs_vector
from sispatch.netmat import perron_vector

from conftest import SYM2, scenario


def sym(beta, gamma, S0, I0, dS=1.0, dI=0.0, **kw):
    return scenario(SYM2, beta, gamma, dS, dI, S0, I0, **kw)


class TestScenarioValidation:
    def test_mass_mismatch_names_a2(self):
        sc = sym([1, 1], [1, 1], [1, 1], [1, 1])
        with pytest.raises(ScenarioInvalid) as exc:
            sc.replace(N=5.0)
        assert exc.value.assumption == "A2"

    def test_no_infection(self):
        with pytest.raises(ScenarioInvalid):
            sym([1, 1], [1, 1], [1, 1], [0, 0])

    def test_nonpositive_rates_name_a3(self):
        with pytest.raises(ScenarioInvalid) as exc:
            sym([1, 0], [1, 1], [1, 1], [1, 1])
        assert exc.value.assumption == "A3"

    def test_negative_dispersal(self):
        with pytest.raises(ScenarioInvalid):
            sym([1, 1], [1, 1], [1, 1], [1, 1], dS=-1.0)

    def test_negative_initial_data(self):
        with pytest.raises(ScenarioInvalid):
            sym([1, 1], [1, 1], [3, -1], [1, 1])


class TestLocalRisk:
    def test_division(self):
        np.testing.assert_allclose(local_risk(sym([2, 1], [1, 2], [1, 1], [1, 1])), [0.5, 2.0])

    def test_identity(self):
        np.testing.assert_array_equal(local_risk(sym([3, 3], [3, 3], [1, 1], [1, 1])), [1.0, 1.0])


class TestClassify:
    def test_risk_sets(self):
        sc = sym([2, 1], [1, 2], [1, 1], [1, 1])
        cls = classify(sc, perron_vector(sc.L))
        assert list(cls.H_plus) == [0]
        assert list(cls.H_minus) == [1]
        assert cls.H_zero.size == 0

    def test_scaled_risk(self):
        sc = sym([1, 1], [1, 2], [3, 3], [1, 1])
        cls = classify(sc, perron_vector(sc.L))
        np.testing.assert_allclose(cls.r_tilde, [0.25, 0.5])
        assert list(cls.tH_plus) == [0, 1]
        assert cls.r_tilde_min == pytest.approx(0.25)

    def test_initially_uninfected_patch(self):
        # patch 2 has the smaller scaled risk but starts uninfected
        sc = sym([1, 1], [2, 1], [3, 4], [1, 0])
        cls = classify(sc, perron_vector(sc.L))
        assert list(cls.omega0) == [1]
        assert list(cls.omega_plus) == [0]
        np.testing.assert_allclose(cls.r_tilde, [0.5, 0.25])
        assert cls.r_tilde_min == pytest.approx(0.5)

    def test_band_puts_near_one_in_zero_set(self):
        sc = sym([1, 1], [1 + 1e-14, 1], [1, 1], [1, 1])
        cls = classify(sc, perron_vector(sc.L))
        assert list(cls.H_zero) == [0, 1]


class TestRhs:
    def test_disease_free_direction(self):
        sc = sym([1, 1], [1, 1], [1, 1], [1, 1], dS=2.0)
        dS, dI = rhs(sc, State([3.0, 1.0], [0.0, 0.0]))
        np.testing.assert_allclose(dS, 2.0 * np.asarray(SYM2) @ [3.0, 1.0])
        np.testing.assert_array_equal(dI, [0.0, 0.0])

    def test_balanced_point(self):
        sc = sym([1, 1], [1, 1], [1, 1], [1, 1], dS=0.0)
        dS, dI = rhs(sc, State([1.0, 1.0], [1.0, 1.0]))
        np.testing.assert_allclose(dS, 0.0, atol=1e-15)
        np.testing.assert_allclose(dI, 0.0, atol=1e-15)

    def test_standard_incidence_empty_patch(self):
        f = incidence(Mechanism.STANDARD_INCIDENCE, np.array([1.0, 2.0]), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert f[0] == 0.0 and f[1] == pytest.approx(1.0)

    def test_mass_conserved(self, rng):
        for mech in Mechanism:
            sc = sym([1.5, 0.7], [1, 2], [1, 1], [1, 1], dS=0.3, dI=1.1, mechanism=mech)
            for _ in range(20):
                y = rng.uniform(0, 5, 4)
                assert abs(rhs_vector(sc, y).sum()) <= 1e-13 * (1 + np.abs(y).sum())

    def test_non_finite(self):
        sc = sym([1, 1], [1, 1], [1, 1], [1, 1])
        with pytest.raises(NonFiniteState):
            rhs(sc, State([np.inf, 1.0], [1.0, 1.0]))
