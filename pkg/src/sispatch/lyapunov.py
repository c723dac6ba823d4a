"""Lyapunov functions for the four degenerate-dispersal regimes.

Each regime has a closed-form value ``V``, a closed-form derivative along
solutions ``Vdot``, and an analytic gradient used to cross-check ``Vdot``
against the chain rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, dp54_step
from .errors import KindMismatch
from .model import EpidemicScenario, Mechanism, State, classify, incidence, rhs_vector
from .netmat import PerronPair, weighted_quadratic_form

__all__ = [
    "LyapunovKind",
    "applicable_kind",
    "lyapunov_value",
    "lyapunov_derivative",
    "lyapunov_gradient",
    "chain_rule_derivative",
    "finite_difference_derivative",
    "monotonicity_report",
    "MonotonicityReport",
]


class LyapunovKind(str, enum.Enum):
    MASS_ACTION_DI0 = "MassActionDI0"
    MASS_ACTION_DS0 = "MassActionDS0"
    STANDARD_DI0 = "StandardDI0"
    STANDARD_DS0 = "StandardDS0"


_REGIME = {
    LyapunovKind.MASS_ACTION_DI0: (Mechanism.MASS_ACTION, "dI"),
    LyapunovKind.MASS_ACTION_DS0: (Mechanism.MASS_ACTION, "dS"),
    LyapunovKind.STANDARD_DI0: (Mechanism.STANDARD_INCIDENCE, "dI"),
    LyapunovKind.STANDARD_DS0: (Mechanism.STANDARD_INCIDENCE, "dS"),
}


def applicable_kind(scenario: EpidemicScenario) -> LyapunovKind | None:
    """The kind matching the scenario, or ``None`` unless exactly one dispersal rate is zero."""
    if (scenario.dS == 0) == (scenario.dI == 0):
        return None
    frozen = "dI" if scenario.dI == 0 else "dS"
    for kind, (mech, rate) in _REGIME.items():
        if mech is scenario.mechanism and rate == frozen:
            return kind
    return None


def _check(kind, scenario):
    kind = LyapunovKind(kind)
    mech, rate = _REGIME[kind]
    if scenario.mechanism is not mech or getattr(scenario, rate) != 0:
        raise KindMismatch(
            f"{kind.value} needs {mech.value} incidence with {rate} = 0; scenario has "
            f"{scenario.mechanism.value}, dS = {scenario.dS:g}, dI = {scenario.dI:g}"
        )
    return kind


def _h2_mask(scenario, pair):
    """Boolean mask of high-risk patches that start infected."""
    cls = classify(scenario, pair)
    mask = np.zeros(scenario.n, dtype=bool)
    mask[np.intersect1d(cls.H_plus, cls.omega_plus)] = True
    return mask


def _split(state):
    if isinstance(state, State):
        return np.asarray(state.S), np.asarray(state.I)
    y = np.asarray(state, dtype=float)
    n = y.size // 2
    return y[:n], y[n:]


def _safe_quotient(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    mask = den > 0
    np.divide(num, den, out=out, where=mask)
    return out


def lyapunov_value(kind, scenario: EpidemicScenario, pair: PerronPair, state) -> float:
    kind = _check(kind, scenario)
    S, I = _split(state)
    beta, gamma, theta = scenario.beta, scenario.gamma, pair.theta
    r = gamma / beta
    if kind is LyapunovKind.MASS_ACTION_DI0:
        return float(np.sum(theta * (0.5 * S**2 + r * I)))
    if kind is LyapunovKind.MASS_ACTION_DS0:
        return float(np.sum(beta * S**2 / (2 * gamma) + I))
    if kind is LyapunovKind.STANDARD_DI0:
        h2 = _h2_mask(scenario, pair)
        w = np.where(h2, gamma / np.where(h2, beta - gamma, 1.0), 0.0)
        return float(0.5 * np.sum(theta * S**2) + 0.5 * np.sum(theta * w * I**2))
    return float(0.5 * np.sum(theta * (1 - r) / r * S**2) + 0.5 * np.sum(theta * I**2))


def lyapunov_derivative(kind, scenario: EpidemicScenario, pair: PerronPair, state) -> float:
    """Closed-form derivative of ``V`` along solutions at ``state``.

    Patches with ``S_i + I_i = 0`` contribute nothing to the incidence quotients.
    """
    kind = _check(kind, scenario)
    S, I = _split(state)
    L = scenario.L
    beta, gamma, theta = scenario.beta, scenario.gamma, pair.theta
    r = gamma / beta
    if kind is LyapunovKind.MASS_ACTION_DI0:
        return float(
            scenario.dS * weighted_quadratic_form(L, pair, S)
            - np.sum(theta * beta * (S - r) ** 2 * I)
        )
    if kind is LyapunovKind.MASS_ACTION_DS0:
        return float(-np.sum((beta * S - gamma) ** 2 * I / gamma))
    if kind is LyapunovKind.STANDARD_DI0:
        h2 = _h2_mask(scenario, pair)
        excess = (beta - gamma) * S - gamma * I
        q = _safe_quotient(I, S + I)
        h1_terms = theta * excess * S * q
        denom = np.where(h2, beta - gamma, 1.0)
        h2_terms = theta / denom * excess**2 * q
        return float(
            scenario.dS * weighted_quadratic_form(L, pair, S)
            - np.sum(h1_terms[~h2])
            - np.sum(h2_terms[h2])
        )
    q = _safe_quotient(I, S + I)
    return float(
        scenario.dI * weighted_quadratic_form(L, pair, I)
        - np.sum(theta * beta**2 / gamma * ((1 - r) * S - r * I) ** 2 * q)
    )


def lyapunov_gradient(kind, scenario: EpidemicScenario, pair: PerronPair, state):
    """``(dV/dS, dV/dI)`` as two n-vectors."""
    kind = _check(kind, scenario)
    S, I = _split(state)
    beta, gamma, theta = scenario.beta, scenario.gamma, pair.theta
    r = gamma / beta
    if kind is LyapunovKind.MASS_ACTION_DI0:
        return theta * S, theta * r
    if kind is LyapunovKind.MASS_ACTION_DS0:
        return beta * S / gamma, np.ones_like(I)
    if kind is LyapunovKind.STANDARD_DI0:
        h2 = _h2_mask(scenario, pair)
        w = np.where(h2, gamma / np.where(h2, beta - gamma, 1.0), 0.0)
        return theta * S, theta * w * I
    return theta * (1 - r) / r * S, theta * I


def _rhs_magnitude(scenario, y):
    """Right-hand side with every term replaced by its absolute value."""
    n = scenario.n
    S, I = y[:n], y[n:]
    absL = np.abs(np.asarray(scenario.L.entries))
    f = np.abs(incidence(scenario.mechanism, scenario.beta, S, I))
    loss = scenario.gamma * np.abs(I)
    return np.concatenate([
        scenario.dS * (absL @ np.abs(S)) + f + loss,
        scenario.dI * (absL @ np.abs(I)) + f + loss,
    ])


def chain_rule_derivative(kind, scenario, pair, state, velocity=None):
    """``grad V . velocity``, with ``velocity`` defaulting to the model right-hand side.

    Also returns ``|grad V| . |velocity|`` with the right-hand side expanded
    into absolute terms, the rounding scale for comparisons with the closed
    form.
    """
    S, I = _split(state)
    y = np.concatenate([S, I])
    gS, gI = lyapunov_gradient(kind, scenario, pair, y)
    grad = np.concatenate([gS, gI])
    if velocity is None:
        velocity = rhs_vector(scenario, y)
        magnitude = _rhs_magnitude(scenario, y)
    else:
        magnitude = np.abs(velocity)
    terms = grad * np.asarray(velocity)
    return float(terms.sum()), float(np.abs(grad) @ magnitude)


def finite_difference_derivative(kind, scenario, pair, state, h: float = 1e-4) -> float:
    """Centered difference of ``V`` along the solution through ``state``.

    The neighbouring points come from one Dormand-Prince step forward and one
    backward, so the result is independent of the closed-form derivative.
    """
    S, I = _split(state)
    y = np.concatenate([S, I])

    def f(x):
        return rhs_vector(scenario, x)

    y_plus, _, _ = dp54_step(f, y, h)
    y_minus, _, _ = dp54_step(f, y, -h)
    v_plus = lyapunov_value(kind, scenario, pair, y_plus)
    v_minus = lyapunov_value(kind, scenario, pair, y_minus)
    return (v_plus - v_minus) / (2 * h)


@dataclass(frozen=True)
class MonotonicityReport:
    kind: str
    max_vdot: float
    max_increase: float
    values: np.ndarray
    vdots: np.ndarray

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "maxVdot": self.max_vdot,
            "maxIncrease": self.max_increase,
            "V0": float(self.values[0]),
            "Vfinal": float(self.values[-1]),
        }


def monotonicity_report(kind, scenario, pair, trajectory: Trajectory) -> MonotonicityReport:
    kind = _check(kind, scenario)
    values = np.array(
        [lyapunov_value(kind, scenario, pair, np.concatenate([s, i])) for s, i in zip(trajectory.S, trajectory.I)]
    )
    vdots = np.array(
        [lyapunov_derivative(kind, scenario, pair, np.concatenate([s, i])) for s, i in zip(trajectory.S, trajectory.I)]
    )
    inc = float(np.diff(values).max()) if values.size > 1 else 0.0
    return MonotonicityReport(
        kind=kind.value,
        max_vdot=float(vdots.max()),
        max_increase=inc,
        values=values,
        vdots=vdots,
    )
