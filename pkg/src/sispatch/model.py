"""Epidemic scenarios, incidence mechanisms, the ODE right-hand side and risk sets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState, ScenarioInvalid
from .netmat import ConnectivityMatrix, PerronPair, _frozen

CLASSIFY_EPS = 1e-12

__all__ = [
    "Mechanism",
    "EpidemicScenario",
    "State",
    "RiskClassification",
    "local_risk",
    "classify",
    "rhs",
    "incidence",
]


class Mechanism(str, enum.Enum):
    MASS_ACTION = "mass_action"
    STANDARD_INCIDENCE = "standard_incidence"


@dataclass(frozen=True, eq=False)
class State:
    S: np.ndarray
    I: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "S", _frozen(self.S))
        object.__setattr__(self, "I", _frozen(self.I))

    @property
    def total(self) -> float:
        return float(self.S.sum() + self.I.sum())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.S, self.I])

    @classmethod
    def from_vector(cls, y) -> "State":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(S=y[:n], I=y[n:])


@dataclass(frozen=True, eq=False)
class EpidemicScenario:
    """Parameters and initial data of one run of the patch model.

    Validation happens on construction: positive rates, nonnegative
    dispersal, nonnegative initial data with some infection, and
    ``sum(S0 + I0) == N`` to relative ``1e-12``.
    """

    L: ConnectivityMatrix
    beta: np.ndarray
    gamma: np.ndarray
    dS: float
    dI: float
    mechanism: Mechanism
    S0: np.ndarray
    I0: np.ndarray
    N: float
    classify_eps: float = CLASSIFY_EPS
    name: str = field(default="scenario", compare=False)

    def __post_init__(self):
        n = self.L.n
        for attr in ("beta", "gamma", "S0", "I0"):
            v = np.asarray(getattr(self, attr), dtype=float)
            if v.shape != (n,):
                raise ScenarioInvalid(f"{attr} must have length {n}, got shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ScenarioInvalid(f"{attr} has non-finite entries")
            object.__setattr__(self, attr, _frozen(v))
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "dS", float(self.dS))
        object.__setattr__(self, "dI", float(self.dI))
        object.__setattr__(self, "N", float(self.N))

        if not (np.all(self.beta > 0) and np.all(self.gamma > 0)):
            raise ScenarioInvalid("beta and gamma must be strictly positive (A3)", "A3")
        if self.dS < 0 or self.dI < 0 or not np.isfinite(self.dS + self.dI):
            raise ScenarioInvalid("dispersal rates dS, dI must be finite and nonnegative (A3)", "A3")
        if np.any(self.S0 < 0) or np.any(self.I0 < 0):
            raise ScenarioInvalid("initial data must be nonnegative (A2)", "A2")
        if not np.any(self.I0 > 0):
            raise ScenarioInvalid("I0 must have at least one positive entry (A2)", "A2")
        if not (self.N > 0):
            raise ScenarioInvalid("total population N must be positive (A2)", "A2")
        total = self.S0.sum() + self.I0.sum()
        if abs(total - self.N) > 1e-12 * self.N:
            raise ScenarioInvalid(
                f"sum(S0 + I0) = {total!r} differs from N = {self.N!r} (A2)", "A2"
            )

    @property
    def n(self) -> int:
        return self.L.n

    @property
    def initial_state(self) -> State:
        return State(self.S0, self.I0)

    def replace(self, **changes) -> "EpidemicScenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return EpidemicScenario(**kw)


@dataclass(frozen=True, eq=False)
class RiskClassification:
    """Risk sets of both mechanisms, as sorted 0-based index arrays.

    ``H_minus/H_zero/H_plus`` compare ``r_i`` with 1 (standard incidence);
    ``tH_*`` compare ``r_i / (N alpha_i)`` with 1 (mass action).
    """

    r: np.ndarray
    H_minus: np.ndarray
    H_zero: np.ndarray
    H_plus: np.ndarray
    tH_minus: np.ndarray
    tH_zero: np.ndarray
    tH_plus: np.ndarray
    omega0: np.ndarray
    omega_plus: np.ndarray
    r_tilde: np.ndarray
    r_tilde_min: float


def local_risk(scenario: EpidemicScenario) -> np.ndarray:
    return scenario.gamma / scenario.beta


def _split(q: np.ndarray, eps: float):
    # "minus" means q > 1 (low risk), "plus" means q < 1 (high risk)
    zero = np.abs(q - 1.0) <= eps
    minus = (q > 1.0) & ~zero
    plus = (q < 1.0) & ~zero
    return np.flatnonzero(minus), np.flatnonzero(zero), np.flatnonzero(plus)


def classify(scenario: EpidemicScenario, pair: PerronPair, eps: float | None = None) -> RiskClassification:
    eps = scenario.classify_eps if eps is None else eps
    r = local_risk(scenario)
    r_tilde = r / (scenario.N * pair.alpha)
    Hm, H0, Hp = _split(r, eps)
    tHm, tH0, tHp = _split(r_tilde, eps)
    omega_plus = np.flatnonzero(scenario.I0 > 0)
    omega0 = np.flatnonzero(scenario.I0 == 0)
    return RiskClassification(
        r=_frozen(r),
        H_minus=Hm,
        H_zero=H0,
        H_plus=Hp,
        tH_minus=tHm,
        tH_zero=tH0,
        tH_plus=tHp,
        omega0=omega0,
        omega_plus=omega_plus,
        r_tilde=_frozen(r_tilde),
        r_tilde_min=float(r_tilde[omega_plus].min()),
    )


def incidence(mechanism: Mechanism, beta, S, I) -> np.ndarray:
    """New infections per unit time in each patch."""
    if mechanism is Mechanism.MASS_ACTION:
        return beta * S * I
    total = S + I
    out = np.zeros_like(total)
    mask = total > 0
    out[mask] = beta[mask] * S[mask] * I[mask] / total[mask]
    return out


def rhs_vector(scenario: EpidemicScenario, y: np.ndarray) -> np.ndarray:
    """Right-hand side on the stacked vector ``[S, I]``; no finiteness check."""
    n = scenario.n
    S, I = y[:n], y[n:]
    L = scenario.L.entries
    f = incidence(scenario.mechanism, scenario.beta, S, I)
    rec = scenario.gamma * I
    out = np.empty_like(y)
    out[:n] = scenario.dS * (L @ S) - f + rec
    out[n:] = scenario.dI * (L @ I) + f - rec
    return out


def rhs(scenario: EpidemicScenario, state: State) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives ``(S', I')`` at ``state``."""
    y = state.as_vector()
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("state contains NaN or Inf")
    out = rhs_vector(scenario, y)
    n = scenario.n
    return out[:n], out[n:]
