"""Predicted limit states for the four degenerate-dispersal regimes, and verdicts.

Branch labels follow the ``T31i ... T42ii`` naming used in reports:
``T31*`` mass action with ``dI = 0``, ``T32*`` mass action with ``dS = 0``,
``T41`` standard incidence with ``dI = 0`` and ``T42*`` standard incidence
with ``dS = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory
from .errors import RegimeMismatch, ScenarioMismatch
from .model import EpidemicScenario, Mechanism, RiskClassification, State, classify, local_risk, rhs_vector
from .netmat import PerronPair, spectral_bound
from .nstar import NStarResult, n_star_search, threshold_matrix

__all__ = [
    "Branch",
    "PredictedLimit",
    "Verdict",
    "predict_mass_action_dI0",
    "predict_mass_action_dS0",
    "predict_standard_dI0",
    "predict_standard_dS0",
    "predict",
    "regime_of",
    "recover_lambda_star",
    "LambdaRecovery",
    "equilibrium_residual",
    "verify",
]


class Branch(str, enum.Enum):
    T31i = "T31i"
    T31ii = "T31ii"
    T32i = "T32i"
    T32ii = "T32ii"
    T32undetermined = "T32undetermined"
    T41 = "T41"
    T42i = "T42i"
    T42ii = "T42ii"


@dataclass(frozen=True, eq=False)
class PredictedLimit:
    """A limit predicted for one scenario.

    ``S_star`` / ``I_star`` are ``None`` when the limit is not pinned to a
    single vector.  ``candidates`` is only used by ``T32undetermined``.
    """

    branch: Branch
    scenario: EpidemicScenario
    S_star: np.ndarray | None
    I_star: np.ndarray | None
    scalars: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    candidates: tuple = ()

    @property
    def pinned(self) -> bool:
        return self.S_star is not None and self.I_star is not None

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]

        out = {
            "branch": self.branch.value,
            "Sstar": vec(self.S_star),
            "Istar": vec(self.I_star),
            "scalars": {k: float(v) for k, v in self.scalars.items()},
            "notes": list(self.notes),
        }
        if self.candidates:
            out["candidates"] = [c.to_dict() for c in self.candidates]
        return out


@dataclass(frozen=True)
class Verdict:
    passed: bool
    residuals: dict
    tolerance: float
    branch: str
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "branch": self.branch,
            "tolerance": self.tolerance,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "notes": list(self.notes),
        }


def regime_of(scenario: EpidemicScenario) -> str:
    """``"mass_action_dI0"`` etc.; raises :class:`RegimeMismatch` outside the four regimes."""
    zero_s, zero_i = scenario.dS == 0, scenario.dI == 0
    mech = scenario.mechanism.value
    if zero_i and not zero_s:
        return f"{mech}_dI0"
    if zero_s and not zero_i:
        return f"{mech}_dS0"
    raise RegimeMismatch(
        "no limit theorem covers this scenario: supported regimes are dS > 0 with dI = 0, "
        f"or dS = 0 with dI > 0, for mass_action or standard_incidence (got dS = {scenario.dS:g}, "
        f"dI = {scenario.dI:g})"
    )


def _expect(scenario, mechanism, frozen):
    regime = regime_of(scenario)
    want = f"{mechanism.value}_{frozen}0"
    if regime != want:
        raise RegimeMismatch(f"prediction for {want} requested, scenario is {regime}")


def predict_mass_action_dI0(
    scenario: EpidemicScenario, pair: PerronPair, cls: RiskClassification
) -> PredictedLimit:
    _expect(scenario, Mechanism.MASS_ACTION, "dI")
    N, alpha = scenario.N, pair.alpha
    high = np.intersect1d(cls.tH_plus, cls.omega_plus)
    if high.size == 0:
        return PredictedLimit(
            Branch.T31i, scenario, N * alpha, np.zeros(scenario.n),
            scalars={"rTildeM": cls.r_tilde_min},
            notes=[
                "susceptible limit taken as N*alpha (total mass conserved); "
                "the variant (N/n)*alpha would not conserve mass"
            ],
        )
    rm = cls.r_tilde_min
    total_I = N * (1.0 - rm)
    alt_total = N - scenario.n * rm
    tie = np.abs(cls.r_tilde[cls.omega_plus] - rm) <= scenario.classify_eps * max(1.0, rm)
    argmin = cls.omega_plus[tie]
    notes = [
        f"infected total uses N(1 - rTildeM) = {total_I:.17g}; the alternative "
        f"N - n*rTildeM = {alt_total:.17g} is inconsistent with mass conservation"
    ]
    I_star = None
    if argmin.size == 1:
        I_star = np.zeros(scenario.n)
        I_star[argmin[0]] = total_I
    else:
        notes.append(
            "multiple highest-risk patches "
            f"{[int(j) + 1 for j in argmin]}: infected distribution among them is not determined"
        )
    return PredictedLimit(
        Branch.T31ii, scenario, N * rm * alpha, I_star,
        scalars={"rTildeM": rm, "Istar_total": total_I, "Istar_total_alt": alt_total},
        notes=notes,
    )


def predict_mass_action_dS0(
    scenario: EpidemicScenario,
    pair: PerronPair,
    cls: RiskClassification,
    nstar: NStarResult | None = None,
) -> PredictedLimit:
    _expect(scenario, Mechanism.MASS_ACTION, "dS")
    N, r = scenario.N, cls.r
    sum_r = float(r.sum())
    extinct = PredictedLimit(
        Branch.T32i, scenario, None, np.zeros(scenario.n),
        scalars={"sumR": sum_r},
        notes=["susceptible limit not pinned: sum(S*) = N and S* = lam*S0 + (1-lam)*r with s(...) <= 0"],
    )
    if N <= sum_r:
        return extinct
    nstar = nstar or n_star_search(scenario)
    endemic = PredictedLimit(
        Branch.T32ii, scenario, r.copy(), (N - sum_r) * pair.alpha,
        scalars={"sumR": sum_r, "NStar": nstar.value, "NStarGap": nstar.gap},
    )
    if N > nstar.upper:
        return endemic
    return PredictedLimit(
        Branch.T32undetermined, scenario, None, None,
        scalars={"sumR": sum_r, "NStar": nstar.value, "NStarGap": nstar.gap},
        notes=[f"N = {N:g} lies in (sum r, N*] = ({sum_r:g}, {nstar.value:g}]: either branch may occur"],
        candidates=(extinct, endemic),
    )


def predict_standard_dI0(
    scenario: EpidemicScenario, pair: PerronPair, cls: RiskClassification
) -> PredictedLimit:
    _expect(scenario, Mechanism.STANDARD_INCIDENCE, "dI")
    beta, gamma, alpha = scenario.beta, scenario.gamma, pair.alpha
    h2 = np.intersect1d(cls.H_plus, cls.omega_plus)
    gain = (beta[h2] - gamma[h2]) / gamma[h2]
    k = scenario.N / (1.0 + float(np.sum(gain * alpha[h2])))
    I_star = np.zeros(scenario.n)
    I_star[h2] = gain * k * alpha[h2]
    return PredictedLimit(
        Branch.T41, scenario, k * alpha, I_star,
        scalars={"k": k},
        notes=[f"infected patches in the limit: {[int(j) + 1 for j in h2]}"],
    )


def predict_standard_dS0(
    scenario: EpidemicScenario, pair: PerronPair, cls: RiskClassification
) -> PredictedLimit:
    _expect(scenario, Mechanism.STANDARD_INCIDENCE, "dS")
    if cls.H_minus.size or cls.H_zero.size:
        low = np.union1d(cls.H_minus, cls.H_zero)
        return PredictedLimit(
            Branch.T42i, scenario, None, np.zeros(scenario.n),
            notes=[f"susceptibles stay positive on patches {[int(j) + 1 for j in low]}"],
        )
    r, alpha, N = cls.r, pair.alpha, scenario.N
    i_star = N / (1.0 + float(np.sum(alpha * r / (1.0 - r))))
    i_alt = N / (1.0 + float(np.sum(1.0 / (1.0 - r))))
    return PredictedLimit(
        Branch.T42ii, scenario, i_star * r * alpha / (1.0 - r), i_star * alpha,
        scalars={"Istar": i_star, "Istar_alt": i_alt},
        notes=[
            f"infected scale I* = N/(1 + sum(alpha*r/(1-r))) = {i_star:.17g}; the unweighted "
            f"N/(1 + ||1/(1-r)||_1) = {i_alt:.17g} does not conserve mass at the limit point"
        ],
    )


def predict(scenario: EpidemicScenario, pair: PerronPair, cls: RiskClassification | None = None) -> PredictedLimit:
    cls = cls or classify(scenario, pair)
    regime = regime_of(scenario)
    return {
        "mass_action_dI0": predict_mass_action_dI0,
        "mass_action_dS0": predict_mass_action_dS0,
        "standard_incidence_dI0": predict_standard_dI0,
        "standard_incidence_dS0": predict_standard_dS0,
    }[regime](scenario, pair, cls)


@dataclass(frozen=True, eq=False)
class LambdaRecovery:
    lam: np.ndarray
    J: np.ndarray
    s_residual: float
    sic_residual: float


def cumulative_infection_hermite(trajectory: Trajectory) -> np.ndarray:
    """``J(t) = int_0^t I`` from the samples alone.

    Trapezoid rule with the endpoint-derivative correction
    ``h^2/12 (I'(t_k) - I'(t_{k+1}))``, i.e. the exact integral of the cubic
    Hermite interpolant through the samples.
    """
    n = trajectory.S.shape[1]
    I = trajectory.I
    dI = trajectory.derivatives[:, n:]
    h = np.diff(trajectory.times)[:, None]
    pieces = 0.5 * h * (I[:-1] + I[1:]) + h**2 / 12.0 * (dI[:-1] - dI[1:])
    return np.vstack([np.zeros((1, n)), np.cumsum(pieces, axis=0)])


def recover_lambda_star(
    scenario: EpidemicScenario, trajectory: Trajectory, quadrature: str = "integrated"
) -> LambdaRecovery:
    """``lam = exp(-beta J(t_end))`` and the residuals of the closed-form susceptible path.

    ``quadrature="integrated"`` uses the cumulative infection carried by the
    integrator; ``"hermite"`` rebuilds it from the samples.
    """
    if scenario.mechanism is not Mechanism.MASS_ACTION or scenario.dS != 0:
        raise RegimeMismatch("lambda* recovery needs mass-action incidence with dS = 0")
    if quadrature == "integrated":
        J = np.asarray(trajectory.J)
    elif quadrature == "hermite":
        J = cumulative_infection_hermite(trajectory)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    r = local_risk(scenario)
    predicted_S = r + (scenario.S0 - r) * np.exp(-scenario.beta * J)
    sic = float(np.abs(trajectory.S - predicted_S).max())
    lam = np.exp(-scenario.beta * J[-1])
    s_res = spectral_bound(threshold_matrix(scenario, lam))
    return LambdaRecovery(lam=lam, J=J, s_residual=s_res, sic_residual=sic)


def equilibrium_residual(scenario: EpidemicScenario, state: State) -> float:
    return float(np.abs(rhs_vector(scenario, state.as_vector())).max())


def _sup(a, b) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


def _residuals(pred: PredictedLimit, observed: State, tol: float) -> dict:
    sc = pred.scenario
    S, I = np.asarray(observed.S), np.asarray(observed.I)
    res = {}
    if pred.S_star is not None:
        res["S"] = _sup(S, pred.S_star)
    if pred.I_star is not None:
        res["I"] = _sup(I, pred.I_star)
    if pred.branch is Branch.T31ii and pred.I_star is None:
        res["I_total"] = abs(I.sum() - pred.scalars["Istar_total"])
    if pred.branch is Branch.T32i:
        r = local_risk(sc)
        w = sc.S0 - r
        moving = np.abs(w) > 1e-12 * max(1.0, float(np.abs(sc.S0).max()))
        lam = np.ones(sc.n)
        lam[moving] = (S[moving] - r[moving]) / w[moving]
        res["S_mass"] = abs(S.sum() - sc.N)
        res["lambda_bounds"] = float(np.max(np.concatenate([[0.0], -lam[moving], lam[moving] - 1.0])))
        res["s_residual"] = max(0.0, spectral_bound(threshold_matrix(sc, np.clip(lam, 0.0, 1.0))))
    if pred.branch is Branch.T42i:
        low = local_risk(sc) >= 1.0 - sc.classify_eps
        floor = float(S[low].min())
        # at most tol exactly when min S over the low-risk patches is at least tol
        res["S_floor"] = np.inf if floor <= 0 else tol * tol / floor
    return res


def verify(prediction: PredictedLimit, observed: State, tol: float) -> Verdict:
    """Compare an observed (final) state with the prediction in sup norm."""
    sc = prediction.scenario
    if np.asarray(observed.S).shape != (sc.n,) or np.asarray(observed.I).shape != (sc.n,):
        raise ScenarioMismatch(f"observed state does not have {sc.n} patches")
    if prediction.branch is Branch.T32undetermined:
        attempts = []
        for cand in prediction.candidates:
            res = _residuals(cand, observed, tol)
            ok = all(v <= tol for v in res.values())
            attempts.append((ok, cand, res))
        for ok, cand, res in attempts:
            if ok:
                return Verdict(True, res, tol, cand.branch.value,
                               tuple(prediction.notes) + (f"realized branch: {cand.branch.value}",))
        ok, cand, res = min(attempts, key=lambda a: max(a[2].values()))
        return Verdict(False, res, tol, cand.branch.value,
                       tuple(prediction.notes) + ("no candidate branch matched within tolerance",))
    res = _residuals(prediction, observed, tol)
    return Verdict(all(v <= tol for v in res.values()), res, tol, prediction.branch.value,
                   tuple(prediction.notes))
