"""The population threshold above which immobile susceptibles cannot stop the disease.

For mass-action incidence with ``dS = 0`` the threshold is

    N* = sup { sum(r) + lam . (S0 - r) : 0 <= lam <= 1,
               s(dI L + diag(beta * lam * (S0 - r))) <= 0 }.

The objective is affine in ``lam`` and the spectral bound of a
quasi-positive matrix is convex in its diagonal, so the feasible set is
convex.  :func:`n_star_search` brackets the supremum between a feasible
value (lower) and an outer polyhedral relaxation (upper): each round solves
a linear program over the current cuts, bisects along the segment from a
strictly feasible point to the LP optimum to land on the boundary, and adds
supporting hyperplanes at both points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConvergenceFailure, InfeasibleNumerics, RegimeMismatch
from .model import EpidemicScenario, Mechanism, local_risk
from .netmat import perron_root_and_vectors

__all__ = [
    "NStarSettings",
    "NStarResult",
    "GridResult",
    "compute_N_star",
    "n_star_search",
    "grid_n_star",
    "threshold_matrix",
]


@dataclass(frozen=True)
class NStarSettings:
    rel_gap: float = 1e-10
    max_iter: int = 400
    bisection_tol: float = 1e-14
    spectral_tol: float = 1e-13


@dataclass(frozen=True, eq=False)
class NStarResult:
    value: float
    upper: float
    lam: np.ndarray
    iterations: int
    sum_r: float
    notes: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper - self.value


@dataclass(frozen=True, eq=False)
class GridResult:
    value: float
    lam: np.ndarray
    evaluations: int


def _require_regime(scenario):
    if scenario.mechanism is not Mechanism.MASS_ACTION or scenario.dS != 0 or not scenario.dI > 0:
        raise RegimeMismatch("N* is defined for mass-action incidence with dS = 0 and dI > 0")


def threshold_matrix(scenario: EpidemicScenario, lam) -> np.ndarray:
    """``dI L + diag(beta * lam * (S0 - r))``."""
    w = scenario.S0 - local_risk(scenario)
    return scenario.dI * np.asarray(scenario.L.entries) + np.diag(scenario.beta * np.asarray(lam) * w)


def n_star_search(scenario: EpidemicScenario, settings: NStarSettings | None = None) -> NStarResult:
    _require_regime(scenario)
    settings = settings or NStarSettings()
    n = scenario.n
    r = local_risk(scenario)
    w = scenario.S0 - r
    bw = scenario.beta * w
    base = float(r.sum())

    pos, neg = w > 0, w < 0
    if not pos.any():
        return NStarResult(base, base, np.zeros(n), 0, base, ["objective nonincreasing in lambda"])
    if not neg.any():
        # the Perron root is strictly increasing in each diagonal entry
        return NStarResult(base, base, np.zeros(n), 0, base, ["only lambda = 0 directions are feasible"])

    def evaluate(lam):
        try:
            s, v, u = perron_root_and_vectors(threshold_matrix(scenario, lam), tol=settings.spectral_tol)
        except ConvergenceFailure as exc:
            raise InfeasibleNumerics(f"spectral bound failed at lambda = {lam}: {exc}") from exc
        grad = bw * u * v / float(u @ v)
        return s, grad

    cuts_A, cuts_b = [], []

    def add_cut(lam, s, grad):
        # s(x) >= s(lam) + grad . (x - lam), so s(x) <= 0 implies grad . x <= grad . lam - s(lam)
        cuts_A.append(grad)
        cuts_b.append(float(grad @ lam - s))

    zero = np.zeros(n)
    s0, g0 = evaluate(zero)
    add_cut(zero, s0, g0)

    lam_f = neg.astype(float)
    s_f, g_f = evaluate(lam_f)
    if not s_f < 0:
        raise InfeasibleNumerics(f"expected a strictly feasible interior point, got s = {s_f!r}")
    add_cut(lam_f, s_f, g_f)

    lower, best = base, zero
    upper = np.inf
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        lp = linprog(-w, A_ub=np.array(cuts_A), b_ub=np.array(cuts_b),
                     bounds=[(0.0, 1.0)] * n, method="highs")
        if lp.status != 0:
            raise InfeasibleNumerics(f"cutting-plane LP failed: {lp.message}")
        lam_lp = np.clip(lp.x, 0.0, 1.0)
        upper = min(upper, base + float(w @ lam_lp))
        if upper - lower <= settings.rel_gap * max(1.0, abs(upper)):
            break
        s_lp, g_lp = evaluate(lam_lp)
        if s_lp <= 0:
            lower, best = base + float(w @ lam_lp), lam_lp
            upper = max(upper, lower)
            break
        add_cut(lam_lp, s_lp, g_lp)

        # s is convex along the segment, negative at 0 and positive at 1
        d = lam_lp - lam_f
        t_lo, t_hi = 0.0, 1.0
        while t_hi - t_lo > settings.bisection_tol:
            t = 0.5 * (t_lo + t_hi)
            s_t, _ = evaluate(lam_f + t * d)
            if s_t <= 0:
                t_lo = t
            else:
                t_hi = t
        lam_b = lam_f + t_lo * d
        s_b, g_b = evaluate(lam_b)
        add_cut(lam_b, s_b, g_b)
        val = base + float(w @ lam_b)
        if val > lower:
            lower, best = val, lam_b
    notes = []
    if upper - lower > settings.rel_gap * max(1.0, abs(upper)):
        notes.append(f"gap {upper - lower:.3e} above target after {iterations} rounds")
    return NStarResult(lower, float(upper), best, iterations, base, notes)


def compute_N_star(scenario: EpidemicScenario, settings: NStarSettings | None = None) -> float:
    return n_star_search(scenario, settings).value


def _spectral_bounds_batch(scenario, lams):
    mats = np.repeat((scenario.dI * np.asarray(scenario.L.entries))[None], len(lams), axis=0)
    r = local_risk(scenario)
    diag = scenario.beta * lams * (scenario.S0 - r)
    idx = np.arange(scenario.n)
    mats[:, idx, idx] += diag
    return np.linalg.eigvals(mats).real.max(axis=1)


def grid_n_star(
    scenario: EpidemicScenario,
    points: int | None = None,
    refine_points: int = 21,
    min_spacing: float = 1e-10,
    max_rounds: int = 2000,
    feas_tol: float = 1e-12,
    chunk: int = 200_000,
) -> GridResult:
    """Brute-force N* over a tensor grid of ``lam`` followed by a box pattern search.

    After the full grid, a small tensor grid is laid over a box around the
    incumbent; the box is recentred while the value improves and halved
    otherwise.  Spectral bounds come from a dense eigenvalue solver,
    independent of the power iteration used by :func:`n_star_search`.
    Only ``n <= 3``.
    """
    _require_regime(scenario)
    n = scenario.n
    if n > 3:
        raise ValueError("grid oracle is limited to n <= 3")
    if points is None:
        points = 201 if n <= 2 else 61
    r = local_risk(scenario)
    w = scenario.S0 - r
    base = float(r.sum())
    evaluations = 0

    def best_on(axes):
        nonlocal evaluations
        top_val, top_lam = -np.inf, None
        combos = itertools.product(*axes)
        while True:
            block = np.array(list(itertools.islice(combos, chunk)), dtype=float)
            if block.size == 0:
                break
            s = _spectral_bounds_batch(scenario, block)
            evaluations += len(block)
            feas = s <= feas_tol
            if feas.any():
                vals = base + block[feas] @ w
                k = int(np.argmax(vals))
                if vals[k] > top_val:
                    top_val, top_lam = float(vals[k]), block[feas][k]
        return top_val, top_lam

    val, lam = best_on([np.linspace(0.0, 1.0, points)] * n)
    half = 1.0 / (points - 1)
    for _ in range(max_rounds):
        if half < min_spacing:
            break
        axes = [np.unique(np.clip(np.linspace(c - half, c + half, refine_points), 0.0, 1.0)) for c in lam]
        v2, l2 = best_on(axes)
        if v2 > val:
            val, lam = v2, l2
        else:
            half *= 0.5
    return GridResult(value=val, lam=lam, evaluations=evaluations)
