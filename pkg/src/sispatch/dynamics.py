"""Time integration with conservation and positivity monitors.

The integrator is the Dormand-Prince 5(4) embedded pair with local
extrapolation and first-same-as-last reuse.  Steps are shortened so that
every output sample is an actual step point; samples never come from
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteState, StepSizeUnderflow, ZeroComponent
from .model import EpidemicScenario, State, rhs_vector
from .netmat import ConnectivityMatrix

__all__ = [
    "IntegrationSettings",
    "Trajectory",
    "FlowPath",
    "integrate",
    "linear_flow",
    "linear_flow_path",
    "harnack_ratio",
    "dp54_step",
]

# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

STEADY_WINDOW = 10


@dataclass(frozen=True)
class IntegrationSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    t_end: float = 500.0
    max_step: float = 0.1
    steady_tol: float = 1e-10
    sample_interval: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "t_end", "max_step", "steady_tol", "sample_interval"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.rel_tol < 1e-14:
            raise ValueError("rel_tol below 1e-14 is not attainable in double precision")

    def replace(self, **changes) -> "IntegrationSettings":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return IntegrationSettings(**kw)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of the patch model.

    ``S`` and ``I`` have shape ``(len(times), n)``; ``derivatives`` holds the
    stacked right-hand side ``[S', I']`` at each sample, and ``J`` the
    cumulative infection ``int_0^t I`` integrated alongside the state.
    """

    times: np.ndarray
    S: np.ndarray
    I: np.ndarray
    derivatives: np.ndarray
    J: np.ndarray
    conservation_error: np.ndarray
    converged: bool
    clamp_events: int
    rejected_steps: int
    accepted_steps: int
    min_raw: float
    N: float

    @property
    def final_state(self) -> State:
        return State(self.S[-1], self.I[-1])

    @property
    def states(self) -> list[State]:
        return [State(s, i) for s, i in zip(self.S, self.I)]

    @property
    def rhs_norm(self) -> np.ndarray:
        return np.abs(self.derivatives).max(axis=1)

    def until(self, t: float) -> "Trajectory":
        """Prefix of the trajectory with ``times <= t``."""
        k = int(np.searchsorted(self.times, t, side="right"))
        return Trajectory(
            times=self.times[:k],
            S=self.S[:k],
            I=self.I[:k],
            derivatives=self.derivatives[:k],
            J=self.J[:k],
            conservation_error=self.conservation_error[:k],
            converged=self.converged,
            clamp_events=self.clamp_events,
            rejected_steps=self.rejected_steps,
            accepted_steps=self.accepted_steps,
            min_raw=self.min_raw,
            N=self.N,
        )


@dataclass(frozen=True, eq=False)
class FlowPath:
    times: np.ndarray
    X: np.ndarray


def dp54_step(f: Callable, y: np.ndarray, h: float, k1: np.ndarray | None = None):
    """One Dormand-Prince step of size ``h`` (may be negative).

    Returns ``(y_new, f(y_new), error_estimate)``.
    """
    k = np.empty((7, y.size))
    k[0] = f(y) if k1 is None else k1
    for s in range(1, 6):
        k[s] = f(y + h * (np.dot(_A[s], k[:s])))
    y_new = y + h * (_B[:6] @ k[:6])
    k[6] = f(y_new)
    err = h * (_E @ k)
    return y_new, k[6], err


def _initial_step(f, y, k1, rtol, atol, max_step):
    scale = atol + rtol * np.abs(y)
    d0 = np.abs(y / scale).max()
    d1 = np.abs(k1 / scale).max()
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, max_step)


def _march(f, y0, t_end, sample_interval, rtol, atol, max_step, fix_step=None):
    """Adaptive integration from 0 to ``t_end`` returning samples on the fixed grid.

    ``fix_step(y_new)`` may return ``(y, ok, clamps, min_raw)``; ``ok`` false
    rejects the step.
    """
    n_samples = int(np.floor(t_end / sample_interval + 1e-9))
    grid = [k * sample_interval for k in range(1, n_samples + 1)]
    if not grid or grid[-1] < t_end * (1 - 1e-12):
        grid.append(t_end)
    grid[-1] = t_end

    y = np.array(y0, dtype=float)
    k1 = f(y)
    if not np.all(np.isfinite(k1)):
        raise NonFiniteState("right-hand side is not finite at the initial state")
    times, ys, fs = [0.0], [y.copy()], [k1.copy()]
    t = 0.0
    h_ctrl = _initial_step(f, y, k1, rtol, atol, max_step)
    clamps = 0
    rejected = accepted = 0
    min_raw = float(y.min())

    for target in grid:
        while t < target:
            remaining = target - t
            h = min(h_ctrl, remaining, max_step)
            if remaining - h <= 1e-12 * max(1.0, target):
                h = remaining
            y_new, k_new, err = dp54_step(f, y, h, k1)
            if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(k_new))):
                rejected += 1
                h_ctrl = 0.25 * h
                if h_ctrl < 1e-14 * max(1.0, t):
                    raise NonFiniteState(f"non-finite state near t = {t:g}")
                continue
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.abs(err / scale).max())
            ok = err_norm <= 1.0
            step_clamps = 0
            if ok and fix_step is not None:
                y_fixed, ok, step_clamps, raw = fix_step(y_new)
                if ok:
                    min_raw = min(min_raw, raw)
                    if step_clamps:
                        y_new = y_fixed
                        k_new = f(y_new)
            if ok:
                factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
                truncated = h < h_ctrl
                new_h = h * factor
                h_ctrl = max(h_ctrl, new_h) if (truncated and factor >= 1.0) else new_h
                h_ctrl = min(h_ctrl, max_step)
                t = target if h == remaining else t + h
                y, k1 = y_new, k_new
                clamps += step_clamps
                accepted += 1
            else:
                rejected += 1
                factor = max(0.1, 0.9 * err_norm ** -0.2) if err_norm > 1.0 else 0.5
                h_ctrl = h * min(factor, 0.9)
                if h_ctrl < 1e-14 * max(1.0, abs(t)):
                    raise StepSizeUnderflow(f"step size underflow at t = {t:g} (h = {h_ctrl:g})")
        times.append(target)
        ys.append(y.copy())
        fs.append(k1.copy())

    stats = dict(clamps=clamps, rejected=rejected, accepted=accepted, min_raw=min_raw)
    return np.array(times), np.array(ys), np.array(fs), stats


def integrate(scenario: EpidemicScenario, settings: IntegrationSettings | None = None) -> Trajectory:
    """Integrate the patch model from the scenario's initial data to ``settings.t_end``.

    A step producing a component in ``[-abs_tol, 0)`` is clamped to zero and
    ``S`` is rescaled to restore the total mass; anything more negative is
    rejected and retried with a smaller step.
    """
    settings = settings or IntegrationSettings()
    n, N = scenario.n, scenario.N
    atol = settings.abs_tol

    # state layout: [S, I, J] with J' = I
    def f(y):
        out = np.empty_like(y)
        out[: 2 * n] = rhs_vector(scenario, y[: 2 * n])
        out[2 * n:] = y[n: 2 * n]
        return out

    def fix_step(y):
        raw = float(y[: 2 * n].min())
        if raw >= 0.0:
            return y, True, 0, raw
        if raw < -atol:
            return y, False, 0, raw
        y = y.copy()
        y[: 2 * n] = np.maximum(y[: 2 * n], 0.0)
        s_mass = y[:n].sum()
        target = N - y[n: 2 * n].sum()
        if s_mass > 0:
            y[:n] *= target / s_mass
        return y, True, 1, raw

    y0 = np.concatenate([scenario.initial_state.as_vector(), np.zeros(n)])
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")
    times, Y, F, stats = _march(
        f, y0, settings.t_end, settings.sample_interval,
        settings.rel_tol, atol, settings.max_step, fix_step,
    )
    J = Y[:, 2 * n:]
    Y, F = Y[:, : 2 * n], F[:, : 2 * n]
    cons = np.abs(Y.sum(axis=1) - N)
    res = np.abs(F).max(axis=1)
    steady = res <= settings.steady_tol * (1.0 + N)
    converged = bool(steady[-1])
    if not converged and steady.size >= STEADY_WINDOW:
        run = np.convolve(steady.astype(int), np.ones(STEADY_WINDOW, dtype=int), mode="valid")
        converged = bool(np.any(run == STEADY_WINDOW))
    return Trajectory(
        times=times,
        S=Y[:, :n],
        I=Y[:, n:],
        derivatives=F,
        J=J,
        conservation_error=cons,
        converged=converged,
        clamp_events=stats["clamps"],
        rejected_steps=stats["rejected"],
        accepted_steps=stats["accepted"],
        min_raw=stats["min_raw"],
        N=N,
    )


def linear_flow_path(
    d: float,
    L: ConnectivityMatrix,
    X0,
    t_end: float,
    sample_interval: float = 0.1,
    rel_tol: float = 1e-12,
    abs_tol: float = 1e-14,
) -> FlowPath:
    """Sampled solution of ``X' = d L X`` on ``[0, t_end]``."""
    A = d * np.asarray(L.entries)
    X0 = np.asarray(X0, dtype=float)
    if not np.all(np.isfinite(X0)):
        raise NonFiniteState("initial vector is not finite")
    if t_end == 0:
        return FlowPath(times=np.array([0.0]), X=X0[None, :].copy())
    times, X, _, _ = _march(
        lambda x: A @ x, X0, t_end, min(sample_interval, t_end),
        rel_tol, abs_tol, min(sample_interval, t_end),
    )
    return FlowPath(times=times, X=X)


def linear_flow(d: float, L: ConnectivityMatrix, X0, t: float, **kwargs) -> np.ndarray:
    """``X(t)`` for ``X' = d L X``; tends to ``sum(X0) * alpha``."""
    return linear_flow_path(d, L, X0, t, **kwargs).X[-1].copy()


def harnack_ratio(trajectory, component: str = "I", t_min: float = 1.0) -> float:
    """Largest sampled ``max_j U_j(t) / min_j U_j(t)`` over ``t >= t_min``.

    ``component`` is ``"S"`` or ``"I"`` for a :class:`Trajectory` and ``"X"``
    for a :class:`FlowPath`.
    """
    if t_min < 1.0:
        raise ValueError("t_min must be at least 1")
    U = getattr(trajectory, component)
    mask = trajectory.times >= t_min
    if not mask.any():
        raise ValueError(f"no samples with t >= {t_min}")
    U = U[mask]
    lo = U.min(axis=1)
    if np.any(lo <= 0):
        k = int(np.flatnonzero(lo <= 0)[0])
        t = trajectory.times[mask][k]
        raise ZeroComponent(f"component {component} has a nonpositive entry at t = {t:g}")
    return float((np.abs(U).max(axis=1) / lo).max())
