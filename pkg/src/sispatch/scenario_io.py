"""Scenario files and output writers.

A scenario file is a JSON object::

    {
      "name": "two-patch",
      "n": 2,
      "L": [-1, 1, 1, -1],              # row-major, n*n entries
      "beta": [1, 1], "gamma": [1, 2],
      "dS": 1, "dI": 0,
      "mechanism": "mass_action",        # or "standard_incidence"
      "S0": [3, 3], "I0": [1, 1], "N": 8,
      "integration": {"tEnd": 500, "relTol": 1e-10, ...},
      "tolerances": {"verify": 1e-3, "classification": 1e-12, "connectivity": 1e-9},
      "output": {"dir": "out"}
    }

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import IntegrationSettings, Trajectory
from .errors import ParseError
from .model import EpidemicScenario, Mechanism
from .netmat import COLUMN_SUM_TOL, validate_connectivity

__all__ = [
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
    "dump_config",
    "write_trajectory_csv",
    "write_json",
]

REQUIRED = ("n", "L", "beta", "gamma", "dS", "dI", "mechanism", "S0", "I0", "N")
OPTIONAL = ("name", "integration", "tolerances", "output")

# file key -> IntegrationSettings field
INTEGRATION_KEYS = {
    "relTol": "rel_tol",
    "absTol": "abs_tol",
    "tEnd": "t_end",
    "maxStep": "max_step",
    "steadyTol": "steady_tol",
    "sampleInterval": "sample_interval",
}
TOLERANCE_DEFAULTS = {"verify": 1e-3, "classification": 1e-12, "connectivity": COLUMN_SUM_TOL}
OUTPUT_KEYS = ("dir", "csv", "summary", "report")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    scenario: EpidemicScenario
    settings: IntegrationSettings
    tolerances: dict
    output: dict = field(default_factory=dict)
    raw_L: np.ndarray | None = None


def _reject_unknown(obj, allowed, where):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ParseError(f"unknown key(s) {extra} in {where}")


def _real(obj, key):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{key!r} must be a finite number, got {v!r}")
    return float(v)


def _vector(obj, key, n):
    v = obj[key]
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(f"{key!r} must be a list of {n} numbers")
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ParseError(f"{key!r} contains a non-numeric or non-finite entry {x!r}")
    return np.array(v, dtype=float)


def parse_scenario(doc: dict, default_name: str = "scenario") -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from a decoded JSON object."""
    if not isinstance(doc, dict):
        raise ParseError("scenario file must contain a JSON object")
    _reject_unknown(doc, REQUIRED + OPTIONAL, "scenario")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ParseError(f"missing required key(s) {missing}")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ParseError(f"'n' must be an integer >= 2, got {n!r}")
    raw_L = _vector(doc, "L", n * n).reshape(n, n)
    try:
        mechanism = Mechanism(doc["mechanism"])
    except ValueError:
        raise ParseError(
            f"'mechanism' must be one of {[m.value for m in Mechanism]}, got {doc['mechanism']!r}"
        ) from None

    tolerances = dict(TOLERANCE_DEFAULTS)
    tol_doc = doc.get("tolerances", {})
    if not isinstance(tol_doc, dict):
        raise ParseError("'tolerances' must be an object")
    _reject_unknown(tol_doc, TOLERANCE_DEFAULTS, "tolerances")
    for key in tol_doc:
        tolerances[key] = _real(tol_doc, key)

    integ = doc.get("integration", {})
    if not isinstance(integ, dict):
        raise ParseError("'integration' must be an object")
    _reject_unknown(integ, INTEGRATION_KEYS, "integration")
    try:
        settings = IntegrationSettings(**{INTEGRATION_KEYS[k]: _real(integ, k) for k in integ})
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"integration settings: {exc}") from None

    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ParseError("'output' must be an object")
    _reject_unknown(output, OUTPUT_KEYS, "output")
    for k, v in output.items():
        if not isinstance(v, str):
            raise ParseError(f"output.{k} must be a string")

    name = doc.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise ParseError("'name' must be a nonempty string")

    L = validate_connectivity(raw_L, tol=tolerances["connectivity"])
    scenario = EpidemicScenario(
        L=L,
        beta=_vector(doc, "beta", n),
        gamma=_vector(doc, "gamma", n),
        dS=_real(doc, "dS"),
        dI=_real(doc, "dI"),
        mechanism=mechanism,
        S0=_vector(doc, "S0", n),
        I0=_vector(doc, "I0", n),
        N=_real(doc, "N"),
        classify_eps=tolerances["classification"],
        name=name,
    )
    return ScenarioConfig(name, scenario, settings, tolerances, dict(output), raw_L)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc, default_name=path.stem)


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _dump(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    return _fmt(obj)


def dump_config(cfg: ScenarioConfig) -> str:
    """Canonical scenario text; reals carry 17 significant digits so parsing is bit-exact."""
    sc = cfg.scenario
    L = cfg.raw_L if cfg.raw_L is not None else np.asarray(sc.L.entries)
    doc = {
        "name": cfg.name,
        "n": sc.n,
        "L": np.asarray(L, dtype=float).ravel(),
        "beta": sc.beta,
        "gamma": sc.gamma,
        "dS": sc.dS,
        "dI": sc.dI,
        "mechanism": sc.mechanism.value,
        "S0": sc.S0,
        "I0": sc.I0,
        "N": sc.N,
        "integration": {k: getattr(cfg.settings, f) for k, f in INTEGRATION_KEYS.items()},
        "tolerances": dict(cfg.tolerances),
    }
    if cfg.output:
        doc["output"] = dict(cfg.output)
    return _dump(doc) + "\n"


def write_trajectory_csv(path, trajectory: Trajectory, V=None, Vdot=None) -> None:
    """Columns ``t, S_1..S_n, I_1..I_n, V, Vdot, conservation_error``; V columns blank when absent."""
    n = trajectory.S.shape[1]
    header = ["t"] + [f"S_{j}" for j in range(1, n + 1)] + [f"I_{j}" for j in range(1, n + 1)]
    header += ["V", "Vdot", "conservation_error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(trajectory.times):
            row = [repr(float(t))]
            row += [repr(float(x)) for x in trajectory.S[k]]
            row += [repr(float(x)) for x in trajectory.I[k]]
            row += ["" if V is None else repr(float(V[k])), "" if Vdot is None else repr(float(Vdot[k]))]
            row.append(repr(float(trajectory.conservation_error[k])))
            w.writerow(row)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n")
