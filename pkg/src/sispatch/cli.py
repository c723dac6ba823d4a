"""Command-line entry point: ``sispatch {validate,simulate,verify,nstar} PATH``.

``PATH`` may be a scenario file or a directory of ``*.json`` scenarios; a
directory is processed with one worker process per scenario.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import harnack_ratio, integrate
from .errors import ParseError, RegimeMismatch, SisError, ValidationError
from .limits import Branch, predict, recover_lambda_star, regime_of, verify
from .lyapunov import (
    applicable_kind,
    chain_rule_derivative,
    lyapunov_derivative,
    monotonicity_report,
)
from .model import Mechanism, classify
from .netmat import perron_vector
from .nstar import grid_n_star, n_star_search
from .scenario_io import ScenarioConfig, dump_config, load_scenario, write_json, write_trajectory_csv

log = logging.getLogger("sispatch")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID, EXIT_REGIME, EXIT_RUNTIME = 0, 1, 2, 3, 4, 5


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    settings = cfg.settings
    if getattr(args, "t_end", None) is not None:
        settings = settings.replace(t_end=args.t_end)
    tolerances = dict(cfg.tolerances)
    if getattr(args, "tol", None) is not None:
        tolerances["verify"] = args.tol
    return ScenarioConfig(cfg.name, cfg.scenario, settings, tolerances, cfg.output, cfg.raw_L)


def _out_dir(cfg, args) -> Path:
    out = Path(args.out or cfg.output.get("dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _classification_dict(cls) -> dict:
    one = lambda idx: [int(j) + 1 for j in idx]  # noqa: E731 - report patches 1-based
    return {
        "r": cls.r,
        "Hminus": one(cls.H_minus),
        "Hzero": one(cls.H_zero),
        "Hplus": one(cls.H_plus),
        "tHminus": one(cls.tH_minus),
        "tHzero": one(cls.tH_zero),
        "tHplus": one(cls.tH_plus),
        "omega0": one(cls.omega0),
        "omegaPlus": one(cls.omega_plus),
        "rTildeM": cls.r_tilde_min,
    }


def run_validate(cfg: ScenarioConfig, args=None) -> tuple[int, dict]:
    pair = perron_vector(cfg.scenario.L)
    cls = classify(cfg.scenario, pair)
    return EXIT_OK, {
        "scenario": cfg.name,
        "alpha": pair.alpha,
        "theta": pair.theta,
        "classification": _classification_dict(cls),
    }


def _lyapunov_columns(cfg, pair, traj):
    kind = applicable_kind(cfg.scenario)
    if kind is None:
        return None, None, None
    rep = monotonicity_report(kind, cfg.scenario, pair, traj)
    return rep, rep.values, rep.vdots


def run_simulate(cfg: ScenarioConfig, args) -> tuple[int, dict]:
    sc = cfg.scenario
    pair = perron_vector(sc.L)
    traj = integrate(sc, cfg.settings)
    rep, V, Vdot = _lyapunov_columns(cfg, pair, traj)
    out = _out_dir(cfg, args)
    csv_path = out / cfg.output.get("csv", f"{cfg.name}.csv")
    write_trajectory_csv(csv_path, traj, V, Vdot)
    summary = {
        "scenario": cfg.name,
        "tEnd": float(traj.times[-1]),
        "final": {"S": traj.S[-1], "I": traj.I[-1]},
        "converged": traj.converged,
        "maxConservationError": float(traj.conservation_error.max()),
        "clampEvents": traj.clamp_events,
        "harnackRatio": _harnack(sc, traj),
        "lyapunov": rep.to_dict() if rep else None,
        "csv": str(csv_path),
    }
    write_json(out / cfg.output.get("summary", f"{cfg.name}.summary.json"), summary)
    return EXIT_OK, summary


def _harnack(sc, traj):
    if sc.dI > 0 and traj.times[-1] >= 1.0:
        try:
            return harnack_ratio(traj, "I", 1.0)
        except SisError:
            return None
    return None


def _chain_rule_probe(cfg, pair, kind, seed, samples=16):
    """Largest relative gap between closed-form Vdot and grad V . rhs at random states of E."""
    if kind is None:
        return None
    rng = np.random.default_rng(seed)
    sc = cfg.scenario
    worst = 0.0
    for _ in range(samples):
        y = rng.dirichlet(np.ones(2 * sc.n)) * sc.N
        closed = lyapunov_derivative(kind, sc, pair, y)
        chain, scale = chain_rule_derivative(kind, sc, pair, y)
        worst = max(worst, abs(closed - chain) / max(scale, 1e-300))
    return worst


def run_verify(cfg: ScenarioConfig, args) -> tuple[int, dict]:
    sc = cfg.scenario
    regime = regime_of(sc)
    pair = perron_vector(sc.L)
    cls = classify(sc, pair)
    pred = predict(sc, pair, cls)
    traj = integrate(sc, cfg.settings)
    tol = cfg.tolerances["verify"]
    verdict = verify(pred, traj.final_state, tol)
    kind = applicable_kind(sc)
    mono = monotonicity_report(kind, sc, pair, traj)
    report = {
        "scenario": cfg.name,
        "theorem": regime,
        "branch": verdict.branch,
        "predicted": pred.to_dict(),
        "observed": {"S": traj.S[-1], "I": traj.I[-1], "t": float(traj.times[-1])},
        "residuals": verdict.residuals,
        "pass": verdict.passed,
        "tolerance": tol,
        "notes": list(verdict.notes),
        "classification": _classification_dict(cls),
        "alpha": pair.alpha,
        "lyapunov": dict(
            mono.to_dict(),
            chainRuleMaxRelError=_chain_rule_probe(cfg, pair, kind, getattr(args, "seed", 0) or 0),
        ),
        "trajectory": {
            "converged": traj.converged,
            "maxConservationError": float(traj.conservation_error.max()),
            "clampEvents": traj.clamp_events,
            "minRaw": traj.min_raw,
        },
        "harnackRatio": _harnack(sc, traj),
    }
    if sc.mechanism is Mechanism.MASS_ACTION and sc.dS == 0:
        rec = recover_lambda_star(sc, traj)
        report["lambdaStar"] = {
            "lambda": rec.lam,
            "sResidual": rec.s_residual,
            "sicResidual": rec.sic_residual,
        }
    if pred.branch is Branch.T32undetermined:
        report["realizedBranch"] = verdict.branch
    out = _out_dir(cfg, args)
    write_json(out / cfg.output.get("report", f"{cfg.name}.report.json"), report)
    return (EXIT_OK if verdict.passed else EXIT_FAIL), report


def run_nstar(cfg: ScenarioConfig, args) -> tuple[int, dict]:
    sc = cfg.scenario
    res = n_star_search(sc)
    out = {
        "scenario": cfg.name,
        "NStar": res.value,
        "upperBound": res.upper,
        "optimizerGap": res.gap,
        "lambda": res.lam,
        "sumR": res.sum_r,
        "N": sc.N,
        "NExceedsNStar": bool(sc.N > res.upper),
        "notes": res.notes,
        "gridCertificate": None,
    }
    if sc.n <= 3:
        grid = grid_n_star(sc)
        out["gridCertificate"] = {
            "value": grid.value,
            "lambda": grid.lam,
            "evaluations": grid.evaluations,
            "relativeGap": abs(res.value - grid.value) / max(1.0, abs(grid.value)),
        }
    if args is not None and args.out:
        write_json(_out_dir(cfg, args) / f"{cfg.name}.nstar.json", out)
    return EXIT_OK, out


COMMANDS = {
    "validate": run_validate,
    "simulate": run_simulate,
    "verify": run_verify,
    "nstar": run_nstar,
}


def _run_one(command: str, path: str, args) -> tuple[int, dict]:
    try:
        cfg = load_scenario(path)
    except ParseError as exc:
        return EXIT_PARSE, {"scenario": str(path), "error": "ParseError", "message": str(exc)}
    except ValidationError as exc:
        return EXIT_INVALID, {
            "scenario": str(path),
            "error": "ValidationError",
            "assumption": exc.assumption,
            "violation": type(exc).__name__,
            "message": str(exc),
        }
    if args.dump_config:
        return EXIT_OK, {"scenario": cfg.name, "config": dump_config(cfg)}
    cfg = _apply_overrides(cfg, args)
    try:
        return COMMANDS[command](cfg, args)
    except RegimeMismatch as exc:
        return EXIT_REGIME, {"scenario": cfg.name, "error": "RegimeMismatch", "message": str(exc)}
    except OSError as exc:
        return EXIT_RUNTIME, {"scenario": cfg.name, "error": "IoError", "message": str(exc)}
    except SisError as exc:
        return EXIT_RUNTIME, {"scenario": cfg.name, "error": type(exc).__name__, "message": str(exc)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sispatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("path", help="scenario file or directory of scenario files")
        p.add_argument("--out", help="output directory (default: scenario's output.dir or cwd)")
        p.add_argument("--t-end", type=float, dest="t_end")
        p.add_argument("--tol", type=float, help="verification tolerance")
        p.add_argument("--dump-config", action="store_true", help="print the canonical scenario and exit")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized property probes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _emit(result: dict, dump: bool) -> None:
    if dump and "config" in result:
        sys.stdout.write(result["config"])
        return
    from .scenario_io import _jsonable

    print(json.dumps(_jsonable(result), indent=2))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    target = Path(args.path)
    if target.is_dir():
        paths = sorted(target.glob("*.json"))
        if not paths:
            print(f"no *.json scenarios in {target}", file=sys.stderr)
            return EXIT_PARSE
        with ProcessPoolExecutor(max_workers=min(len(paths), 8)) as pool:
            futures = [pool.submit(_run_one, args.command, str(p), args) for p in paths]
            results = [f.result() for f in futures]
        for code, res in results:
            log.info("%s -> exit %d", res.get("scenario"), code)
            _emit(res, args.dump_config)
        return max(code for code, _ in results)
    code, res = _run_one(args.command, str(target), args)
    _emit(res, args.dump_config)
    if code not in (EXIT_OK, EXIT_FAIL):
        print(f"{res.get('error')}: {res.get('message')}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
