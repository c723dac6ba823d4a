from pathlib import Path

import numpy as np
import pytest

from sispatch import EpidemicScenario, Mechanism, validate_connectivity

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SYM2 = [[-1.0, 1.0], [1.0, -1.0]]
ASYM2 = [[-2.0, 1.0], [2.0, -1.0]]
CYCLE3 = [[-1.0, 0.0, 1.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]


def random_connectivity(rng, n, density=0.5):
    """A random validated connectivity matrix; a directed cycle guarantees irreducibility."""
    off = rng.uniform(0.05, 2.0, size=(n, n)) * (rng.random((n, n)) < density)
    perm = rng.permutation(n)
    for k in range(n):
        off[perm[(k + 1) % n], perm[k]] = rng.uniform(0.1, 2.0)
    np.fill_diagonal(off, 0.0)
    off[np.diag_indices(n)] = -off.sum(axis=0)
    return validate_connectivity(off)


def scenario(L, beta, gamma, dS, dI, S0, I0, mechanism="mass_action", **kw):
    S0, I0 = np.asarray(S0, float), np.asarray(I0, float)
    return EpidemicScenario(
        L=validate_connectivity(L),
        beta=np.asarray(beta, float),
        gamma=np.asarray(gamma, float),
        dS=dS,
        dI=dI,
        mechanism=Mechanism(mechanism),
        S0=S0,
        I0=I0,
        N=float(S0.sum() + I0.sum()),
        **kw,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240511)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        label = name.removeprefix("test_").split("_", 1)
        tag = label[0].upper()
        desc = label[1].replace("_", " ") if len(label) > 1 else ""
        status = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag:<5} {status}  {desc}")
