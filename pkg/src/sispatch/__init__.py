"""Simulation and theorem verification for SIS epidemic models on patch networks."""

__version__ = "0.1.0"

from .dynamics import IntegrationSettings, Trajectory, harnack_ratio, integrate, linear_flow
from .limits import PredictedLimit, Verdict, predict, verify
from .model import EpidemicScenario, Mechanism, State, classify, local_risk, rhs
from .netmat import (
    ConnectivityMatrix,
    PerronPair,
    perron_vector,
    spectral_bound,
    validate_connectivity,
    weighted_quadratic_form,
)
from .nstar import compute_N_star

__all__ = [
    "ConnectivityMatrix",
    "EpidemicScenario",
    "IntegrationSettings",
    "Mechanism",
    "PerronPair",
    "PredictedLimit",
    "State",
    "Trajectory",
    "Verdict",
    "classify",
    "compute_N_star",
    "harnack_ratio",
    "integrate",
    "linear_flow",
    "local_risk",
    "perron_vector",
    "predict",
    "rhs",
    "spectral_bound",
    "validate_connectivity",
    "verify",
    "weighted_quadratic_form",
]
