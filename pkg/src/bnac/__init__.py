"""Compile discrete Bayesian networks with evidence into arithmetic circuits."""

from .model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    brute_force_marginals,
    brute_force_pr,
    enumerate_terms,
    validate,
)

__all__ = [
    "BayesianNetwork",
    "Cpt",
    "Evidence",
    "Variable",
    "brute_force_marginals",
    "brute_force_pr",
    "enumerate_terms",
    "validate",
]
