"""Generalized integral means spectrum of whole-plane SLE: closed forms,
phase geometry, hypergeometric test functions, operator checks and Monte Carlo."""

from .spectrum import (
    MomentPoint, beta_gamma, dual_gamma, gamma_roots, landmarks, spectrum_functions,
)
from .phase import (
    Phase, Validity, Zone, classify_conjecture, classify_validity, conjectured_beta,
    m_fold_beta, proof_zone,
)

__version__ = "0.1.0"

__all__ = [
    "MomentPoint", "beta_gamma", "dual_gamma", "gamma_roots", "landmarks", "spectrum_functions",
    "Phase", "Validity", "Zone", "classify_conjecture", "classify_validity", "conjectured_beta",
    "m_fold_beta", "proof_zone",
]
