"""Python access to the SGDA core: synthetic data, PPMI, scoring, metrics and training."""

from ._core import (
    ConfigError,
    NumericalError,
    SgdaError,
    anneal_weights,
    f1_scores,
    fit_synthetic,
    gradcheck,
    posterior_scores,
    ppmi,
    propagation,
    reconstruct,
    run_cli,
    synthetic_pair,
)

__all__ = [
    "ConfigError",
    "NumericalError",
    "SgdaError",
    "anneal_weights",
    "f1_scores",
    "fit_synthetic",
    "gradcheck",
    "posterior_scores",
    "ppmi",
    "propagation",
    "reconstruct",
    "run_cli",
    "synthetic_pair",
]
