"""Semiparametric Bayesian transformation regression."""

from ._core import (
    ConfigError,
    Error,
    InputError,
    NumericalError,
    crps,
    hpd_interval,
    read_csv,
    sbgp,
    sblm,
    sbqr,
    simulate,
)

__all__ = [
    "ConfigError",
    "Error",
    "InputError",
    "NumericalError",
    "crps",
    "hpd_interval",
    "read_csv",
    "sbgp",
    "sblm",
    "sbqr",
    "simulate",
]
