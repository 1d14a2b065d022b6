"""Skew products with standard-map fibers: maps, hypothesis checks, Lyapunov spectra, curve ledgers."""

from ._skewlab import (
    FiberMap,
    SkewProduct,
    critical_region,
    hypothesis_report,
    lyapunov,
    parry_measure,
    preset_config,
    run_config,
    run_preset,
)

__all__ = [
    "FiberMap",
    "SkewProduct",
    "critical_region",
    "hypothesis_report",
    "lyapunov",
    "parry_measure",
    "preset_config",
    "run_config",
    "run_preset",
]
