"""Estimator strategies, Monte-Carlo tail harness and exponent extraction."""

from .harness import SimulationConfig, TailEstimate, sample_estimates, simulate_tail
from .rates import RateCurve, extract_alpha, extract_beta, rate_curve, theoretical_bounds
from .strategies import (
    STRATEGY_NAMES,
    FixedSLD,
    GaussianHomodyne,
    GaussianNumber,
    MAdaptive,
    Superefficient,
    TwoStage,
    make_strategy,
    mgf_phi,
    run_fixed_sld,
    run_m_adaptive,
    run_superefficient,
    run_two_stage,
)

__all__ = [
    "SimulationConfig",
    "TailEstimate",
    "simulate_tail",
    "sample_estimates",
    "RateCurve",
    "extract_beta",
    "extract_alpha",
    "rate_curve",
    "theoretical_bounds",
    "STRATEGY_NAMES",
    "FixedSLD",
    "TwoStage",
    "Superefficient",
    "MAdaptive",
    "GaussianHomodyne",
    "GaussianNumber",
    "make_strategy",
    "mgf_phi",
    "run_fixed_sld",
    "run_two_stage",
    "run_superefficient",
    "run_m_adaptive",
]
