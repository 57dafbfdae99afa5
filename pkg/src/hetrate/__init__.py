"""Rate coverage of heterogeneous cellular networks under shadowing-aware
biased cell selection, with a Monte Carlo cross-check."""

from .analytic import (
    LoadPmf,
    RateCoverageResult,
    conditional_sir_ccdf,
    load_pmf,
    mean_load,
    optimal_bias,
    percentile_rate,
    rate_coverage,
    rate_coverage_mean_load,
    selection_probabilities,
    selection_probability,
)
from .model import Network, Tier, effective_density, equivalent_network, validate
from .numerics import Deterministic, Lognormal, fractional_moment, gauss_2f1, interference_F

__version__ = "0.1.0"
