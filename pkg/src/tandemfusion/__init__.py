"""Distributed detection in a two-node tandem: node 1 sends a k-level quantized
likelihood ratio, node 2 fuses it with its own observation.
"""

from .divergence import (
    ChernoffResult,
    KLDirection,
    chernoff_continuous,
    chernoff_discrete,
    geometric_convexity_gap,
    joint_chernoff,
    kl_continuous,
    kl_discrete,
    system_chernoff,
)
from .errors import ModelError, NumericalError
from .fusion import (
    ErrorReport,
    QuantizerMode,
    TandemSystem,
    decide,
    exact_error,
    fused_llr,
    iid_error_exponent,
    monte_carlo_error,
    theorem3_experiment,
    unquantized_error,
)
from .models import ConditionalModel, Family, cdf, likelihood_ratio, pdf, posterior_stat, sample
from .quantize import (
    DiscreteCondPMF,
    Domain,
    QuantizerSpec,
    apply,
    cell_probabilities,
    coarsen_pmf,
    optimize_thresholds,
    refine,
    uniform_posterior_quantizer,
)

__version__ = "0.1.0"
