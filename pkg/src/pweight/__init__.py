"""Optimal p-value weights for weighted Bonferroni multiple testing.

Closed-form weights for Gaussian one- and two-sided tests, bounded
monotone weights from a log-barrier interior-point solver, and the
pipeline that applies them to pairs of summary-statistics studies.
"""

from .barrier import (
    BarrierConfig,
    MonotoneProblem,
    MonotoneResult,
    monotone_weights,
    power_of_weights,
    solve_monotone,
    subsample_solve,
)
from .closed_form import (
    EffectSizeVector,
    WeightVector,
    exponential_weights,
    filter_weights,
    monotone_regime_one_sided,
    monotone_regime_two_sided,
    spjotvoll_one_sided,
    spjotvoll_two_sided,
)
from .estimators import (
    ExponentialWeighter,
    FilterWeighter,
    MonotoneWeighter,
    SpjotvollWeighter,
    UniformWeighter,
    WeightedBonferroni,
)
from .exceptions import PWeightError
from .testing import join_studies, weighted_bonferroni

__all__ = [
    "BarrierConfig",
    "MonotoneProblem",
    "MonotoneResult",
    "monotone_weights",
    "power_of_weights",
    "solve_monotone",
    "subsample_solve",
    "EffectSizeVector",
    "WeightVector",
    "exponential_weights",
    "filter_weights",
    "monotone_regime_one_sided",
    "monotone_regime_two_sided",
    "spjotvoll_one_sided",
    "spjotvoll_two_sided",
    "ExponentialWeighter",
    "FilterWeighter",
    "MonotoneWeighter",
    "SpjotvollWeighter",
    "UniformWeighter",
    "WeightedBonferroni",
    "PWeightError",
    "join_studies",
    "weighted_bonferroni",
]

__version__ = "0.1.0"
