"""Numerical lab for two-weight inequalities of dyadic maximal, Poisson and fractional operators."""
from .constants import (
    ConstantReport,
    ap_constant,
    apq_constant,
    full_testing_constant,
    norm_lower_bound,
    poisson_ap_constant,
    restricted_testing_constant,
)
from .dyadic import DyadicCube
from .operators import OperatorKind
from .proof import Decomposer, classify, min_top_k, paper_D
from .weights import HalfSpaceField, WeightField

__version__ = "0.1.0"

__all__ = [
    "ConstantReport", "DyadicCube", "Decomposer", "HalfSpaceField", "OperatorKind", "WeightField",
    "ap_constant", "apq_constant", "classify", "full_testing_constant", "min_top_k",
    "norm_lower_bound", "paper_D", "poisson_ap_constant", "restricted_testing_constant",
]
