"""Discrete multi-marginal optimal transport: exact LP solutions, splitting sets,
twist cardinality and Monge-map decompositions of optimal plans."""

from .cost import CostOracle, evaluate, gradient_d1
from .decompose import MongeDecomposition, PeelingTrace, peel, reconstruct, verify_k_bound
from .measure import DiscreteMeasure, TransportPlan, project, pushforward, random_measure
from .solver import PotentialTuple, SolveCertificate, duality_gap, solve_entropic, solve_exact
from .splitting import SplittingSet, extract_splitting_set, fiber_reports, verify_tuple
from .twist import (
    TwistReport,
    accumulation_scan,
    check_generalized_twist,
    twist_cardinality,
    twist_cardinality_bruteforce,
)

__version__ = "0.1.0"

__all__ = [
    "CostOracle", "DiscreteMeasure", "MongeDecomposition", "PeelingTrace", "PotentialTuple",
    "SolveCertificate", "SplittingSet", "TransportPlan", "TwistReport", "accumulation_scan",
    "check_generalized_twist", "duality_gap", "evaluate", "extract_splitting_set",
    "fiber_reports", "gradient_d1", "peel", "project", "pushforward", "random_measure",
    "reconstruct", "solve_entropic", "solve_exact", "twist_cardinality",
    "twist_cardinality_bruteforce", "verify_k_bound", "verify_tuple",
]
