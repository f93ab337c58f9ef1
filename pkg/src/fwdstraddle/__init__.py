"""Model-independent bounds for forward-start straddles.

Given the laws of the forward at two dates, compute the cheapest and the most
expensive martingale couplings for ``E|Y - X|``, the matching semi-static
subhedge, and numerical certificates that the bounds are attained.
"""

from .measures import (
    ConvexOrderError,
    DispersionError,
    MarginalPair,
    Measure,
    MeasureError,
    convex_order_leq,
    decompose,
    load_measure,
    parse_measure,
)
from .potential import Potential
from .lower_coupling import CouplingMap, build_coupling, primal_price, bound_report
from .dual_hedge import HedgePair, build_hedge, dual_value, verify_subhedge
from .upper_coupling import UpperCouplingMap, build_upper, upper_price
from .multiperiod import bound_sequence

__all__ = [
    "ConvexOrderError",
    "CouplingMap",
    "DispersionError",
    "HedgePair",
    "MarginalPair",
    "Measure",
    "MeasureError",
    "Potential",
    "UpperCouplingMap",
    "bound_report",
    "bound_sequence",
    "build_coupling",
    "build_hedge",
    "build_upper",
    "convex_order_leq",
    "decompose",
    "dual_value",
    "load_measure",
    "parse_measure",
    "primal_price",
    "upper_price",
    "verify_subhedge",
]
