"""Numerical verification of bi-slant warped-product submanifolds in
globally conformal Kähler spaces."""

__version__ = "0.1.0"

from .ambient import AmbientSpace
from .exprlang import Expression, parse
from .immersion import Chart, frame, immersion, second_fundamental
from .numerics import ToleranceProfile
from .report import CheckReport, CheckResult, emit, report_from_json
from .scenario import Scenario, builtin, load_scenario
from .slant import DistributionSplit, slant_angle
from .warped import WarpDeclaration, adapted_frame, chen_inequality, equality_case

__all__ = [
    "AmbientSpace",
    "Chart",
    "CheckReport",
    "CheckResult",
    "DistributionSplit",
    "Expression",
    "Scenario",
    "ToleranceProfile",
    "WarpDeclaration",
    "adapted_frame",
    "builtin",
    "chen_inequality",
    "emit",
    "equality_case",
    "frame",
    "immersion",
    "load_scenario",
    "parse",
    "report_from_json",
    "second_fundamental",
    "slant_angle",
]
