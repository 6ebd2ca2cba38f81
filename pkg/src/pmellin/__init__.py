"""Exact motivic and p-adic integration with Mellin and Fourier transforms."""
from .errors import *  # noqa: F401,F403
from .exactnum import Cyclotomic, MotivicValue, mv_eval, mv_series_coeff, format_mv
from .localfield import LAURENT, PADIC, LocalFieldElement, StructureConfig, parse_element
from .presburger import PresburgerSet, parse_formula, parse_set
from .cfun import CFunction, evaluate
from .integrate import integrate_all, integral_value, mellin, mellin_invert_at, fourier
from .oracle import TruncationSpec, truncated_integral, compare, transfer_check

__version__ = "0.1.0"
