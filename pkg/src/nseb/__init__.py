"""Finitary equivariant extraction of iid symbols from non-stationary independent sources."""
from .errors import (CapacityError, ConfigError, DomainError, InfeasibleCodebook, InsufficientDataError,
                     NotGoodError, NsebError, WindowWarning)
from .expand import ExpansionPlan, expand_uniform, plan_expansion
from .factor import FactorOutput, equivariance_check, extract, extract_stream
from .intervals import IntervalDecomposition, decompose, find_markers
from .matching import ColorSequence, MatchingAssignment, color_intervals, mesalkin_match
from .source import Alphabet, MarginalSchedule, Window, kakutani_divergence, marginal_at, sample_window
from .typecode import TypeCodebook, build_codebook, psi_encode

__version__ = "0.1.0"
