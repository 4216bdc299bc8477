"""Sparse polynomial and reduced basis surrogates for affine parametric elliptic problems."""

from .errors import (ConfigurationError, InvalidCapError, MalformedInputError, NumericalError, OrderingError, PssError,
                     QuadratureBudgetError, SchemaError, SequenceTooShortError, SolverError, SurrogateViolationError,
                     TruncationInsufficientError)
from .greedy import CompactSet, GreedyTrace, ReducedBasis, matrix_trace, rb_offline, rb_online, snapshot_widths, weak_greedy
from .interp import SparseInterpolant, UnivariateSequence, adaptive_interpolate, interpolate, leja_sequence, rleja_sequence
from .legendre import LegendreCoefficients, LegendreSurrogate, legendre_coeffs_quadrature
from .model import (AffineCoefficientFamily, FemSpace, StiffnessSet, assemble, check_uea, constant_family,
                    disjoint_inclusions, smooth_family)
from .multiindex import IndexSet, MultiIndex, build_apriori_set, is_downward_closed, margin, neighbors
from .report import fit_rate
from .taylor import TaylorSurrogate, bulk_chase_run, compute_taylor, sparse_margin

__version__ = "0.1.0"
