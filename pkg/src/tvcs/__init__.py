"""1D total-variation compressed sensing toolkit.

Signal models and separation constants, the signal-adapted median-split tree
and non-dyadic Haar system, conic mean width estimators, TV solvers and the
phase-transition and stability experiments built on them.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (InvalidParameters, NoJumps, NumericalFailure, ResolutionTooCoarse,
                     SeparationTooSmall, TVCSError)
from .gradient import best_s_support, grad, grad_adjoint, grad_pinv
from .haar import NonDyadicHaar
from .signals import (PiecewiseConstantFn, Signal, discretize, generate,
                      separation_continuous, separation_discrete)
from .solver import MeasurementModel, SolveOptions, SolveResult, solve_tv, success
from .tree import balancing, build_tree, decompose, extended_support
from .width import (required_m, required_m_stable, width_empirical, width_upper_analytic,
                    width_upper_mc)
