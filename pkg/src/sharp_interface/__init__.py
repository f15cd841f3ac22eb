"""Numerical verification toolkit for the sharp-interface limit of a quasilinear
reaction-diffusion rate functional: layer profile, linearized operator,
optimal corrector, regularized distance flows and the epsilon-ladder rate."""

__version__ = "0.1.0"

from .corrector import CorrectorBasis, cost_density, f_of_q, h1_solve, lambda_coeff, qmin_basis
from .errors import *  # noqa: F401,F403
from .functional import (
    AnsatzField, LayerContext, PerturbationField, build_context, build_phi, convergence_study,
    evaluate_J, evaluate_S_asymptotic, evaluate_S_direct, solve_hmax,
)
from .geometry import FlowField, Path1D, coarea_check, s_ac, signed_distance
from .linop import LineOperator, assemble, decay_estimate
from .model import ModelFunctions, ScalarFunction, half_flux_model, reference_model, validate_model
from .profile import Coefficients, WaveProfile, XiGrid, compute_coefficients, fit_decay, solve_profile
