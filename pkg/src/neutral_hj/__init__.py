"""Path-dependent Hamilton-Jacobi equations for neutral-type systems:
histories, dynamics, Hamiltonians, value functionals and solution checks."""

from ._kernels import USING_NUMBA
from .dynamics import (Bounds, ControlSignal, NumericError, ProblemSpec, Selection, apriori_bounds,
                       ball_radius, box_lattice, ci_derivative_g, integrate_control, integrate_inclusion)
from .hamiltonian import Constants, EstimationError, estimate_constants, hamiltonian_eval, omega_eval
from .histories import (DomainError, History, NotInPLipStar, PathPoint, Trajectory, extend_constant,
                        mollify, norms, right_derivative_at_start, shift, upsilon)
from .problems import analytic_functional, get_problem, problem_names, register
from .value import (BudgetError, CandidateFunctional, cost_eval, synthesize_feedback, value_enumerate,
                    value_extend)
from .verifier import (VerificationReport, check_dini, check_dpp, check_phi2, check_subsuper,
                       check_terminal, directional_derivative, hj_residual, nu_diagnostic, run_suite)

__version__ = "0.1.0"
