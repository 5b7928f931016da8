"""Numerical toolkit for the finite-dimensional reduction of the
fourth-order critical problem Delta^2 u = K u^{(n+4)/(n-4)} on the unit
ball with u = Delta u = 0 on the boundary, 5 <= n <= 10.
"""
from .backend import BACKEND_NAME, zonal_sum
from .constants import ConstantSet, constant_set, critical_exponent
from .numerics import (BallDomain, OdeSpec, QuadratureError, QuadratureSpec,
                       integrate_ball, integrate_radial_rn, ode_integrate,
                       reduced_polar_rule)
from .bubbles import (Bubble, delta_eval, delta_laplacian, delta_params_grad,
                      eps_pair, eps_derivs, interaction_integral,
                      interaction_integral_check, interaction_remainder_exponent)
from .green import (green_laplacian_ball, green_navier, regular_part_H,
                    grad_H, robin, grad_robin, dh_dnu_rate_check)
from .projection import (Configuration, DecomposeResult, GriddedFunction,
                         ProjectedBubble, decompose, inner_product, pdelta,
                         synthesize_grid)
from .energy import (EnergyReport, PairingReport, energy_report,
                     grad_pairing_expansion, grad_pairing_fd, j_expansion,
                     j_quadrature, negative_part_indicator, normalized_alphas)
from .morse import (CATALOGUE, AssumptionReport, CpiRecord, CriticalPoint,
                    KField, catalogued_k, check_assumptions,
                    enumerate_cpi_pairs, enumerate_cpi_single,
                    find_critical_points, pair_level, single_level)
from .flow import (FlowConstants, FlowState, FlowTrace, MuEstimate,
                   NormalFormFit, estimate_intersection_number,
                   f_lambda_initial, fit_normal_form_constant, integrate_flow,
                   lower_bound_report, parameter_velocity, psi_normal_form,
                   sample_trajectory_states, y1_field, y2_field)

__version__ = "0.1.0"
