"""Closed-form input reconstruction from a CNN's parameter gradients."""

from .activation import (activation_derivative_from_output, invert_activation_partial,
                         propagate_gradient_through_activation, snap_activation_output)
from .constraints import (GradientConstraints, WeightConstraints, build_gradient_constraints,
                          build_weight_constraints, stack_dense)
from .fc import EPS_DIV, fc_input_gradient, recover_fc_input
from .maps import ContributionMaps, build_contribution_maps, conv_input_gradient
from .pipeline import (LayerDiagnostics, LayerSolveState, LayerStage, ReconstructionReport,
                       iter_stages, layer_stage, run_attack)
from .solve import (DEFAULT_RANK_EPS, LayerSolution, default_rank_eps, solve_layer_input,
                    stacked_rank)

__all__ = [
    "activation_derivative_from_output", "invert_activation_partial",
    "propagate_gradient_through_activation", "snap_activation_output",
    "GradientConstraints", "WeightConstraints", "build_gradient_constraints",
    "build_weight_constraints", "stack_dense",
    "EPS_DIV", "fc_input_gradient", "recover_fc_input",
    "ContributionMaps", "build_contribution_maps", "conv_input_gradient",
    "LayerDiagnostics", "LayerSolveState", "LayerStage", "ReconstructionReport",
    "iter_stages", "layer_stage", "run_attack",
    "DEFAULT_RANK_EPS", "LayerSolution", "default_rank_eps", "solve_layer_input",
    "stacked_rank",
]
