"""End-to-end reconstruction: dense layer first, then each conv block down to the input."""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import RankDeficient
from ..model import Conv
from .activation import (invert_activation_partial, propagate_gradient_through_activation,
                         snap_activation_output)
from .constraints import build_gradient_constraints, build_weight_constraints
from .fc import fc_input_gradient, recover_fc_input
from .maps import build_contribution_maps, conv_input_gradient
from .solve import LayerSolution, solve_layer_input, stacked_rank

UNKNOWN_ORDERING = "channel,row,col"
SNAP_RTOL = 1e-8


@dataclass
class LayerDiagnostics:
    n_weight_constraints: int
    n_gradient_constraints: int
    n_unknowns: int
    matrix_rank: int
    residual_norm: float

    def to_dict(self):
        return {"n_weight_constraints": self.n_weight_constraints,
                "n_gradient_constraints": self.n_gradient_constraints,
                "n_unknowns": self.n_unknowns,
                "rank": self.matrix_rank,
                "residual": self.residual_norm}


@dataclass
class LayerSolveState:
    """What the attack knows about one layer's input after processing it."""

    layer: int
    kind: str
    X: np.ndarray
    dX: np.ndarray
    known_mask: np.ndarray
    diagnostics: LayerDiagnostics


@dataclass
class ReconstructionReport:
    input: np.ndarray
    layers: list
    fc_node: Optional[int]
    use_weight_constraints: bool
    arch_hash: str
    wall_time: float = 0.0
    unknown_ordering: str = UNKNOWN_ORDERING

    @property
    def input_gradient(self):
        return self.layers[-1].dX

    def to_dict(self, include_timing=False):
        out = {"arch_hash": self.arch_hash,
               "fc_node": self.fc_node,
               "unknown_ordering": self.unknown_ordering,
               "weight_constraints": self.use_weight_constraints,
               "input_shape": list(self.input.shape),
               "layers": [dict(layer=s.layer, kind=s.kind, **s.diagnostics.to_dict())
                          for s in self.layers]}
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class LayerStage:
    """Everything assembled for one conv layer before its solve."""

    layer: int
    geom: object
    d_out: np.ndarray
    known: np.ndarray
    maps: object
    gradient_rows: object
    weight_rows: object
    solution: Optional[LayerSolution] = field(default=None, repr=False)
    state: Optional[LayerSolveState] = field(default=None, repr=False)

    @property
    def n_unknowns(self):
        return self.geom.n_inputs

    def rank(self, rank_eps=None):
        return stacked_rank(self.gradient_rows, self.weight_rows, self.n_unknowns, rank_eps)

    def solve(self, rank_eps=None):
        try:
            self.solution = solve_layer_input(self.gradient_rows, self.weight_rows,
                                              self.n_unknowns, rank_eps)
        except RankDeficient as exc:
            raise RankDeficient(exc.rank, exc.n_unknowns, self.layer) from None
        return self.solution


def _assemble(arch, params, grads, conv_index, x_act, dx_act, use_weight_constraints):
    conv = arch.layers[conv_index]
    act = arch.layers[conv_index + 1]
    geom = conv.geom
    maps = build_contribution_maps(geom)
    d_out = propagate_gradient_through_activation(dx_act, x_act, act.kind, act.alpha)
    gradient_rows = build_gradient_constraints(d_out, grads[conv_index].weights, maps)
    weight_rows = None
    known = np.zeros(geom.output_shape, dtype=bool)
    if use_weight_constraints:
        o, known = invert_activation_partial(x_act, act.kind, act.alpha)
        weight_rows = build_weight_constraints(o, known, params[conv_index].weights,
                                               params[conv_index].bias, geom, maps)
    return LayerStage(conv_index, geom, d_out, known, maps, gradient_rows, weight_rows)


def iter_stages(arch, params, grads, use_weight_constraints=True, average=False,
                rank_eps=None, snap_rtol=SNAP_RTOL, node=None):
    """Walk the network from the dense layer to the input.

    Yields ``(dense-layer LayerSolveState, node used)`` first, then one
    :class:`LayerStage` per conv layer (output side first). A stage that the
    consumer has not solved is solved on resumption; its solution seeds the
    next stage.
    """
    params.check(arch)
    grads.check(arch)
    d = arch.dense_index
    dw, db = grads[d].weights, grads[d].bias
    x_fc, used = recover_fc_input(dw, db, node=node, average=average)
    dx_fc = fc_input_gradient(dw, db, params[d].weights)
    residual = float(np.linalg.norm(np.outer(db, x_fc) - dw))
    yield LayerSolveState(
        d, "dense", x_fc, dx_fc, np.ones(x_fc.shape, dtype=bool),
        LayerDiagnostics(0, dw.size, x_fc.size, x_fc.size, residual)), used

    blocks = arch.conv_blocks()
    if not blocks:
        return
    shape = arch.shapes[blocks[-1][1]]
    x_act, dx_act = x_fc.reshape(shape), dx_fc.reshape(shape)
    for conv_index, _ in reversed(blocks):
        stage = _assemble(arch, params, grads, conv_index, x_act, dx_act, use_weight_constraints)
        yield stage
        if stage.solution is None:
            stage.solve(rank_eps)
        geom = stage.geom
        x_in = stage.solution.x.reshape(geom.input_shape)
        dx_in = conv_input_gradient(stage.d_out, params[conv_index].weights, geom, stage.maps)
        stage.state = LayerSolveState(
            conv_index, "conv", x_in, dx_in, np.ones(x_in.shape, dtype=bool),
            LayerDiagnostics(
                0 if stage.weight_rows is None else stage.weight_rows.n_rows,
                stage.gradient_rows.n_rows, stage.n_unknowns,
                stage.solution.rank, stage.solution.residual))
        if conv_index > 0:
            prev = arch.layers[conv_index - 1]
            x_in = snap_activation_output(x_in, prev.kind, prev.alpha, snap_rtol)
        x_act, dx_act = x_in, dx_in


def run_attack(arch, params, grads, use_weight_constraints=True, average=False,
               rank_eps=None, snap_rtol=SNAP_RTOL, node=None):
    """Reconstruct the network input from one step's gradients.

    Propagates :class:`AllBiasGradientsZero`, :class:`RankDeficient` (with the
    conv layer index set) and :class:`InvalidActivationOutput`.
    """
    start = time.perf_counter()
    stages = iter_stages(arch, params, grads, use_weight_constraints, average,
                         rank_eps, snap_rtol, node)
    fc_state, fc_node = next(stages)
    conv_stages = []
    for stage in stages:
        stage.solve(rank_eps)
        conv_stages.append(stage)
    # stage.state is filled by the generator on resumption
    states = [fc_state] + [s.state for s in conv_stages]
    x = states[-1].X if conv_stages else fc_state.X.reshape(arch.input_shape)
    return ReconstructionReport(x, states, fc_node, use_weight_constraints, arch.hash,
                                time.perf_counter() - start)


def layer_stage(arch, params, grads, layer_index, use_weight_constraints=True,
                rank_eps=None, snap_rtol=SNAP_RTOL):
    """Assemble (but do not solve) the constraint systems of conv layer ``layer_index``."""
    if not 0 <= layer_index < len(arch.layers) or not isinstance(arch.layers[layer_index], Conv):
        raise IndexError(f"layer {layer_index} is not a conv layer")
    stages = iter_stages(arch, params, grads, use_weight_constraints,
                         rank_eps=rank_eps, snap_rtol=snap_rtol)
    next(stages)
    for stage in stages:
        if stage.layer == layer_index:
            stages.close()
            return stage
        stage.solve(rank_eps)
    raise IndexError(f"layer {layer_index} not reached")  # pragma: no cover
