"""Per-layer feasibility audit: constraint counts against unknowns, optionally checked by rank.

A conv layer's input ``X`` (N*H*H unknowns) is exposed by two row families:
forward rows, one per output whose pre-activation can be recovered
(``F*outH^2`` when the activation is invertible, fewer for ReLU), and gradient
rows, one per weight (``K^2*N*F``). The layer is vulnerable when the rows can
reach full column rank.
"""

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from .errors import RankDeficient
from .model import Conv
from .rconv.pipeline import iter_stages, layer_stage
from .tensor import check_activation

VULNERABLE = "vulnerable"
SAFE = "safe"
UNDETERMINED = "undetermined"

COUNTING_NOTE = (
    "Counts are enumerated from the layer itself: |B| = K^2*N*F weight entries, "
    "|A| = F*outH^2 output elements. The closed forms (outH)*F and K^2*F omit the "
    "spatial square and the input-channel factor and undercount both families.")


class WeightCount(NamedTuple):
    low: int
    high: int
    out_size: int


def count_gradient_constraints(geom):
    return geom.filters * geom.in_channels * geom.kernel ** 2


def _relu_like(kind, alpha):
    return kind == "relu" or (kind == "prelu" and alpha == 0.0)


def count_weight_constraints(geom, kind, alpha=None):
    """Range of forward-pass rows; ``kind=None`` stands for a non-invertible activation."""
    out = geom.out_size
    if kind is None:
        return WeightCount(0, 0, out)
    alpha = check_activation(kind, alpha)
    full = geom.filters * out * out
    if _relu_like(kind, alpha):
        return WeightCount(0, full, out)
    return WeightCount(full, full, out)


def verdict(n_unknowns, weight_low, weight_high, gradient, empirical_rank=None):
    if weight_high + gradient < n_unknowns:
        return SAFE
    if weight_low + gradient >= n_unknowns:
        if empirical_rank is not None and empirical_rank < n_unknowns:
            return UNDETERMINED
        return VULNERABLE
    return UNDETERMINED


@dataclass
class LayerAudit:
    layer: int
    n_unknowns: int
    weight_constraints: tuple
    gradient_constraints: int
    activation: Optional[str]
    out_size: int
    verdict: str
    min_filters_gradient_only: int
    empirical_rank: Optional[int] = None

    def to_dict(self):
        d = asdict(self)
        d["weight_constraints"] = list(self.weight_constraints)
        return d


def audit_layer(geom, kind, alpha=None, layer=None, n_known=None, empirical_rank=None):
    """Audit one conv layer.

    ``n_known`` pins the forward-row count to an observed value (ReLU layers
    on a concrete sample); ``empirical_rank`` downgrades a counting-based
    "vulnerable" to "undetermined" if the assembled matrix falls short.
    """
    count = count_weight_constraints(geom, kind, alpha)
    low, high = (count.low, count.high) if n_known is None else (n_known, n_known)
    grad = count_gradient_constraints(geom)
    n = geom.n_inputs
    return LayerAudit(
        layer=layer, n_unknowns=n, weight_constraints=(low, high), gradient_constraints=grad,
        activation=kind, out_size=count.out_size,
        verdict=verdict(n, low, high, grad, empirical_rank),
        min_filters_gradient_only=math.ceil(geom.in_size ** 2 / geom.kernel ** 2),
        empirical_rank=empirical_rank)


def audit_architecture(arch, params=None, grads=None, use_weight_constraints=True,
                       rank_eps=None):
    """Audit every conv layer, input side first.

    Counting only unless both ``params`` and ``grads`` are given, in which case
    each layer's stacked matrix is assembled and its rank measured. Layers
    below a rank-deficient layer cannot be assembled and keep counting-only
    verdicts.
    """
    audits = {}
    for conv_index, act_index in arch.conv_blocks():
        act = arch.layers[act_index]
        audits[conv_index] = audit_layer(arch.layers[conv_index].geom, act.kind, act.alpha,
                                         layer=conv_index)
    if params is not None and grads is not None:
        stages = iter_stages(arch, params, grads, use_weight_constraints, rank_eps=rank_eps)
        next(stages)
        for stage in stages:
            act = arch.layers[stage.layer + 1]
            n_known = stage.weight_rows.n_rows if stage.weight_rows is not None else 0
            rank = stage.rank(rank_eps)
            audits[stage.layer] = audit_layer(stage.geom, act.kind, act.alpha, stage.layer,
                                              n_known=n_known, empirical_rank=rank)
            if rank < stage.n_unknowns:
                stages.close()
                break
            try:
                stage.solve(rank_eps)
            except RankDeficient:  # pragma: no cover - rank already checked
                break
    return [audits[i] for i in sorted(audits)]


def empirical_rank(arch, params, grads, layer_index, use_weight_constraints=True, rank_eps=None):
    if not 0 <= layer_index < len(arch.layers) or not isinstance(arch.layers[layer_index], Conv):
        raise IndexError(f"layer {layer_index} is not a conv layer")
    stage = layer_stage(arch, params, grads, layer_index, use_weight_constraints, rank_eps)
    return stage.rank(rank_eps)


def _cells(a):
    low, high = a.weight_constraints
    weight = str(low) if low == high else f"{low}..{high}"
    rank = "-" if a.empirical_rank is None else str(a.empirical_rank)
    return [str(a.layer), str(a.n_unknowns), weight, str(a.gradient_constraints), rank,
            a.verdict]


def format_table(audits):
    header = ["layer", "|X|", "|A|", "|B|", "rank", "verdict"]
    rows = [header] + [_cells(a) for a in audits]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("")
    lines.append("note: " + COUNTING_NOTE)
    return "\n".join(lines) + "\n"


def audits_to_json(audits):
    doc = {"layers": [a.to_dict() for a in audits], "note": COUNTING_NOTE}
    return json.dumps(doc, indent=2) + "\n"
