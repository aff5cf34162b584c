import numpy as np
import pytest

from gradleak.errors import AllBiasGradientsZero, RankDeficient
from gradleak.model import GradientBundle, LayerParams, init_parameters, parse_architecture
from gradleak.rconv import layer_stage, recover_fc_input, run_attack
from gradleak.victim import backward, compute_gradients, forward, loss_at
from oracles import central_diff, default_alpha, make_arch, rel_err

# enough filters per layer for gradient rows alone to pin every input down
WIDE = [(12, 3, 1, 1), (8, 4, 2, 1)]


def _fixture(kind, seed=0, convs=WIDE, channels=2, size=6, bias=False, label=1):
    arch = make_arch(channels, size, convs, kind=kind, alpha=default_alpha(kind), bias=bias)
    params = init_parameters(arch, seed)
    x = np.random.default_rng(seed).uniform(0, 1, arch.input_shape)
    grads, trace = compute_gradients(arch, params, x, label)
    return arch, params, x, grads, trace


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "arctan", "softplus", "relu",
                                  "leaky_relu", "prelu", "elu"])
@pytest.mark.parametrize("weights", [True, False])
def test_round_trip_all_kinds(kind, weights, backend):
    arch, params, x, grads, _ = _fixture(kind, seed=3, bias=True)
    rep = run_attack(arch, params, grads, use_weight_constraints=weights)
    assert np.mean((rep.input - x) ** 2) <= 1e-16
    assert [s.layer for s in rep.layers] == [5, 2, 0]
    assert all(s.diagnostics.matrix_rank == s.diagnostics.n_unknowns for s in rep.layers)


def test_sigmoid_needs_weight_rows_when_filters_are_few():
    # 2 filters of 3x3 on 5x5: 18 gradient rows per channel < 25 unknowns per channel
    arch, params, x, grads, _ = _fixture("sigmoid", seed=1, convs=[(2, 3, 1, 1)], channels=1,
                                         size=5)
    rep = run_attack(arch, params, grads)
    assert np.mean((rep.input - x) ** 2) <= 1e-8
    with pytest.raises(RankDeficient) as info:
        run_attack(arch, params, grads, use_weight_constraints=False)
    assert info.value.layer == 0 and info.value.n_unknowns == 25


def test_dense_only_architecture(rng):
    arch = parse_architecture({"input": {"channels": 2, "height": 3, "width": 3},
                               "layers": [{"type": "flatten"}, {"type": "dense", "units": 4}]})
    params = init_parameters(arch, 0)
    x = rng.uniform(0, 1, arch.input_shape)
    grads, _ = compute_gradients(arch, params, x, 2)
    rep = run_attack(arch, params, grads)
    expect, _ = recover_fc_input(grads[1].weights, grads[1].bias)
    np.testing.assert_array_equal(rep.input, expect.reshape(2, 3, 3))
    assert len(rep.layers) == 1


def test_report_contents():
    arch, params, x, grads, _ = _fixture("relu", seed=2)
    rep = run_attack(arch, params, grads)
    doc = rep.to_dict()
    assert doc["unknown_ordering"] == "channel,row,col"
    assert doc["arch_hash"] == arch.hash and "wall_time" not in doc
    assert rep.to_dict(include_timing=True)["wall_time"] >= 0
    for entry in doc["layers"]:
        assert {"n_weight_constraints", "n_gradient_constraints", "rank", "residual"} <= set(entry)
    conv = doc["layers"][-1]
    assert conv["n_gradient_constraints"] == 12 * 9 * 2
    assert conv["n_unknowns"] == 72


def test_loss_agnostic(rng):
    arch, params, x, grads, trace = _fixture("tanh", seed=4)
    base = run_attack(arch, params, grads).input
    for _ in range(3):
        other = backward(arch, params, trace, rng.standard_normal(arch.n_classes))
        np.testing.assert_allclose(run_attack(arch, params, other).input, base, atol=1e-10)


def test_attack_gradient_chain_matches_differences():
    arch, params, x, grads, trace = _fixture("softplus", seed=5, label=0)
    rep = run_attack(arch, params, grads)
    by_layer = {s.layer: s for s in rep.layers}
    for conv_index in (0, 2):
        xi = trace.inputs[conv_index].copy()
        fd = central_diff(lambda: loss_at(arch, params, xi, 0, start=conv_index), xi)
        assert rel_err(by_layer[conv_index].dX, fd) <= 1e-4
    assert rep.input_gradient.shape == arch.input_shape


def test_all_zero_bias_gradients():
    arch, params, x, grads, trace = _fixture("relu")
    zero = backward(arch, params, trace, np.zeros(arch.n_classes))
    with pytest.raises(AllBiasGradientsZero):
        run_attack(arch, params, zero)


def test_rank_deficient_layer_is_reported():
    arch, params, x, grads, _ = _fixture("relu", convs=[(12, 3, 1, 1), (1, 4, 2, 1)])
    with pytest.raises(RankDeficient) as info:
        run_attack(arch, params, grads, use_weight_constraints=False)
    assert info.value.layer == 2
    assert info.value.rank < info.value.n_unknowns == 432


def test_hash_mismatch_rejected():
    arch, params, x, grads, _ = _fixture("relu")
    other = GradientBundle(grads.layers, "0" * 64)
    with pytest.raises(ValueError, match="different architecture"):
        run_attack(arch, params, other)


def test_layer_stage():
    arch, params, x, grads, trace = _fixture("sigmoid", seed=6)
    stage = layer_stage(arch, params, grads, 0)
    assert stage.layer == 0 and stage.solution is None
    assert stage.rank() == stage.n_unknowns == 72
    np.testing.assert_allclose(stage.solve().x, x.ravel(), atol=1e-10)
    for bad in (1, 5, 99, -1):
        with pytest.raises(IndexError):
            layer_stage(arch, params, grads, bad)


def test_conv_bias_enters_weight_rows_only():
    arch, params, x, grads, trace = _fixture("sigmoid", seed=7, convs=[(2, 3, 1, 1)],
                                             channels=1, size=5, bias=True)
    assert params[0].bias is not None
    rep = run_attack(arch, params, grads)
    assert np.max(np.abs(rep.input - x)) <= 1e-8
    # dropping the bias breaks the weight rows
    wrong = init_parameters(arch, 7)
    wrong.layers[0] = LayerParams(params[0].weights, params[0].bias + 0.05)
    bad = run_attack(arch, wrong, grads)
    assert np.max(np.abs(bad.input - x)) > 1e-4


def test_forward_of_reconstruction_reproduces_logits():
    arch, params, x, grads, trace = _fixture("elu", seed=8)
    rep = run_attack(arch, params, grads)
    np.testing.assert_allclose(forward(arch, params, rep.input).logits, trace.logits, atol=1e-12)
