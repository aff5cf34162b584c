import numpy as np
import pytest

from gradleak.errors import InvalidActivationOutput
from gradleak.rconv import (activation_derivative_from_output, invert_activation_partial,
                            propagate_gradient_through_activation, snap_activation_output)
from gradleak.tensor import ACTIVATIONS, activation_apply
from oracles import default_alpha, scalar_activation


def test_table_examples():
    assert activation_derivative_from_output(0.5, "sigmoid") == 0.25
    np.testing.assert_array_equal(activation_derivative_from_output([0.0, 0.7], "relu"), [0.0, 1.0])
    assert activation_derivative_from_output(-0.5, "elu", 1.0) == 0.5
    assert activation_derivative_from_output(0.6, "tanh") == pytest.approx(0.64)
    np.testing.assert_array_equal(activation_derivative_from_output([-1.0, 2.0], "leaky_relu"),
                                  [0.01, 1.0])
    np.testing.assert_array_equal(activation_derivative_from_output([-1.0, 2.0], "prelu", 0.3),
                                  [0.3, 1.0])


@pytest.mark.parametrize("kind", ACTIVATIONS)
def test_derivative_from_output_matches_scalar_differences(kind, rng):
    alpha = default_alpha(kind)
    o = rng.uniform(-5, 5, 400)
    o = o[np.abs(o) > 1e-4]
    x = activation_apply(o, kind, alpha)
    h = 1e-6
    fd = np.array([(scalar_activation(v + h, kind, alpha) - scalar_activation(v - h, kind, alpha))
                   / (2 * h) for v in o])
    np.testing.assert_allclose(activation_derivative_from_output(x, kind, alpha), fd, atol=1e-7)


def test_arctan_and_softplus_forms():
    # the "+" form for arctan and 1 - e^-X for softplus are the ones consistent with the forward maps
    o = np.array([-3.0, -0.2, 0.4, 2.5])
    np.testing.assert_allclose(activation_derivative_from_output(np.arctan(o), "arctan"),
                               1 / (1 + o ** 2), rtol=1e-12)
    np.testing.assert_allclose(activation_derivative_from_output(np.logaddexp(0, o), "softplus"),
                               1 / (1 + np.exp(-o)), rtol=1e-12)


@pytest.mark.parametrize("kind,x", [("relu", -0.1), ("sigmoid", 1.2), ("sigmoid", -0.1),
                                    ("tanh", 1.5), ("softplus", -1.0), ("arctan", 1.6),
                                    ("elu", -1.5), ("relu", np.nan)])
def test_domain_violation(kind, x):
    with pytest.raises(InvalidActivationOutput):
        activation_derivative_from_output(np.array([x]), kind, default_alpha(kind))


def test_propagate_examples(rng):
    np.testing.assert_array_equal(
        propagate_gradient_through_activation([5.0, 5.0], [0.0, 2.0], "relu"), [0.0, 5.0])
    for kind in ACTIVATIONS:
        alpha = default_alpha(kind)
        x = activation_apply(rng.uniform(-2, 2, 10), kind, alpha)
        assert not propagate_gradient_through_activation(np.zeros(10), x, kind, alpha).any()
    with pytest.raises(ValueError):
        propagate_gradient_through_activation(np.zeros(2), np.zeros(3), "relu")


def test_inversion_examples():
    o, known = invert_activation_partial(np.array([0.5]), "sigmoid")
    assert o[0] == 0.0 and known[0]
    o, known = invert_activation_partial(np.array([3.0, 0.0]), "relu")
    assert o[0] == 3.0 and np.isnan(o[1])
    assert known.tolist() == [True, False]
    o, known = invert_activation_partial(np.array([-0.01]), "leaky_relu")
    assert o[0] == pytest.approx(-1.0, rel=1e-14) and known[0]


@pytest.mark.parametrize("kind", ACTIVATIONS)
def test_inversion_round_trip(kind, rng):
    alpha = default_alpha(kind)
    o = rng.uniform(-4, 4, 1000)
    x = activation_apply(o, kind, alpha)
    rec, known = invert_activation_partial(x, kind, alpha)
    if kind == "relu":
        assert np.array_equal(known, x > 0)
    else:
        assert known.all()
    np.testing.assert_allclose(rec[known], o[known], rtol=1e-9, atol=1e-9)


def test_inversion_marks_saturated_outputs_unknown():
    x = np.tanh(np.array([0.3, 25.0, -25.0]))
    o, known = invert_activation_partial(x, "tanh")
    assert known.tolist() == [True, False, False]
    assert o[0] == pytest.approx(0.3)
    _, known = invert_activation_partial(np.array([1.0, 0.0]), "sigmoid")
    assert not known.any()


def test_prelu_zero_alpha_behaves_like_relu():
    x = np.array([0.0, 2.0])
    _, known = invert_activation_partial(x, "prelu", 0.0)
    assert known.tolist() == [False, True]
    np.testing.assert_array_equal(activation_derivative_from_output(x, "prelu", 0.0), [0.0, 1.0])


def test_snap():
    x = snap_activation_output(np.array([1e-13, -1e-13, 0.5, -1e-3]), "relu")
    assert x.tolist()[:3] == [0.0, 0.0, 0.5] and x[3] == -1e-3
    x = snap_activation_output(np.array([1.0 + 1e-12, -1.0 - 1e-12, 0.2]), "tanh")
    assert x.tolist() == [1.0, -1.0, 0.2]
    assert snap_activation_output(np.array([]), "relu").size == 0
