import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polytraverse import (ActivationCode, InvalidInputError, Normalization, encode, forward,
                          level_coefficients, local_linear_model, make_network, random_network)
from polytraverse.network import forward_batch, next_level, zero_mask


def test_identity_forward(identity_net):
    assert forward(identity_net, [0.5, -0.5])[0] == pytest.approx(0.5)
    assert forward(identity_net, [1, 1])[0] == pytest.approx(2.0)


def test_shapes(identity_net):
    assert identity_net.input_dim == 2
    assert identity_net.output_dim == 1
    assert identity_net.depth == 1
    assert identity_net.widths == (2,)


def test_forward_rejects_wrong_dimension(identity_net):
    with pytest.raises(InvalidInputError):
        forward(identity_net, [1.0, 2.0, 3.0])


def test_inconsistent_layers_are_rejected():
    with pytest.raises(InvalidInputError):
        make_network([([[1, 0]], [0, 0])], ([[1]], [0]))
    with pytest.raises(InvalidInputError):
        make_network([([[1, 0]], [0])], ([[1, 1]], [0]))


def test_encode_identity(identity_net):
    assert str(encode(identity_net, [0.5, -0.5])) == "10"


def test_encode_two_level(two_level_net):
    assert str(encode(two_level_net, [0.7, 0])) == "1|1"
    assert str(encode(two_level_net, [0.2, 0])) == "1|0"
    assert str(encode(two_level_net, [-1, 0])) == "0|0"
    assert str(encode(two_level_net, [0.7, 0], up_to_level=1)) == "1"


def test_tie_gives_bit_one(identity_net):
    assert encode(identity_net, [0.0, 3.0]).level(1)[0] == 1
    assert encode(identity_net, [0.0, -3.0]).level(1)[0] == 1


def test_level_one_coefficients_are_raw_weights():
    rng = np.random.default_rng(0)
    net = random_network(rng, 3, [4, 2])
    lc = level_coefficients(net, encode(net, rng.normal(size=3)), 1)
    np.testing.assert_array_equal(lc.effective_weights, net.hidden[0].weights)
    np.testing.assert_array_equal(lc.effective_bias, net.hidden[0].bias)


def test_level_two_coefficients(two_level_net):
    lc = level_coefficients(two_level_net, ActivationCode.parse("1"), 2)
    np.testing.assert_array_equal(lc.effective_weights, [[1, 0]])
    np.testing.assert_array_equal(lc.effective_bias, [-0.5])
    dead = level_coefficients(two_level_net, ActivationCode.parse("0"), 2)
    np.testing.assert_array_equal(dead.effective_weights, [[0, 0]])
    np.testing.assert_array_equal(dead.effective_bias, [-0.5])


def test_level_coefficients_need_prefix(two_level_net):
    with pytest.raises(InvalidInputError):
        level_coefficients(two_level_net, ActivationCode.parse(""), 2)


def test_local_model_identity(identity_net):
    full = local_linear_model(identity_net, ActivationCode.parse("11"))
    np.testing.assert_array_equal(full.weights, [[1, 1]])
    np.testing.assert_array_equal(full.bias, [0])
    dead = local_linear_model(identity_net, ActivationCode.parse("00"))
    np.testing.assert_array_equal(dead.weights, [[0, 0]])
    np.testing.assert_array_equal(dead.bias, [0])


def test_local_model_needs_full_code(two_level_net):
    with pytest.raises(InvalidInputError):
        local_linear_model(two_level_net, ActivationCode.parse("1"))


def test_activation_code_text_round_trip():
    code = ActivationCode.parse("101|01|1")
    assert str(code) == "101|01|1"
    assert len(code) == 3
    assert str(code.prefix(2)) == "101|01"
    assert str(code.flip(0)) == "101|01|0"
    assert str(code.flip(1, level=1)) == "111|01|1"
    assert str(code.prefix(1).extend([0, 0])) == "101|00"
    assert hash(code) == hash(ActivationCode.parse("101|01|1"))


def test_normalization_is_folded_into_first_layer():
    norm = Normalization(np.array([1.0, -2.0]), np.array([2.0, 0.5]))
    net = make_network([([[1, -1], [0.5, 2]], [0.1, -0.3])], ([[1, 1]], [0]), normalization=norm)
    x = np.array([0.3, 0.9])
    W, b = net.first_layer
    np.testing.assert_allclose(W @ x + b, net.hidden[0].weights @ ((x - norm.mean) / norm.scale) + net.hidden[0].bias)
    assert forward(net, x) == pytest.approx(local_linear_model(net, encode(net, x))(x))


def test_forward_batch_matches_rows():
    rng = np.random.default_rng(1)
    net = random_network(rng, 4, [5, 3], output_dim=2)
    X = rng.normal(size=(50, 4))
    np.testing.assert_allclose(forward_batch(net, X), np.stack([forward(net, x) for x in X]), atol=1e-12)


# ---- properties ------------------------------------------------------------

net_shapes = st.tuples(st.integers(1, 5), st.lists(st.integers(1, 6), min_size=1, max_size=4),
                       st.integers(1, 3), st.integers(0, 2**31))


@settings(max_examples=200, deadline=None)
@given(net_shapes)
def test_local_model_reproduces_forward(shape):
    P, widths, Q, seed = shape
    rng = np.random.default_rng(seed)
    net = random_network(rng, P, widths, output_dim=Q)
    for x in rng.normal(0, 2, size=(5, P)):
        f = forward(net, x)
        g = local_linear_model(net, encode(net, x))(x)
        assert np.all(np.abs(f - g) <= 1e-9 * (1 + np.abs(f)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31))
def test_mask_is_idempotent(M, P, seed):
    rng = np.random.default_rng(seed)
    W, b = rng.normal(size=(M, P)), rng.normal(size=M)
    bits = rng.integers(0, 2, M)
    once = zero_mask(W, b, bits)
    twice = zero_mask(*once, bits)
    np.testing.assert_array_equal(once[0], twice[0])
    np.testing.assert_array_equal(once[1], twice[1])


@settings(max_examples=100, deadline=None)
@given(net_shapes)
def test_recursion_matches_pre_activations(shape):
    """Effective coefficients of every level reproduce the real pre-activations."""
    P, widths, Q, seed = shape
    rng = np.random.default_rng(seed)
    net = random_network(rng, P, widths, output_dim=Q)
    x = rng.normal(size=P)
    code = encode(net, x)
    h = x
    W, b = net.first_layer
    for level, layer in enumerate(net.hidden, start=1):
        pre = layer.weights @ h + layer.bias
        np.testing.assert_allclose(W @ x + b, pre, atol=1e-9 * (1 + np.abs(pre).max()))
        h = np.maximum(pre, 0.0)
        W, b = next_level(net, level, W, b, code.level(level))
