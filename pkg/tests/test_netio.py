import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polytraverse import (Normalization, ParseError, forward, load_network, make_network,
                          random_network, read_network, save_network, write_network)

IDENTITY_JSON = {"input_dim": 2,
                 "hidden": [{"weights": [[1, 0], [0, 1]], "bias": [0, 0]}],
                 "output": {"weights": [[1, 1]], "bias": [0]}}

NNET = """// two inputs, one hidden layer of two, one output
2,2,1,2,
2,2,1,
0,
-1.0,-1.0,
1.0,1.0,
0.0,0.0,0.0,
1.0,1.0,1.0,
1.0,0.0,
0.0,1.0,
0.0,
0.0,
1.0,1.0,
0.0,
"""


def test_identity_json(identity_net):
    net = load_network(json.dumps(IDENTITY_JSON))
    assert net == identity_net
    assert net.widths == (2,) and net.output_dim == 1


def test_identity_nnet(identity_net):
    net = load_network(NNET, "nnet")
    assert net.hidden == identity_net.hidden and net.output == identity_net.output
    np.testing.assert_array_equal(net.input_bounds[0], [-1, -1])


def test_nnet_round_trip_is_bit_exact():
    net = load_network(NNET, "nnet")
    again = load_network(save_network(net, "nnet"), "nnet")
    assert again == net


def test_nnet_header_mismatch():
    bad = NNET.replace("2,2,1,\n", "2,3,1,\n", 1)
    with pytest.raises(ParseError) as exc:
        load_network(bad, "nnet")
    assert exc.value.line is not None


def test_nnet_truncated_weights():
    lines = NNET.splitlines()
    with pytest.raises(ParseError):
        load_network("\n".join(lines[:-3]), "nnet")


def test_nnet_non_numeric():
    with pytest.raises(ParseError):
        load_network(NNET.replace("1.0,0.0,\n", "1.0,abc,\n", 1), "nnet")


@pytest.mark.parametrize("text", ["", "{", "[]", '{"hidden": []}', json.dumps({**IDENTITY_JSON, "input_dim": 3})])
def test_malformed_json(text):
    with pytest.raises(ParseError):
        load_network(text)


def test_unknown_format():
    with pytest.raises(ParseError):
        load_network("x", "onnx")


def test_file_helpers_pick_format_from_suffix(tmp_path, identity_net):
    for name in ("net.json", "net.nnet"):
        path = tmp_path / name
        write_network(identity_net, path)
        back = read_network(path)
        assert back.hidden == identity_net.hidden and back.output == identity_net.output


def test_normalization_survives_both_formats():
    norm = Normalization(np.array([0.5, -1.0]), np.array([2.0, 3.0]))
    net = make_network([([[1, 2], [3, -4]], [0.1, 0.2])], ([[1, -1]], [0.3]), normalization=norm)
    for fmt in ("json", "nnet"):
        back = load_network(save_network(net, fmt), fmt)
        assert back.normalization == norm
        x = np.array([0.3, -0.2])
        assert forward(back, x)[0] == forward(net, x)[0]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(1, 3),
       st.integers(0, 2**31))
def test_json_nnet_json_is_bit_exact(P, widths, Q, seed):
    net = random_network(np.random.default_rng(seed), P, widths, output_dim=Q)
    via_nnet = load_network(save_network(net, "nnet"), "nnet")
    for a, b in zip((*net.hidden, net.output), (*via_nnet.hidden, via_nnet.output)):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
    back = load_network(save_network(via_nnet, "json"))
    assert back == via_nnet
    assert load_network(save_network(net)) == net
