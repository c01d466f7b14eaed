import numpy as np
import pytest
from hypothesis import given, strategies as st

from parr.nn import (CheckpointError, ContractError, NetSpec, NumericalFault, OptimizerState, ParamSet,
                     backward, dump_optimizer, dump_params, forward, gradient_check, init_params,
                     leaky_relu, load_optimizer, load_params, optimizer_step, predict)

GRAD_MATRIX = [
    NetSpec((3, 1)),
    NetSpec((2, 3, 1)),
    NetSpec((4, 8, 8, 3)),
    NetSpec((5, 6, 4, 2), activation_slope=0.2, final_layer_linear=False),
    NetSpec((22, 16, 16, 4)),
    NetSpec((8, 16, 16, 8), activation_slope=0.05),
]


def test_netspec_validation():
    with pytest.raises(ContractError):
        NetSpec((3,))
    with pytest.raises(ContractError):
        NetSpec((3, 0, 1))
    with pytest.raises(ContractError):
        NetSpec((3, 1), activation_slope=1.0)


def test_init_deterministic_and_seed_sensitive():
    spec = NetSpec((2, 3, 1))
    a, b = init_params(spec, 7), init_params(spec, 7)
    assert a.checksum() == b.checksum()
    assert any(np.any(x != y) for x, y in zip(a.weights, init_params(spec, 8).weights))
    assert all(np.all(bias == 0.0) for bias in a.biases)
    for (fan_out, fan_in), w in zip(spec.shapes(), a.weights):
        assert np.all(np.abs(w) <= np.sqrt(6.0 / fan_in))


def test_forward_zero_weights_gives_zero():
    spec = NetSpec((3, 4, 2))
    p = init_params(spec, 0)
    for w in p.weights:
        w[:] = 0.0
    out, _ = forward(p, spec, np.array([1.0, -2.0, 3.0]))
    assert np.all(out == 0.0)


def test_forward_identity_layer():
    spec = NetSpec((3, 3))
    p = ParamSet([np.eye(3)], [np.zeros(3)])
    v = np.array([0.5, -1.5, 2.0])
    out, _ = forward(p, spec, v)
    assert np.array_equal(out, v)


def test_forward_hand_computed():
    spec = NetSpec((2, 2, 1), activation_slope=0.01)
    p = ParamSet([np.array([[1.0, -2.0], [0.5, 1.0]]), np.array([[2.0, -1.0]])],
                 [np.array([0.1, -0.2]), np.array([0.3])])
    # z1 = (-2.9, 2.3) -> a1 = (-0.029, 2.3); y = 2*(-0.029) - 2.3 + 0.3
    out, _ = forward(p, spec, np.array([1.0, 2.0]))
    assert abs(out[0] - (-2.058)) < 1e-12


def test_forward_batch_matches_rows_and_predict():
    spec = NetSpec((4, 8, 3))
    p = init_params(spec, 1)
    x = np.random.default_rng(0).normal(size=(5, 4))
    out, _ = forward(p, spec, x)
    assert np.array_equal(out, predict(p, spec, x))
    for i in range(5):
        np.testing.assert_allclose(forward(p, spec, x[i])[0], out[i], rtol=0, atol=1e-14)


def test_forward_rejects_wrong_width():
    spec = NetSpec((3, 2))
    with pytest.raises(ContractError):
        forward(init_params(spec, 0), spec, np.zeros(4))


def test_backward_zero_output_grad():
    spec = NetSpec((3, 5, 2))
    p = init_params(spec, 2)
    _, cache = forward(p, spec, np.ones(3))
    g = backward(p, spec, cache, np.zeros(2))
    assert all(np.all(a == 0.0) for a in g.arrays())


def test_backward_linear_in_output_grad():
    spec = NetSpec((3, 5, 2))
    p = init_params(spec, 2)
    _, cache = forward(p, spec, np.array([0.3, -1.0, 2.0]))
    c = np.array([0.7, -1.3])
    g1, g2 = backward(p, spec, cache, c), backward(p, spec, cache, 2 * c)
    for a, b in zip(g1.arrays(), g2.arrays()):
        np.testing.assert_array_equal(2 * a, b)


def test_backward_rejects_mismatched_cache():
    spec = NetSpec((3, 5, 2))
    p = init_params(spec, 2)
    _, cache = forward(p, spec, np.ones(3))
    with pytest.raises(ContractError):
        backward(p, spec, cache, np.zeros(3))


def test_backward_matches_finite_differences_random_3_layer():
    assert gradient_check(NetSpec((4, 6, 5, 3)), seed=11) < 1e-6


@pytest.mark.parametrize("spec", GRAD_MATRIX, ids=lambda s: "-".join(map(str, s.layer_sizes)))
def test_gradient_check_matrix(spec):
    assert gradient_check(spec, seed=0, tolerance=1e-4) < 1e-4


def test_gradient_check_linear_exact_and_deterministic():
    assert gradient_check(NetSpec((5, 3)), seed=4) < 1e-8
    spec = NetSpec((3, 4, 2))
    assert gradient_check(spec, 9) == gradient_check(spec, 9)


def test_optimizer_zero_grad_keeps_params():
    spec = NetSpec((2, 3, 1))
    p = init_params(spec, 0)
    before = p.copy()
    st_ = OptimizerState.for_params(p)
    optimizer_step(p, p.zeros_like(), st_)
    assert st_.step == 1
    assert p.max_abs_diff(before) == 0.0


def test_optimizer_descends_scalar():
    p = ParamSet([np.array([[1.0]])], [np.array([0.0])])
    st_ = OptimizerState.for_params(p)
    g = ParamSet([np.array([[0.5]])], [np.array([0.0])])
    optimizer_step(p, g, st_)
    assert p.weights[0][0, 0] < 1.0


def test_optimizer_quadratic_converges():
    # minimize (w - 3)^2 from w = 0; closed-form optimum w = 3
    p = ParamSet([np.array([[0.0]])], [np.array([0.0])])
    st_ = OptimizerState.for_params(p, lr=0.1)
    for _ in range(200):
        w = p.weights[0][0, 0]
        optimizer_step(p, ParamSet([np.array([[2 * (w - 3.0)]])], [np.array([0.0])]), st_)
    assert abs(p.weights[0][0, 0] - 3.0) < 1e-2


def test_optimizer_refuses_non_finite():
    p = ParamSet([np.array([[1.0]])], [np.array([0.0])])
    st_ = OptimizerState.for_params(p)
    with pytest.raises(NumericalFault):
        optimizer_step(p, ParamSet([np.array([[np.nan]])], [np.array([0.0])]), st_)
    assert st_.step == 0 and p.weights[0][0, 0] == 1.0


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50), st.floats(0.001, 0.999))
def test_leaky_relu_definition_and_monotone(xs, slope):
    x = np.sort(np.array(xs))
    y = leaky_relu(x, slope)
    np.testing.assert_array_equal(y, np.where(x >= 0, x, slope * x))
    assert np.all(np.diff(y) >= 0)


def test_param_roundtrip_and_corruption():
    spec = NetSpec((3, 4, 2), activation_slope=0.02)
    p = init_params(spec, 5)
    blob = dump_params(p, spec)
    q, spec2 = load_params(blob)
    assert spec2 == spec and q.checksum() == p.checksum()
    with pytest.raises(CheckpointError):
        load_params(b"XXXXXXXX" + blob[8:])
    with pytest.raises(CheckpointError):
        load_params(blob[:-8])
    with pytest.raises(CheckpointError):
        load_params(blob[:8] + (99).to_bytes(4, "little") + blob[12:])


def test_optimizer_roundtrip():
    spec = NetSpec((3, 4, 2))
    p = init_params(spec, 5)
    st_ = OptimizerState.for_params(p, lr=0.01)
    optimizer_step(p, init_params(spec, 6), st_)
    st2 = load_optimizer(dump_optimizer(st_, spec))
    assert st2.step == 1 and st2.lr == 0.01
    assert st2.m.checksum() == st_.m.checksum() and st2.v.checksum() == st_.v.checksum()
