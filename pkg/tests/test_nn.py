import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from _helpers import fd_gradient, max_rel_error
from augairl.nn import (Adam, CategoricalPolicyOutput, MlpNet, MlpSpec, backward, categorical_entropy,
                        categorical_kl, categorical_logprob, forward, get_flat_params, log_softmax,
                        set_flat_params, softmax)

finite = st.floats(-30, 30, allow_nan=False)
logit_vectors = arrays(np.float64, 5, elements=finite)


def seeded_net(spec, seed=0, scale=1.0):
    return MlpNet(spec, scale * np.random.default_rng(seed).normal(size=spec.n_params))


# -- spec -------------------------------------------------------------------

def test_spec_counts_parameters():
    spec = MlpSpec(4, (3,), 2)
    assert spec.n_params == 4 * 3 + 3 + 3 * 2 + 2
    assert spec.layer_dims == [(4, 3), (3, 2)]


@pytest.mark.parametrize("kwargs", [dict(input_dim=0, hidden_dims=(3,), output_dim=1),
                                    dict(input_dim=2, hidden_dims=(), output_dim=1),
                                    dict(input_dim=2, hidden_dims=(3,), output_dim=1,
                                         hidden_activation="sigmoid")])
def test_spec_rejects_invalid_shapes(kwargs):
    with pytest.raises(ValueError):
        MlpSpec(**kwargs)


def test_glorot_initialisation_bounds():
    spec = MlpSpec(44, (100, 100), 5)
    net = MlpNet.initialize(spec, np.random.default_rng(0), last_layer_scale=0.01)
    for k, (fi, fo) in enumerate(spec.layer_dims):
        limit = np.sqrt(6.0 / (fi + fo)) * (0.01 if k == 2 else 1.0)
        assert np.all(np.abs(net.weights[k]) <= limit)
        assert np.all(net.biases[k] == 0)


# -- forward ------------------------------------------------------------------

def test_zero_weights_output_equals_bias():
    spec = MlpSpec(3, (4,), 2)
    net = MlpNet(spec)
    net.biases[-1][...] = [0.25, -1.5]
    out = forward(net, np.array([3.0, -2.0, 7.0]))
    np.testing.assert_array_equal(out, [0.25, -1.5])


def test_unit_tanh_chain_maps_zero_to_zero():
    net = MlpNet(MlpSpec(1, (1,), 1), np.array([1.0, 0.0, 1.0, 0.0]))
    assert forward(net, np.array([0.0]))[0] == 0.0


def test_forward_matches_high_precision_reference():
    # 50-digit evaluation of the same 4-3-2 tanh network (parameters ~ N(0,1), seed 1)
    net = seeded_net(MlpSpec(4, (3,), 2), seed=1)
    out = forward(net, np.array([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out, [-0.62861915628451769096, 0.82650263992418792182], rtol=1e-14)


def test_forward_rejects_wrong_input_width():
    net = seeded_net(MlpSpec(4, (3,), 2))
    with pytest.raises(ValueError):
        net.forward(np.zeros(5))


def test_forward_is_deterministic_and_batch_consistent(rng):
    net = seeded_net(MlpSpec(6, (8, 8), 3, "relu"))
    x = rng.normal(size=(10, 6))
    batch = net.forward(x)
    rows = np.vstack([net.forward(r) for r in x])
    np.testing.assert_array_equal(batch, net.forward(x))
    np.testing.assert_allclose(batch, rows, rtol=1e-13, atol=1e-13)


# -- backward -----------------------------------------------------------------

def test_zero_output_grad_gives_zero_gradients(rng):
    net = seeded_net(MlpSpec(4, (5,), 2))
    g, gx = backward(net, rng.normal(size=4), np.zeros(2))
    assert not g.any() and not gx.any()


def test_linear_layer_weight_gradient_is_outer_product():
    # a 1-unit relu hidden layer held in its linear region isolates the output layer
    spec = MlpSpec(3, (2,), 2, "relu")
    net = seeded_net(spec, seed=3)
    x = np.array([0.5, -1.0, 2.0])
    _, cache = net.forward(x, return_cache=True)
    h = cache[-1][0][0]
    gout = np.array([0.7, -0.2])
    grad, _ = net.backward(cache, gout)
    w_last = grad[spec.layer_dims[0][0] * 2 + 2:][:4].reshape(2, 2)
    np.testing.assert_allclose(w_last, np.outer(h, gout), rtol=1e-15)


@pytest.mark.parametrize("spec", [MlpSpec(6, (8, 8), 1, "tanh"), MlpSpec(6, (8, 8), 1, "relu"),
                                  MlpSpec(49, (16, 16), 1, "relu"), MlpSpec(44, (12, 12), 5, "tanh")])
def test_param_and_input_gradients_match_finite_differences(spec):
    rng = np.random.default_rng(7)
    net = seeded_net(spec, seed=5, scale=0.5)
    x = rng.normal(size=(3, spec.input_dim))
    gout = rng.normal(size=(3, spec.output_dim))
    _, cache = net.forward(x, return_cache=True)
    grad, gx = net.backward(cache, gout)
    p0 = net.get_flat_params()

    def f_params(p):
        net.set_flat_params(p)
        return float(np.sum(net.forward(x) * gout))

    num = fd_gradient(f_params, p0)
    net.set_flat_params(p0)
    assert max_rel_error(grad, num, floor=1e-6) < 1e-4
    num_x = fd_gradient(lambda v: float(np.sum(net.forward(v.reshape(x.shape)) * gout)), x.ravel())
    assert max_rel_error(gx.ravel(), num_x, floor=1e-6) < 1e-4


def test_jvp_matches_directional_finite_difference(rng):
    net = seeded_net(MlpSpec(5, (7, 7), 3), seed=2, scale=0.5)
    x = rng.normal(size=(4, 5))
    d = rng.normal(size=net.n_params)
    out, dout = net.jvp(x, d)
    p0 = net.get_flat_params()
    eps = 1e-6
    net.set_flat_params(p0 + eps * d)
    hi = net.forward(x)
    net.set_flat_params(p0 - eps * d)
    lo = net.forward(x)
    net.set_flat_params(p0)
    np.testing.assert_allclose(out, net.forward(x), rtol=1e-15)
    np.testing.assert_allclose(dout, (hi - lo) / (2 * eps), rtol=1e-6, atol=1e-9)


# -- flat parameters ----------------------------------------------------------------

def test_flat_round_trip_is_bit_exact(rng):
    net = seeded_net(MlpSpec(6, (8,), 3))
    x = rng.normal(size=(100, 6))
    before = net.forward(x)
    other = MlpNet(net.spec)
    set_flat_params(other, get_flat_params(net))
    np.testing.assert_array_equal(other.forward(x), before)
    np.testing.assert_array_equal(other.get_flat_params(), net.get_flat_params())


def test_all_zero_parameters_propagate_bias_only():
    spec = MlpSpec(3, (4,), 2)
    net = seeded_net(spec)
    net.set_flat_params(np.zeros(spec.n_params))
    np.testing.assert_array_equal(net.forward(np.ones(3)), [[0.0, 0.0]])


def test_set_flat_params_rejects_wrong_length():
    net = seeded_net(MlpSpec(3, (4,), 2))
    with pytest.raises(ValueError):
        net.set_flat_params(np.zeros(net.n_params + 1))


def test_documented_parameter_ordering():
    # layer-major; weights (fan_in, fan_out) row-major, then bias
    spec = MlpSpec(3, (4,), 2)
    net = MlpNet(spec)
    idx = 0
    for layer, (fi, fo) in enumerate(spec.layer_dims):
        for i in range(fi):
            for j in range(fo):
                p = np.zeros(spec.n_params)
                p[idx] = 1.0
                net.set_flat_params(p)
                assert net.weights[layer][i, j] == 1.0
                assert sum(np.count_nonzero(w) for w in net.weights) == 1
                assert sum(np.count_nonzero(b) for b in net.biases) == 0
                idx += 1
        for j in range(fo):
            p = np.zeros(spec.n_params)
            p[idx] = 1.0
            net.set_flat_params(p)
            assert net.biases[layer][j] == 1.0
            idx += 1
    assert idx == spec.n_params


# -- categorical statistics -------------------------------------------------------

def test_uniform_logprob():
    assert categorical_logprob(np.zeros(5), 3) == pytest.approx(np.log(0.2), abs=1e-15)


def test_peaked_logprob_matches_high_precision_reference():
    # -log(1 + 4 e^-10) to 20 digits
    assert categorical_logprob(np.array([10.0, 0, 0, 0, 0]), 0) == pytest.approx(
        -1.8158323181698094252e-4, rel=1e-12)


@given(logit_vectors, st.integers(0, 4), st.floats(-1e3, 1e3))
def test_logprob_shift_invariance(logits, action, c):
    assert abs(categorical_logprob(logits + c, action) - categorical_logprob(logits, action)) < 1e-12 * max(1, abs(c))


@given(logit_vectors)
def test_softmax_is_a_distribution(logits):
    p = softmax(logits)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p > 0)
    np.testing.assert_allclose(np.log(p), log_softmax(logits), atol=1e-12)


def test_policy_output_probs():
    out = CategoricalPolicyOutput(np.array([1.0, 2.0, 0.0, -1.0, 0.5]))
    assert out.probs.shape == (5,)
    assert abs(out.probs.sum() - 1) < 1e-12


def test_kl_identical_is_zero():
    lg = np.array([0.3, -1.0, 2.0, 0.0, 0.1])
    assert categorical_kl(lg, lg) == 0.0


def test_kl_matches_direct_summation_reference():
    q = np.array([0.97, 0.0075, 0.0075, 0.0075, 0.0075])
    # 50-digit sum of 0.2 * log(0.2 / q_i)
    assert categorical_kl(np.zeros(5), np.log(q)) == pytest.approx(2.310935735814739171, rel=1e-13)


def test_kl_nonnegative_on_random_pairs():
    rng = np.random.default_rng(0)
    p = rng.normal(scale=3, size=(1000, 5))
    q = rng.normal(scale=3, size=(1000, 5))
    assert np.all(categorical_kl(p, q) >= 0)


@given(logit_vectors, logit_vectors)
def test_kl_gibbs_inequality(p, q):
    assert categorical_kl(p, q) >= 0


def test_entropy_limits():
    assert categorical_entropy(np.zeros(5)) == pytest.approx(np.log(5), abs=1e-15)
    assert categorical_entropy(np.array([50.0, 0, 0, 0, 0])) < 1e-9


def test_entropy_matches_high_precision_reference():
    lg = np.array([0.3, -1.2, 2.0, 0.0, -0.7])
    assert categorical_entropy(lg) == pytest.approx(0.98118570540242255296, rel=1e-13)


@given(logit_vectors)
def test_entropy_range(logits):
    h = categorical_entropy(logits)
    assert 0.0 <= h <= np.log(5) + 1e-12


# -- optimiser -------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    p = np.array([1.0, -1.0, 0.0])
    opt = Adam(3, lr=0.1)
    opt.step(p, np.array([2.0, -0.5, 0.0]))
    np.testing.assert_allclose(p, [0.9, -0.9, 0.0], atol=1e-7)


def test_adam_zero_gradient_leaves_parameters_exactly():
    p = np.array([0.3, 0.7])
    opt = Adam(2, lr=0.1)
    for _ in range(5):
        opt.step(p, np.zeros(2))
    np.testing.assert_array_equal(p, [0.3, 0.7])


def test_adam_state_round_trip():
    p = np.zeros(4)
    a = Adam(4)
    a.step(p, np.arange(4.0))
    b = Adam(4)
    b.load_state(a.state())
    assert b.t == a.t
    np.testing.assert_array_equal(b.m, a.m)
    np.testing.assert_array_equal(b.v, a.v)
