import numpy as np
import pytest
from hypothesis import given, strategies as st

from _helpers import fd_gradient, max_rel_error, train_two_state, value_iteration
from augairl.nn import softmax
from augairl.policy import CategoricalMlpPolicy, ValueFunction
from augairl.seeding import make_rng
from augairl.trpo import (RolloutBatch, TrpoConfig, bc_train, compute_gae, conjugate_gradient,
                          fisher_vector_product, fit_value, mean_kl, normalize_advantages, surrogate_and_grad,
                          surrogate_loss, trpo_update)


def small_policy(obs_dim=6, n_actions=5, hidden=(8,), seed=0, last_layer_scale=1.0):
    return CategoricalMlpPolicy(obs_dim=obs_dim, n_actions=n_actions, hidden=hidden, seed=seed,
                                input_scale=None, last_layer_scale=last_layer_scale)


def policy_batch(policy, rng, n=32):
    obs = rng.normal(size=(n, policy.obs_dim))
    actions = policy.sample(obs, rng)
    return obs, actions, policy.log_prob(obs, actions)


def gae_double_loop(rewards, values, dones, gamma, lam):
    T = len(rewards)
    delta = [rewards[t] + gamma * values[t + 1] * (1 - dones[t]) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        coef = 1.0
        for k in range(t, T):
            adv[t] += coef * delta[k]
            if dones[k]:
                break
            coef *= gamma * lam
    return adv


# -- advantages --------------------------------------------------------------------

def test_gae_single_terminal_step():
    adv, ret = compute_gae([2.5], [1.0, 99.0], [True])
    assert adv[0] == 1.5 and ret[0] == 2.5


def test_gae_monte_carlo_limit():
    r = np.array([1.0, -2.0, 0.5, 3.0])
    adv, _ = compute_gae(r, np.zeros(5), np.zeros(4, dtype=bool), gamma=1.0, lam=1.0)
    np.testing.assert_allclose(adv, np.cumsum(r[::-1])[::-1], rtol=0, atol=1e-15)


@given(st.integers(1, 100), st.integers(0, 2**31), st.floats(0.5, 1.0), st.floats(0.5, 1.0))
def test_gae_matches_double_loop(T, seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=T)
    v = rng.normal(size=T + 1)
    d = rng.random(T) < 0.1
    adv, ret = compute_gae(r, v, d, gamma, lam)
    np.testing.assert_allclose(adv, gae_double_loop(r, v, d.astype(float), gamma, lam), rtol=0, atol=1e-10)
    np.testing.assert_allclose(ret, adv + v[:T], rtol=0, atol=1e-12)


def test_gae_rejects_misaligned_inputs():
    with pytest.raises(ValueError):
        compute_gae([1.0, 2.0], [0.0, 0.0], [False, False])


@given(st.integers(2, 500), st.integers(0, 2**31))
def test_normalized_advantages(n, seed):
    a = normalize_advantages(np.random.default_rng(seed).normal(3.0, 7.0, size=n))
    assert abs(a.mean()) < 1e-10
    assert abs(a.std() - 1.0) < 1e-10


def test_rollout_batch_checks_alignment():
    with pytest.raises(ValueError):
        RolloutBatch(np.zeros((3, 2)), np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3), np.zeros(3))


# -- surrogate ---------------------------------------------------------------------

def test_surrogate_at_old_policy_is_minus_mean_advantage():
    rng = np.random.default_rng(0)
    pol = small_policy()
    obs, actions, old = policy_batch(pol, rng)
    adv = normalize_advantages(rng.normal(size=len(actions)))
    loss, _ = surrogate_and_grad(pol, obs, actions, old, adv)
    assert abs(loss) < 1e-15


def test_surrogate_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    pol = small_policy(last_layer_scale=1.0)
    obs, actions, old = policy_batch(pol, rng)
    adv = rng.normal(size=len(actions))
    pol.set_flat_params(pol.get_flat_params() + 0.05 * rng.normal(size=pol.n_params))
    loss, grad = surrogate_and_grad(pol, obs, actions, old, adv)
    assert loss == pytest.approx(surrogate_loss(pol, obs, actions, old, adv), abs=1e-14)
    p0 = pol.get_flat_params()

    def f(p):
        pol.set_flat_params(p)
        return surrogate_loss(pol, obs, actions, old, adv)

    fd = fd_gradient(f, p0, eps=1e-6)
    pol.set_flat_params(p0)
    assert max_rel_error(grad, fd, floor=1e-6) < 1e-4


def test_surrogate_gradient_is_linear_in_advantages():
    rng = np.random.default_rng(2)
    pol = small_policy()
    obs, actions, old = policy_batch(pol, rng)
    adv = rng.normal(size=len(actions))
    _, g1 = surrogate_and_grad(pol, obs, actions, old, adv)
    _, g2 = surrogate_and_grad(pol, obs, actions, old, 2 * adv)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-13, atol=1e-16)


# -- Fisher-vector products -----------------------------------------------------------

def kl_gradient(policy, obs, old_probs):
    """Gradient of mean KL(old || current) w.r.t. the policy parameters."""
    x = policy.features(obs)
    logits, cache = policy.net.forward(x, return_cache=True)
    g, _ = policy.net.backward(cache, (softmax(logits) - old_probs) / x.shape[0])
    return g


def test_fvp_of_zero_is_zero():
    rng = np.random.default_rng(3)
    pol = small_policy()
    obs = rng.normal(size=(16, 6))
    np.testing.assert_array_equal(fisher_vector_product(pol, obs, np.zeros(pol.n_params)), 0.0)


def test_fvp_matches_explicit_kl_hessian():
    rng = np.random.default_rng(4)
    pol = small_policy(obs_dim=1, n_actions=2, hidden=(2,), last_layer_scale=1.0, seed=3)
    assert pol.n_params == 10
    obs = rng.normal(size=(12, 1))
    old_probs = pol.probs(obs)
    p0 = pol.get_flat_params()
    eps = 1e-5
    H = np.zeros((10, 10))
    for i in range(10):
        e = np.zeros(10)
        e[i] = eps
        pol.set_flat_params(p0 + e)
        hi = kl_gradient(pol, obs, old_probs)
        pol.set_flat_params(p0 - e)
        lo = kl_gradient(pol, obs, old_probs)
        H[:, i] = (hi - lo) / (2 * eps)
    pol.set_flat_params(p0)
    # the KL gradient vanishes at the old policy
    np.testing.assert_allclose(kl_gradient(pol, obs, old_probs), 0.0, atol=1e-15)
    for _ in range(5):
        v = rng.normal(size=10)
        hv = fisher_vector_product(pol, obs, v)
        assert max_rel_error(hv, H @ v, floor=1e-7) < 1e-5
        np.testing.assert_allclose(fisher_vector_product(pol, obs, v, damping=0.1), hv + 0.1 * v, rtol=1e-14)


def test_kl_gradient_oracle_is_consistent():
    rng = np.random.default_rng(5)
    pol = small_policy(obs_dim=1, n_actions=2, hidden=(2,), last_layer_scale=1.0, seed=3)
    obs = rng.normal(size=(12, 1))
    old_logits = pol.logits(obs)
    p0 = pol.get_flat_params() + 0.1 * rng.normal(size=10)
    pol.set_flat_params(p0)

    def kl(p):
        pol.set_flat_params(p)
        return mean_kl(old_logits, pol, obs)

    fd = fd_gradient(kl, p0, eps=1e-6)
    pol.set_flat_params(p0)
    assert max_rel_error(kl_gradient(pol, obs, softmax(old_logits)), fd, floor=1e-8) < 1e-4


def test_fvp_is_positive_semidefinite():
    rng = np.random.default_rng(6)
    pol = small_policy()
    obs = rng.normal(size=(32, 6))
    for _ in range(100):
        v = rng.normal(size=pol.n_params)
        assert v @ fisher_vector_product(pol, obs, v) >= -1e-14
        assert v @ fisher_vector_product(pol, obs, v, damping=0.1) > 0


# -- conjugate gradient ---------------------------------------------------------------

def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_cg_identity_one_iteration():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(conjugate_gradient(lambda v: v, b, iters=1), b)


def test_cg_zero_rhs():
    np.testing.assert_array_equal(conjugate_gradient(lambda v: 2 * v, np.zeros(4)), 0.0)


def test_cg_five_by_five_known_solution():
    rng = np.random.default_rng(7)
    A = random_spd(rng, 5)
    x_star = rng.normal(size=5)
    x = conjugate_gradient(lambda v: A @ v, A @ x_star, iters=5)
    assert np.linalg.norm(x - x_star) < 1e-6
    np.testing.assert_allclose(x, np.linalg.solve(A, A @ x_star), atol=1e-8)


@pytest.mark.parametrize("n", [1, 2, 7, 13, 20])
def test_cg_converges_within_n_iterations(n):
    rng = np.random.default_rng(n)
    A = random_spd(rng, n)
    b = rng.normal(size=n)
    x = conjugate_gradient(lambda v: A @ v, b, iters=n, tol=1e-12)
    assert np.linalg.norm(A @ x - b) < 1e-6


# -- trust-region step ------------------------------------------------------------------

def test_zero_advantages_leave_policy_unchanged():
    rng = np.random.default_rng(8)
    pol = small_policy()
    obs, actions, old = policy_batch(pol, rng)
    p0 = pol.get_flat_params()
    step = trpo_update(pol, obs, actions, old, np.zeros(len(actions)))
    assert not step.accepted
    np.testing.assert_array_equal(pol.get_flat_params(), p0)


def test_accepted_steps_respect_the_trust_region():
    rng = np.random.default_rng(9)
    pol = small_policy(hidden=(16,))
    cfg = TrpoConfig()
    for _ in range(20):
        obs, actions, old = policy_batch(pol, rng, 64)
        adv = normalize_advantages(np.where(actions == 2, 1.0, -0.3) + 0.1 * rng.normal(size=64))
        old_logits = pol.logits(obs)
        step = trpo_update(pol, obs, actions, old, adv, cfg)
        if step.accepted:
            assert step.kl <= 1.5 * cfg.max_kl
            assert step.kl == pytest.approx(mean_kl(old_logits, pol, obs), rel=1e-12)
            assert step.improvement > 0
            assert surrogate_loss(pol, obs, actions, old, adv) < step.surrogate_before


def test_rejected_line_search_restores_parameters():
    rng = np.random.default_rng(10)
    pol = small_policy()
    obs, actions, old = policy_batch(pol, rng)
    adv = normalize_advantages(rng.normal(size=len(actions)))
    p0 = pol.get_flat_params()
    # a trust region so small that the first accepted candidate would need more backtracking steps
    step = trpo_update(pol, obs, actions, old, adv, TrpoConfig(max_kl=1e-30, backtrack_steps=1))
    if not step.accepted:
        np.testing.assert_array_equal(pol.get_flat_params(), p0)


def test_config_validation():
    for kw in (dict(max_kl=0.0), dict(gamma=1.5), dict(gae_lambda=0.0), dict(backtrack_ratio=1.0),
               dict(cg_iters=0), dict(cg_damping=-1.0)):
        with pytest.raises(ValueError):
            TrpoConfig(**kw)


# -- two-state MDP --------------------------------------------------------------------

def test_two_state_mdp_reaches_optimal_action():
    optimal = value_iteration()
    np.testing.assert_array_equal(optimal, [1, 0])
    p = train_two_state(updates=50)
    assert p[0, optimal[0]] > 0.95
    assert p[1, optimal[1]] > 0.95


# -- supervised fits --------------------------------------------------------------------

def test_bc_constant_action():
    rng = np.random.default_rng(11)
    pol = small_policy()
    obs = rng.normal(size=(200, 6))
    hist = bc_train(pol, obs, np.full(200, 3), epochs=300, batch_size=None, lr=1e-2)
    assert hist[-1] < 0.01
    assert np.all(pol.probs(obs)[:, 3] > 0.99)


def test_bc_full_batch_nll_decreases():
    rng = np.random.default_rng(12)
    pol = small_policy(hidden=(16,))
    obs = rng.normal(size=(1000, 6))
    actions = (obs[:, 0] > 0).astype(int) + 2 * (obs[:, 1] > 0)
    hist = bc_train(pol, obs, actions, epochs=20, batch_size=None, lr=1e-3)
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_bc_holdout_accuracy_on_expert_data(demos500):
    obs, actions, _ = demos500.arrays()
    episodes = np.repeat(np.arange(len(demos500)), [len(t) for t in demos500.trajectories])
    train = episodes < 400
    pol = CategoricalMlpPolicy(seed=0)
    bc_train(pol, obs[train], actions[train], rng=make_rng(0, "bc-batches"))
    acc = np.mean(pol.greedy(obs[~train]) == actions[~train])
    assert acc > 0.7


def test_bc_rejects_empty_dataset():
    with pytest.raises(ValueError):
        bc_train(small_policy(), np.zeros((0, 6)), np.zeros(0))


def test_fit_value_constant_returns():
    rng = np.random.default_rng(13)
    vf = ValueFunction(obs_dim=6, hidden=(16,), seed=0, input_scale=None, lr=1e-2)
    obs = rng.normal(size=(256, 6))
    fit_value(vf, obs, np.full(256, 4.0), epochs=1500, batch_size=None)
    assert np.all(np.abs(vf.predict(obs) - 4.0) < 0.2)


def test_fit_value_full_batch_loss_non_increasing():
    rng = np.random.default_rng(14)
    vf = ValueFunction(obs_dim=6, hidden=(16,), seed=0, input_scale=None)
    obs = rng.normal(size=(300, 6))
    ret = obs[:, 0] - 0.5 * obs[:, 2]
    losses = [fit_value(vf, obs, ret, epochs=1, batch_size=None) for _ in range(30)]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_value_gradient_matches_finite_differences():
    rng = np.random.default_rng(15)
    vf = ValueFunction(obs_dim=6, hidden=(8,), seed=0, input_scale=None)
    obs = rng.normal(size=(20, 6))
    ret = rng.normal(size=20)
    _, grad = vf.loss_and_grad(obs, ret)
    p0 = vf.net.get_flat_params()

    def f(p):
        vf.net.set_flat_params(p)
        return vf.loss_and_grad(obs, ret)[0]

    fd = fd_gradient(f, p0, eps=1e-6)
    vf.net.set_flat_params(p0)
    assert max_rel_error(grad, fd, floor=1e-6) < 1e-4


def test_fit_value_rejects_empty_batch():
    with pytest.raises(ValueError):
        fit_value(ValueFunction(obs_dim=6, hidden=(4,), input_scale=None), np.zeros((0, 6)), np.zeros(0))
