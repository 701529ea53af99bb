"""Trust-region policy optimisation and the supervised pieces around it.

Contents: generalized advantage estimation, the importance-weighted surrogate,
Fisher-vector products of the mean KL, conjugate gradient, the KL-constrained
line search, value regression and behaviour-cloning pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .nn import Adam, log_softmax, softmax


@dataclass(frozen=True)
class TrpoConfig:
    max_kl: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_steps: int = 10
    backtrack_ratio: float = 0.8
    gamma: float = 0.99
    gae_lambda: float = 0.95
    kl_tolerance: float = 1.5   # accepted steps satisfy kl <= kl_tolerance * max_kl

    def __post_init__(self):
        if self.max_kl <= 0:
            raise ValueError("max_kl must be positive")
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.cg_iters < 1 or self.backtrack_steps < 1:
            raise ValueError("cg_iters and backtrack_steps must be >= 1")
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if self.cg_damping < 0:
            raise ValueError("cg_damping must be nonnegative")


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    old_logp: np.ndarray
    values: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.actions)
        for name in ("observations", "rewards", "dones", "old_logp", "values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self):
        return len(self.actions)


# -- advantages ------------------------------------------------------------------

def compute_gae(rewards, values, dones, gamma: float = 0.99, lam: float = 0.95):
    """Advantages and returns for a horizon of ``T`` steps.

    ``values`` holds ``T + 1`` entries: the state values along the horizon and
    the bootstrap value of the state after the last step.  A ``done`` step
    does not look past itself, so the value following it is never used.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.size
    if values.size != T + 1 or dones.size != T:
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = np.zeros(T)
    last = 0.0
    for t in range(T - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + values[:T]


def normalize_advantages(adv) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    std = adv.std()
    if adv.size < 2 or std == 0.0:
        return adv - adv.mean()
    return (adv - adv.mean()) / std


# -- surrogate and curvature -------------------------------------------------------

def surrogate_and_grad(policy, obs, actions, old_logp, advantages):
    """``-mean(exp(logp - old_logp) * A)`` and its gradient w.r.t. the policy parameters."""
    x = policy.features(obs)
    actions = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(advantages, dtype=np.float64)
    logits, cache = policy.net.forward(x, return_cache=True)
    logp_all = log_softmax(logits)
    n = x.shape[0]
    logp = logp_all[np.arange(n), actions]
    ratio = np.exp(logp - old_logp)
    loss = -np.mean(ratio * adv)
    # d/dlogits of ratio*A = ratio*A*(onehot - p)
    coef = -(ratio * adv) / n
    g = -np.exp(logp_all) * coef[:, None]
    g[np.arange(n), actions] += coef
    grad, _ = policy.net.backward(cache, g)
    return float(loss), grad


def surrogate_loss(policy, obs, actions, old_logp, advantages) -> float:
    logp = policy.log_prob(obs, actions)
    return float(-np.mean(np.exp(logp - old_logp) * advantages))


def mean_kl(old_logits, policy, obs) -> float:
    """Mean ``KL(pi_old || pi)`` over the batch."""
    logp_old = log_softmax(old_logits)
    logp_new = log_softmax(policy.logits(obs))
    kl = (np.exp(logp_old) * (logp_old - logp_new)).sum(axis=1)
    return float(np.mean(kl))


def fisher_vector_product(policy, obs, v, damping: float = 0.0, _cache=None):
    """``H v + damping * v`` with ``H`` the Hessian of the mean KL at the current policy.

    For a softmax head the KL Hessian at equality is ``J^T (diag(p) - p p^T) J``
    averaged over states, where ``J`` is the Jacobian of the logits.  ``J v``
    is computed in forward mode and ``J^T`` by one reverse pass.
    """
    v = np.asarray(v, dtype=np.float64)
    x = policy.features(obs)
    n = x.shape[0]
    if _cache is None:
        logits, cache = policy.net.forward(x, return_cache=True)
        _cache = (softmax(logits), cache)
    p, cache = _cache
    _, jv = policy.net.jvp(x, v)
    mv = p * jv - p * (p * jv).sum(axis=1, keepdims=True)
    hv, _ = policy.net.backward(cache, mv / n)
    return hv + damping * v


def conjugate_gradient(apply_A: Callable, b, iters: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Approximately solve ``A x = b`` for symmetric positive definite ``A``.

    Stops once ``||A x - b|| <= tol * ||b||`` or after ``iters`` iterations.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = r @ r
    target = (tol * np.linalg.norm(b)) ** 2
    for _ in range(iters):
        if rs <= target:
            break
        ap = apply_A(p)
        alpha = rs / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


@dataclass
class TrpoStep:
    accepted: bool
    kl: float
    improvement: float
    step_fraction: float
    surrogate_before: float
    surrogate_after: float


def trpo_update(policy, obs, actions, old_logp, advantages, cfg: TrpoConfig = TrpoConfig()) -> TrpoStep:
    """One KL-constrained natural-gradient step; mutates ``policy`` only on acceptance."""
    x = policy.features(obs)
    logits, cache = policy.net.forward(x, return_cache=True)
    fvp_cache = (softmax(logits), cache)
    loss0, grad = surrogate_and_grad(policy, obs, actions, old_logp, advantages)
    old_params = policy.get_flat_params()
    if not np.any(grad):
        return TrpoStep(False, 0.0, 0.0, 0.0, loss0, loss0)

    def fvp(v):
        return fisher_vector_product(policy, obs, v, cfg.cg_damping, _cache=fvp_cache)

    direction = conjugate_gradient(fvp, -grad, cfg.cg_iters)
    shs = 0.5 * direction @ fvp(direction)
    if not np.isfinite(shs) or shs <= 0:
        return TrpoStep(False, 0.0, 0.0, 0.0, loss0, loss0)
    full_step = direction * np.sqrt(cfg.max_kl / shs)
    frac = 1.0
    for _ in range(cfg.backtrack_steps):
        policy.set_flat_params(old_params + frac * full_step)
        loss = surrogate_loss(policy, obs, actions, old_logp, advantages)
        kl = mean_kl(logits, policy, obs)
        improvement = loss0 - loss
        if improvement > 0 and kl <= cfg.kl_tolerance * cfg.max_kl and np.isfinite(loss):
            return TrpoStep(True, kl, improvement, frac, loss0, loss)
        frac *= cfg.backtrack_ratio
    policy.set_flat_params(old_params)
    return TrpoStep(False, 0.0, 0.0, 0.0, loss0, loss0)


# -- supervised fits ---------------------------------------------------------------

def _minibatches(n: int, batch_size: Optional[int], rng: Optional[np.random.Generator]):
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def fit_value(value_fn, obs, returns, epochs: int = 5, batch_size: Optional[int] = 128,
              rng: Optional[np.random.Generator] = None) -> float:
    """Regress ``value_fn`` on ``returns`` with its Adam optimiser; returns the final full-batch MSE."""
    obs = np.asarray(obs, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    n = len(returns)
    if n == 0:
        raise ValueError("fit_value needs at least one sample")
    for _ in range(epochs):
        for idx in _minibatches(n, batch_size, rng):
            _, grad = value_fn.loss_and_grad(obs[idx], returns[idx])
            value_fn.optimizer.step(value_fn.net.params, grad)
    loss, _ = value_fn.loss_and_grad(obs, returns)
    return loss


def bc_train(policy, obs, actions, epochs: int = 20, lr: float = 1e-3,
             batch_size: Optional[int] = 256, rng: Optional[np.random.Generator] = None,
             optimizer: Optional[Adam] = None):
    """Maximum-likelihood fit of ``policy`` to expert actions.

    Returns the list of full-dataset negative log-likelihoods after each epoch.
    ``batch_size=None`` gives full-batch gradient steps.
    """
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    n = len(actions)
    if n == 0:
        raise ValueError("bc_train needs a nonempty dataset")
    opt = optimizer if optimizer is not None else Adam(policy.n_params, lr=lr)
    history = []
    for _ in range(epochs):
        for idx in _minibatches(n, batch_size, rng):
            _, grad = policy.nll_and_grad(obs[idx], actions[idx])
            opt.step(policy.net.params, grad)
        history.append(policy.nll_and_grad(obs, actions)[0])
    return history
