"""Categorical lane-change policy and state-value baseline on top of :mod:`augairl.nn`."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .nn import Adam, MlpNet, MlpSpec, categorical_entropy, categorical_logprob, log_softmax, softmax
from .sim.observation import FEATURE_SCALE, OBS_DIM
from .sim.world import N_ACTIONS


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


class CategoricalMlpPolicy:
    """``pi(a|s) = softmax(net(s / scale))`` with a tanh MLP.

    ``input_scale`` divides raw observations before the network; pass ``None``
    to feed them unchanged.  The output layer is initialised small so the
    initial policy is close to uniform.
    """

    def __init__(self, obs_dim: int = OBS_DIM, n_actions: int = N_ACTIONS,
                 hidden: Sequence[int] = (100, 100), seed=0,
                 input_scale: Optional[np.ndarray] = FEATURE_SCALE, last_layer_scale: float = 0.01):
        self.spec = MlpSpec(obs_dim, tuple(hidden), n_actions, "tanh")
        self.net = MlpNet.initialize(self.spec, _as_rng(seed), last_layer_scale)
        self.input_scale = None if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        if self.input_scale is not None and self.input_scale.shape != (obs_dim,):
            raise ValueError("input_scale must have one entry per observation feature")

    @property
    def obs_dim(self) -> int:
        return self.spec.input_dim

    @property
    def n_actions(self) -> int:
        return self.spec.output_dim

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def get_flat_params(self) -> np.ndarray:
        return self.net.get_flat_params()

    def set_flat_params(self, values) -> None:
        self.net.set_flat_params(values)

    def features(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.obs_dim:
            raise ValueError(f"observations must have {self.obs_dim} features, got shape {x.shape}")
        return x if self.input_scale is None else x / self.input_scale

    def logits(self, obs) -> np.ndarray:
        return self.net.forward(self.features(obs))

    def probs(self, obs) -> np.ndarray:
        return softmax(self.logits(obs))

    def log_prob(self, obs, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        return categorical_logprob(self.logits(obs), actions)

    def entropy(self, obs) -> np.ndarray:
        return np.atleast_1d(categorical_entropy(self.logits(obs)))

    def sample(self, obs, rng: np.random.Generator) -> np.ndarray:
        """One action per row by inverse-CDF sampling with ``rng.random``."""
        return self.sample_from_logits(self.logits(obs), rng)

    def sample_from_logits(self, logits, rng: np.random.Generator) -> np.ndarray:
        p = softmax(np.atleast_2d(logits))
        cdf = np.cumsum(p, axis=1)
        u = rng.random(p.shape[0])[:, None]
        return np.minimum((u > cdf).sum(axis=1), self.n_actions - 1).astype(np.int64)

    def greedy(self, obs) -> np.ndarray:
        return np.argmax(self.logits(obs), axis=1).astype(np.int64)

    def nll_and_grad(self, obs, actions):
        """Mean negative log-likelihood of ``actions`` and its parameter gradient."""
        x = self.features(obs)
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        logits, cache = self.net.forward(x, return_cache=True)
        logp = log_softmax(logits)
        n = x.shape[0]
        nll = -logp[np.arange(n), actions].mean()
        g = np.exp(logp)
        g[np.arange(n), actions] -= 1.0
        grad, _ = self.net.backward(cache, g / n)
        return float(nll), grad


class ValueFunction:
    """State-value regression network ``44 -> hidden -> 1`` trained by Adam on MSE."""

    def __init__(self, obs_dim: int = OBS_DIM, hidden: Sequence[int] = (100, 100), seed=0,
                 input_scale: Optional[np.ndarray] = FEATURE_SCALE, lr: float = 1e-3):
        self.spec = MlpSpec(obs_dim, tuple(hidden), 1, "tanh")
        self.net = MlpNet.initialize(self.spec, _as_rng(seed))
        self.input_scale = None if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        self.optimizer = Adam(self.net.n_params, lr=lr)

    def features(self, obs) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        return x if self.input_scale is None else x / self.input_scale

    def predict(self, obs) -> np.ndarray:
        return self.net.forward(self.features(obs))[:, 0]

    def loss_and_grad(self, obs, returns):
        x = self.features(obs)
        returns = np.asarray(returns, dtype=np.float64).reshape(-1)
        pred, cache = self.net.forward(x, return_cache=True)
        err = pred[:, 0] - returns
        n = err.size
        grad, _ = self.net.backward(cache, (2.0 / n) * err[:, None])
        return float(np.mean(err * err)), grad
