"""Adversarial discriminators and the rewards they hand to the policy.

Three discriminator forms share one network ``f(s, a)`` over the scaled
observation concatenated with a one-hot action:

``airl``
    ``D = exp(f) / (exp(f) + pi(a|s))``, reward ``f - log pi``.
``augairl``
    as ``airl`` with the score ``g = f + r_sem . w_sem``, where ``r_sem`` are
    fixed per-event values and ``w_sem`` trainable weights; reward
    ``g - log pi``.
``gail``
    ``D = sigmoid(f)``, reward ``f``.

Everything is computed on the logit ``z = log D - log(1 - D)`` so the
cross-entropy and rewards stay finite for any score.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .nn import Adam, MlpNet, MlpSpec, _views
from .sim.observation import FEATURE_SCALE, OBS_DIM
from .sim.world import N_ACTIONS

SEMANTIC_EVENTS = ("success", "crash", "margin_invasion", "lateral_move")
SEMANTIC_BASE = np.array([15.0, -30.0, -1.0, 0.3])
MODES = ("airl", "augairl", "gail")


def semantic_reward(events, base=SEMANTIC_BASE, weights=None):
    """``sum_i base_i * w_i * events_i`` per row (weights default to ones)."""
    events = np.asarray(events, dtype=np.float64)
    base = np.asarray(base, dtype=np.float64)
    w = np.ones(4) if weights is None else np.asarray(weights, dtype=np.float64)
    out = events @ (base * w)
    return float(out) if np.ndim(out) == 0 else out


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -z))


def log_sigmoid(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def augmented_disc(f, bonus, log_pi):
    """``D = exp(f + bonus) / (exp(f + bonus) + pi)`` evaluated as ``sigmoid(f + bonus - log pi)``."""
    return sigmoid(np.asarray(f) + np.asarray(bonus) - np.asarray(log_pi))


def logit_reward(z):
    """``log D - log(1 - D)`` for ``D = sigmoid(z)``, evaluated through log-sigmoids."""
    return log_sigmoid(z) - log_sigmoid(-np.asarray(z, dtype=np.float64))


def generator_objective(z):
    """Per-sample ``log(1 - D) - log D``, the quantity the generator minimises."""
    return log_sigmoid(-np.asarray(z, dtype=np.float64)) - log_sigmoid(z)


def bce_from_logits(z, labels) -> float:
    """Mean binary cross-entropy of labels under ``D = sigmoid(z)``."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)))


def one_hot(actions, n: int = N_ACTIONS) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    if actions.size and (actions.min() < 0 or actions.max() >= n):
        raise ValueError(f"actions must lie in 0..{n - 1}")
    out = np.zeros((actions.size, n))
    out[np.arange(actions.size), actions] = 1.0
    return out


class Discriminator:
    """Scores state-action pairs; parameters are ``[f-network params, w_sem]`` in one vector.

    ``train_weights=False`` freezes ``w_sem`` at its initial value (ones by
    default).  In ``airl`` and ``gail`` mode the semantic term is not part of
    the score at all and the stored weights stay at zero.  ``shaping`` keeps the plain AIRL discriminator but adds the fixed
    semantic reward (unit weights) to the generator reward.
    """

    def __init__(self, mode: str = "augairl", hidden: Sequence[int] = (512, 512), seed=0,
                 obs_dim: int = OBS_DIM, n_actions: int = N_ACTIONS,
                 input_scale: Optional[np.ndarray] = FEATURE_SCALE, lr: float = 3e-4,
                 weights_init=None, train_weights: bool = True, shaping: bool = False,
                 base=SEMANTIC_BASE):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if shaping and mode != "airl":
            raise ValueError("reward shaping applies to the plain airl discriminator only")
        self.mode = mode
        self.shaping = shaping
        self.n_actions = n_actions
        self.spec = MlpSpec(obs_dim + n_actions, tuple(hidden), 1, "relu")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        f = MlpNet.initialize(self.spec, rng)
        self.base = np.asarray(base, dtype=np.float64)
        if weights_init is None:
            # the weights only take part in the augmented score
            weights_init = np.ones(4) if mode == "augairl" else np.zeros(4)
        w0 = np.asarray(weights_init, dtype=np.float64)
        if w0.shape != (4,):
            raise ValueError("weights_init needs four entries")
        self.params = np.concatenate([f.params, w0])
        self.net = MlpNet(self.spec)
        self._rebind()
        self.train_weights = bool(train_weights) and mode == "augairl"
        self.input_scale = None if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        self.optimizer = Adam(self.params.size, lr=lr)

    def _rebind(self):
        # the f-network weight views must alias self.params
        n = self.spec.n_params
        self.net.params = self.params[:n]
        self.net.weights, self.net.biases = _views(self.spec, self.net.params)

    @property
    def weights(self) -> np.ndarray:
        return self.params[self.spec.n_params:]

    @property
    def n_params(self) -> int:
        return self.params.size

    def get_flat_params(self) -> np.ndarray:
        return self.params.copy()

    def set_flat_params(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.params.shape:
            raise ValueError(f"expected {self.params.size} parameters, got {values.shape}")
        self.params[...] = values

    def _inputs(self, obs, actions) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if self.input_scale is not None:
            x = x / self.input_scale
        return np.concatenate([x, one_hot(actions, self.n_actions)], axis=1)

    def score_f(self, obs, actions) -> np.ndarray:
        return self.net.forward(self._inputs(obs, actions))[:, 0]

    def bonus(self, events) -> np.ndarray:
        """Semantic part of the score, ``events . (base * w_sem)``."""
        return np.asarray(events, dtype=np.float64).reshape(-1, 4) @ (self.base * self.weights)

    def logits(self, obs, actions, log_pi, events=None) -> np.ndarray:
        """``z`` with ``D = sigmoid(z)``."""
        f = self.score_f(obs, actions)
        return self._logits_from_f(f, log_pi, events)

    def _logits_from_f(self, f, log_pi, events):
        if self.mode == "gail":
            return f
        g = f
        if self.mode == "augairl":
            g = f + self.bonus(events)
        return g - np.asarray(log_pi, dtype=np.float64)

    def prob(self, obs, actions, log_pi, events=None) -> np.ndarray:
        return sigmoid(self.logits(obs, actions, log_pi, events))

    def reward(self, obs, actions, log_pi, events=None) -> np.ndarray:
        """Generator reward ``log D - log(1 - D)``, evaluated as the logit itself.

        In shaping mode the fixed semantic reward is added on top of the
        plain AIRL reward.
        """
        z = self.logits(obs, actions, log_pi, events)
        if self.shaping:
            z = z + semantic_reward(np.asarray(events).reshape(-1, 4), self.base)
        return z

    def loss_and_grad(self, expert, policy):
        """Mean cross-entropy (expert label 1) over both batches and its parameter gradient.

        ``expert`` and ``policy`` are ``(obs, actions, log_pi, events)`` tuples;
        ``log_pi`` enters as a constant.
        """
        parts = []
        for obs, actions, log_pi, events in (expert, policy):
            if len(actions) == 0:
                raise ValueError("discriminator batches must be nonempty")
            parts.append((np.asarray(obs, dtype=np.float64), np.asarray(actions), np.asarray(log_pi),
                          np.zeros((len(actions), 4)) if events is None else np.asarray(events)))
        obs = np.concatenate([p[0] for p in parts])
        actions = np.concatenate([p[1] for p in parts])
        log_pi = np.concatenate([p[2] for p in parts])
        events = np.concatenate([p[3] for p in parts]).astype(np.float64)
        labels = np.concatenate([np.ones(len(parts[0][1])), np.zeros(len(parts[1][1]))])
        n = labels.size
        out, cache = self.net.forward(self._inputs(obs, actions), return_cache=True)
        z = self._logits_from_f(out[:, 0], log_pi, events)
        loss = bce_from_logits(z, labels)
        dz = (sigmoid(z) - labels) / n
        grad = np.zeros(self.params.size)
        grad[:self.spec.n_params], _ = self.net.backward(cache, dz[:, None])
        if self.mode == "augairl":
            grad[self.spec.n_params:] = (events * self.base).T @ dz
        return loss, grad

    def loss(self, expert, policy) -> float:
        return self.loss_and_grad(expert, policy)[0]

    def step(self, expert, policy) -> float:
        """One Adam step on a batch pair; returns the loss before the step."""
        loss, grad = self.loss_and_grad(expert, policy)
        if not self.train_weights:
            grad[self.spec.n_params:] = 0.0
        self.optimizer.step(self.params, grad)
        return loss
