"""scikit-learn style wrappers around the policy learners.

``BehaviorCloningClassifier`` is a plain supervised classifier on
(observation, action) pairs and follows the estimator contract fully.
``AdversarialImitation`` fits a policy by interacting with the simulator;
``fit`` takes a demonstration dataset rather than ``(X, y)``, and
``predict`` returns greedy actions for observations.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .demos import DemoDataset
from .nn import softmax
from .policy import CategoricalMlpPolicy
from .seeding import make_rng
from .sim import FEATURE_SCALE, OBS_DIM, TrafficConfig
from .training import TrainConfig, Trainer
from .trpo import bc_train


class BehaviorCloningClassifier(ClassifierMixin, BaseEstimator):
    """Maximum-likelihood MLP classifier from observations to discrete actions.

    With ``scale_inputs`` the 44 lane-change features are divided by their
    nominal ranges; other feature counts are fed unchanged.
    """

    def __init__(self, hidden: Tuple[int, ...] = (256, 256), epochs: int = 20, lr: float = 1e-3,
                 batch_size: Optional[int] = 256, scale_inputs: bool = True, random_state: int = 0):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.scale_inputs = scale_inputs
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.classes_ = unique_labels(y)
        codes = np.searchsorted(self.classes_, y)
        scale = FEATURE_SCALE if (self.scale_inputs and X.shape[1] == OBS_DIM) else None
        self.policy_ = CategoricalMlpPolicy(obs_dim=X.shape[1], n_actions=len(self.classes_),
                                            hidden=tuple(self.hidden),
                                            seed=make_rng(self.random_state, "init-policy"),
                                            input_scale=scale)
        self.loss_curve_ = bc_train(self.policy_, X, codes, epochs=self.epochs, lr=self.lr,
                                    batch_size=self.batch_size,
                                    rng=make_rng(self.random_state, "bc-batches"))
        return self

    def _check(self, X):
        check_is_fitted(self, "policy_")
        return validate_data(self, X, dtype=np.float64, reset=False)

    def predict_proba(self, X):
        X = self._check(X)
        return softmax(self.policy_.logits(X))

    def predict_log_proba(self, X):
        return np.log(self.predict_proba(X))

    def predict(self, X):
        X = self._check(X)
        return self.classes_[np.argmax(self.policy_.logits(X), axis=1)]


class AdversarialImitation(BaseEstimator):
    """Adversarial imitation learner (``augairl``, ``airl`` or ``gail``).

    ``fit(demos)`` runs ``n_iterations`` rollout/discriminator/TRPO
    iterations against the simulator; ``predict(X)`` is the greedy action.
    """

    def __init__(self, algo: str = "augairl", n_iterations: int = 100, horizon: int = 1024,
                 policy_hidden: Tuple[int, ...] = (100, 100), disc_hidden: Tuple[int, ...] = (512, 512),
                 train_semantic_weights: bool = True, random_state: int = 0,
                 traffic: Optional[TrafficConfig] = None):
        self.algo = algo
        self.n_iterations = n_iterations
        self.horizon = horizon
        self.policy_hidden = policy_hidden
        self.disc_hidden = disc_hidden
        self.train_semantic_weights = train_semantic_weights
        self.random_state = random_state
        self.traffic = traffic

    def _config(self) -> TrainConfig:
        return TrainConfig(algo=self.algo, iterations=self.n_iterations, horizon=self.horizon,
                           seed=self.random_state, policy_hidden=tuple(self.policy_hidden),
                           disc_hidden=tuple(self.disc_hidden),
                           train_semantic_weights=self.train_semantic_weights,
                           traffic=self.traffic if self.traffic is not None else TrafficConfig())

    def fit(self, demos: DemoDataset, y=None):
        if not isinstance(demos, DemoDataset):
            raise TypeError("fit expects a DemoDataset of expert trajectories")
        cfg = self._config()
        if cfg.algo not in ("augairl", "airl", "gail"):
            raise ValueError(f"algo must be augairl, airl or gail, got {cfg.algo!r}")
        trainer = Trainer(cfg, demos)
        for _ in range(cfg.iterations):
            trainer.iterate()
        self.trainer_ = trainer
        self.policy_ = trainer.policy
        self.discriminator_ = trainer.disc
        self.semantic_weights_ = trainer.disc.weights.copy()
        self.log_ = list(trainer.log)
        self.n_features_in_ = OBS_DIM
        return self

    def predict(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != OBS_DIM:
            raise ValueError(f"X has {X.shape[1]} features, expected {OBS_DIM}")
        return self.policy_.greedy(X)

    def predict_proba(self, X):
        check_is_fitted(self, "policy_")
        return self.policy_.probs(check_array(X, dtype=np.float64))
