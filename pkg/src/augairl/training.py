"""Training loops for the adversarial imitation learners and the RL baselines.

Every iteration collects ``horizon`` decision steps with the current
stochastic policy, updates the discriminator on equal numbers of expert and
policy samples (imitation algorithms only), relabels the rollout with the
algorithm's reward, takes one TRPO step and refits the value baseline.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional, Tuple

import numpy as np

from .checkpoint import Checkpoint, generator_states, save_checkpoint
from .demos import DemoDataset, load_dataset
from .nn import log_softmax
from .policy import CategoricalMlpPolicy, ValueFunction
from .reward import Discriminator
from .seeding import TRAIN, episode_seed, make_rng
from .sim import TrafficConfig, build_observation, reset, step_inplace
from .sim.world import StepOutcome
from .trpo import TrpoConfig, bc_train, compute_gae, fit_value, normalize_advantages, trpo_update

ALGOS = ("augairl", "airl", "gail", "trpo", "bc_trpo")
IMITATION = ("augairl", "airl", "gail")
NEEDS_DEMOS = ("augairl", "airl", "gail", "bc_trpo")


class ConfigError(ValueError):
    """Invalid training configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# -- crafted reward ---------------------------------------------------------------

CRAFTED_SUCCESS = 15.0
CRAFTED_CRASH = -30.0
CRAFTED_MARGIN = -1.0
CRAFTED_STEP = -0.01
CRAFTED_JERK = -0.1
CRAFTED_JERK_CAP = 5.0
CRAFTED_PROGRESS = 0.05


def crafted_reward_terms(success: bool, crash: bool, margin: bool, jerk: float,
                         lateral_progress: float) -> float:
    """Hand-designed safety / efficiency / comfort reward for one transition.

    ``lateral_progress`` is the reduction (m) of the ego's lateral distance to
    the target lane centre over the transition.
    """
    r = CRAFTED_STEP + CRAFTED_JERK * min(abs(jerk), CRAFTED_JERK_CAP) + CRAFTED_PROGRESS * lateral_progress
    if success:
        r += CRAFTED_SUCCESS
    if crash:
        r += CRAFTED_CRASH
    if margin:
        r += CRAFTED_MARGIN
    return r


def lateral_distance(world) -> float:
    return abs(world.ego.lat_pos - world.config.lane_center(world.ego_target_lane))


def crafted_reward(prev, nxt, outcome: StepOutcome) -> float:
    """Crafted reward of the transition ``prev -> nxt``."""
    return crafted_reward_terms(outcome.success, outcome.crash, outcome.margin_invasion, nxt.ego_jerk,
                                lateral_distance(prev) - lateral_distance(nxt))


# -- configuration ----------------------------------------------------------------

@dataclass
class TrainConfig:
    algo: str = "augairl"
    iterations: int = 15000
    horizon: int = 1024
    demo_path: Optional[str] = None
    seed: int = 0
    checkpoint_interval: int = 3000
    policy_hidden: Tuple[int, ...] = (100, 100)
    value_hidden: Tuple[int, ...] = (100, 100)
    disc_hidden: Tuple[int, ...] = (512, 512)
    trpo: TrpoConfig = field(default_factory=TrpoConfig)
    disc_lr: float = 3e-4
    disc_batch: int = 256
    disc_epochs: int = 2
    value_epochs: int = 5
    value_lr: float = 1e-3
    value_batch: int = 128
    bc_epochs: int = 20
    bc_lr: float = 1e-3
    bc_batch: int = 256
    semantic_weights_init: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    train_semantic_weights: bool = True
    shaping_ablation: bool = False
    traffic: TrafficConfig = field(default_factory=TrafficConfig)

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError("algo", f"must be one of {ALGOS}, got {self.algo!r}")
        for key in ("iterations", "horizon", "checkpoint_interval", "disc_batch", "disc_epochs",
                    "value_epochs", "value_batch", "bc_epochs", "bc_batch"):
            v = getattr(self, key)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(key, f"must be a positive integer, got {v!r}")
        if self.disc_batch % 2:
            raise ConfigError("disc_batch", "must be even (half expert, half policy samples)")
        if self.seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        for key in ("disc_lr", "value_lr", "bc_lr"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if len(self.semantic_weights_init) != 4:
            raise ConfigError("semantic_weights_init", "needs four entries")
        if not all(math.isfinite(w) for w in self.semantic_weights_init):
            raise ConfigError("semantic_weights_init", "entries must be finite")
        if self.shaping_ablation and self.algo not in ("airl", "augairl"):
            raise ConfigError("shaping_ablation", "only applies to airl/augairl")
        try:
            self.traffic.validate()
        except ValueError as exc:
            raise ConfigError("traffic", str(exc)) from None

    @property
    def disc_mode(self) -> Optional[str]:
        if self.algo not in IMITATION:
            return None
        if self.shaping_ablation:
            return "airl"
        return self.algo

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "traffic":
                v = v.to_dict()
            elif f.name == "trpo":
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kw = {}
        known = {f.name for f in fields(cls)}
        for k, v in d.items():
            if k not in known:
                raise ConfigError(k, "unknown configuration key")
            if k == "traffic":
                v = TrafficConfig.from_dict(v)
            elif k == "trpo":
                v = TrpoConfig(**v)
            elif isinstance(v, list):
                v = tuple(v)
            kw[k] = v
        return cls(**kw)


# -- rollouts --------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    success: bool
    decision_steps: int
    changing_steps: int
    total_reward: float
    termination_reason: str = "none"
    aborted_steps: int = 0

    def __post_init__(self):
        if self.decision_steps < 1:
            raise ValueError("an episode has at least one decision step")
        if self.changing_steps > self.decision_steps:
            raise ValueError("changing steps cannot exceed decision steps")


class EpisodeRunner:
    """A persistent environment that restarts with fresh seeded episodes."""

    def __init__(self, traffic: TrafficConfig, seed: int, tag: str = TRAIN):
        self.traffic = traffic
        self.seed = seed
        self.tag = tag
        self.episode_index = 0
        self._start()

    def _start(self):
        self.world = reset(self.traffic, episode_seed(self.seed, self.episode_index, self.tag))
        self.obs = build_observation(self.world)
        self.total = 0.0

    def step(self, action: int):
        """Advance one tick; returns ``(outcome, crafted_reward, finished_metrics_or_None)``."""
        w = self.world
        before = lateral_distance(w)
        out = step_inplace(w, action)
        r = crafted_reward_terms(out.success, out.crash, out.margin_invasion, w.ego_jerk,
                                 before - lateral_distance(w))
        self.total += r
        done = None
        if out.terminated:
            done = EpisodeMetrics(success=out.termination_reason == "success", decision_steps=w.time_step,
                                  changing_steps=w.changing_steps, total_reward=self.total,
                                  termination_reason=out.termination_reason, aborted_steps=w.aborted_steps)
            self.episode_index += 1
            self._start()
        else:
            self.obs = build_observation(w)
        return out, r, done


@dataclass
class Rollout:
    observations: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    events: np.ndarray
    dones: np.ndarray
    crafted: np.ndarray
    last_obs: np.ndarray
    episodes: List[EpisodeMetrics]


def collect_rollout(runner: EpisodeRunner, policy, horizon: int, rng: np.random.Generator) -> Rollout:
    obs = np.zeros((horizon, runner.obs.size))
    actions = np.zeros(horizon, dtype=np.int64)
    logp = np.zeros(horizon)
    events = np.zeros((horizon, 4), dtype=np.int64)
    dones = np.zeros(horizon, dtype=bool)
    crafted = np.zeros(horizon)
    episodes = []
    for t in range(horizon):
        obs[t] = runner.obs
        logits = policy.logits(runner.obs)
        a = int(policy.sample_from_logits(logits, rng)[0])
        logp[t] = log_softmax(logits[0])[a]
        out, r, finished = runner.step(a)
        actions[t] = a
        events[t] = out.events
        dones[t] = out.terminated
        crafted[t] = r
        if finished is not None:
            episodes.append(finished)
    return Rollout(obs, actions, logp, events, dones, crafted, runner.obs.copy(), episodes)


# -- the learner ------------------------------------------------------------------

LOG_COLUMNS = ("iteration", "episodes", "total_reward", "success_ratio", "decision_steps",
               "changing_steps", "disc_loss", "kl", "entropy", "surrogate_improvement", "accepted",
               "value_loss", "mean_reward", "w_success", "w_crash", "w_margin", "w_lateral")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class Trainer:
    """Holds networks, optimisers and random streams of one training run."""

    def __init__(self, cfg: TrainConfig, demos: Optional[DemoDataset] = None):
        cfg.validate()
        self.cfg = cfg
        if cfg.algo in NEEDS_DEMOS:
            if demos is None:
                if not cfg.demo_path:
                    raise ConfigError("demo_path", f"algorithm {cfg.algo!r} needs expert demonstrations")
                if not os.path.exists(cfg.demo_path):
                    raise ConfigError("demo_path", f"demonstration file {cfg.demo_path!r} does not exist")
                demos = load_dataset(cfg.demo_path)
            if len(demos) == 0:
                raise ConfigError("demo_path", "demonstration dataset is empty")
        self.demos = demos
        if demos is not None:
            self.expert_obs, self.expert_actions, self.expert_events = demos.arrays()
        s = cfg.seed
        self.rng_policy = make_rng(s, "rollout")
        self.rng_disc = make_rng(s, "discriminator-batches")
        self.rng_value = make_rng(s, "value-batches")
        self.policy = CategoricalMlpPolicy(hidden=cfg.policy_hidden, seed=make_rng(s, "init-policy"))
        self.value = ValueFunction(hidden=cfg.value_hidden, seed=make_rng(s, "init-value"), lr=cfg.value_lr)
        self.disc = None
        mode = cfg.disc_mode
        if mode is not None:
            w0 = cfg.semantic_weights_init if mode == "augairl" else None
            self.disc = Discriminator(mode, hidden=cfg.disc_hidden, seed=make_rng(s, "init-discriminator"),
                                      lr=cfg.disc_lr, weights_init=w0,
                                      train_weights=cfg.train_semantic_weights,
                                      shaping=cfg.shaping_ablation)
        self.runner = EpisodeRunner(cfg.traffic, s, TRAIN)
        self.iteration = 0
        self.log: List[dict] = []
        self.bc_history: List[float] = []
        if cfg.algo == "bc_trpo":
            self.bc_history = bc_train(self.policy, self.expert_obs, self.expert_actions,
                                       epochs=cfg.bc_epochs, lr=cfg.bc_lr, batch_size=cfg.bc_batch,
                                       rng=make_rng(s, "bc-batches"))

    # discriminator ------------------------------------------------------------
    def train_discriminator(self, roll: Rollout) -> List[float]:
        half = self.cfg.disc_batch // 2
        n = len(roll.actions)
        n_exp = len(self.expert_actions)
        losses = []
        for _ in range(self.cfg.disc_epochs):
            order = self.rng_disc.permutation(n)
            for start in range(0, n, half):
                pi = order[start:start + half]
                ei = self.rng_disc.integers(0, n_exp, size=pi.size)
                e_obs = self.expert_obs[ei]
                e_act = self.expert_actions[ei]
                expert = (e_obs, e_act, self.policy.log_prob(e_obs, e_act), self.expert_events[ei])
                policy = (roll.observations[pi], roll.actions[pi], roll.logp[pi], roll.events[pi])
                losses.append(self.disc.step(expert, policy))
        return losses

    def rewards(self, roll: Rollout) -> np.ndarray:
        if self.disc is None:
            return roll.crafted
        return self.disc.reward(roll.observations, roll.actions, roll.logp, roll.events)

    # one iteration --------------------------------------------------------------
    def iterate(self) -> dict:
        cfg = self.cfg
        roll = collect_rollout(self.runner, self.policy, cfg.horizon, self.rng_policy)
        disc_losses = self.train_discriminator(roll) if self.disc is not None else []
        rewards = self.rewards(roll)
        values = np.append(self.value.predict(roll.observations),
                           self.value.predict(roll.last_obs)[0])
        adv, returns = compute_gae(rewards, values, roll.dones, cfg.trpo.gamma, cfg.trpo.gae_lambda)
        adv_n = normalize_advantages(adv)
        entropy = float(np.mean(self.policy.entropy(roll.observations)))
        step = trpo_update(self.policy, roll.observations, roll.actions, roll.logp, adv_n, cfg.trpo)
        value_loss = fit_value(self.value, roll.observations, returns, cfg.value_epochs,
                               cfg.value_batch, self.rng_value)
        self.iteration += 1
        eps = roll.episodes
        w = self.disc.weights if self.disc is not None else np.zeros(4)
        row = {
            "iteration": self.iteration,
            "episodes": len(eps),
            "total_reward": float(np.mean([e.total_reward for e in eps])) if eps else None,
            "success_ratio": float(np.mean([e.success for e in eps])) if eps else None,
            "decision_steps": float(np.mean([e.decision_steps for e in eps])) if eps else None,
            "changing_steps": float(np.mean([e.changing_steps for e in eps])) if eps else None,
            "disc_loss": float(np.mean(disc_losses)) if disc_losses else None,
            "kl": step.kl,
            "entropy": entropy,
            "surrogate_improvement": step.improvement,
            "accepted": step.accepted,
            "value_loss": value_loss,
            "mean_reward": float(np.mean(rewards)),
            "w_success": float(w[0]), "w_crash": float(w[1]), "w_margin": float(w[2]),
            "w_lateral": float(w[3]),
        }
        self.log.append(row)
        return row

    # persistence ------------------------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        rngs = {"rollout": self.rng_policy, "discriminator-batches": self.rng_disc,
                "value-batches": self.rng_value, "episode": self.runner.world.rng}
        meta = {
            "algo": self.cfg.algo,
            "config": self.cfg.to_dict(),
            "policy_hidden": list(self.cfg.policy_hidden),
            "value_hidden": list(self.cfg.value_hidden),
            "disc_hidden": list(self.cfg.disc_hidden),
            "disc_mode": self.cfg.disc_mode,
            "episode_index": self.runner.episode_index,
            "log": [{k: r[k] for k in LOG_COLUMNS} for r in self.log],
        }
        return Checkpoint(self.iteration, self.policy.get_flat_params(), self.value.net.get_flat_params(),
                          self.disc.get_flat_params() if self.disc is not None else np.zeros(0),
                          rng_state=generator_states(rngs), metadata=meta)


def write_log(rows: List[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in LOG_COLUMNS])


def read_log(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (float(v) if v != "" else None) for k, v in r.items()})
    return out


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}.ckpt"


def train(cfg: TrainConfig, out_dir, demos: Optional[DemoDataset] = None,
          progress: Optional[Callable[[dict], None]] = None) -> Trainer:
    """Run ``cfg.iterations`` iterations writing logs and checkpoints under ``out_dir``.

    Checkpoints are written every ``checkpoint_interval`` iterations and, in
    any case, as ``final.ckpt`` after the last iteration.
    """
    trainer = Trainer(cfg, demos)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log_path = os.path.join(out_dir, "log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for _ in range(cfg.iterations):
            row = trainer.iterate()
            writer.writerow([_fmt(row[k]) for k in LOG_COLUMNS])
            fh.flush()
            if trainer.iteration % cfg.checkpoint_interval == 0:
                save_checkpoint(trainer.checkpoint(), os.path.join(out_dir, checkpoint_name(trainer.iteration)))
            if progress is not None:
                progress(row)
    save_checkpoint(trainer.checkpoint(), os.path.join(out_dir, "final.ckpt"))
    return trainer
