"""Rule-based lane-change expert with full knowledge of the simulator.

Rules are applied in priority order:

* safety: a lateral move is only started (or continued) when an exact
  rollout of the world under continued lateral motion keeps every bumper gap
  to laterally overlapping vehicles above ``safety_buffer`` and a kinematic
  extrapolation of the merge gap stays open until the ego reaches the target
  lane centre;
* comfort: a lateral move is only started when the predicted ego jerk stays
  below ``jerk_threshold`` over the prediction horizon;
* efficiency: the target gap with the shortest estimated completion time is
  chosen.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .sim import Phase, TrafficConfig, identify_gaps, reset, step_inplace
from .seeding import DEMO, episode_seed
from .sim.gaps import gap_interval, gap_speed
from .sim.observation import build_observation

KEEP_ACTION = {0: 0, 1: 1, 2: 3}
LATERAL_EFFECTIVE_SPEED = 1.0  # m/s, mean lateral speed of the PID over a full traverse


@dataclass(frozen=True)
class ExpertConfig:
    jerk_threshold: float = 2.0     # m/s^3
    safety_buffer: float = 2.0      # m
    prediction_horizon: int = 5     # ticks
    reposition_accel: float = 1.5   # m/s^2, relative acceleration used for gap alignment

    def __post_init__(self):
        if not (self.jerk_threshold > 0 and self.safety_buffer > 0 and self.prediction_horizon > 0
                and self.reposition_accel > 0):
            raise ValueError("expert thresholds must all be positive")


def _lateral_time(world) -> float:
    """Time for the PID to bring the ego from its position to the target lane centre."""
    remaining = abs(world.config.lane_center(world.ego_target_lane) - world.ego.lat_pos)
    return remaining / LATERAL_EFFECTIVE_SPEED


def estimate_completion_time(world, gap_index: int, accel: float = 1.5,
                             max_lat_speed: Optional[float] = None) -> float:
    """Seconds to align with target-lane gap ``gap_index`` and then cross over.

    Alignment is timed with constant relative acceleration ``accel`` from the
    current relative speed toward the gap's admissible interval; the lateral
    part is the lane width at ``max_lat_speed``.  Gaps that do not exist, are
    too short for the ego plus clearance, or lie beyond the point the ego can
    reach behind its current-lane leader return ``inf``; so does gap 3 since
    staying in lane never completes the change.
    """
    if gap_index not in (0, 1, 2, 3):
        raise ValueError(f"gap_index must be in 0..3, got {gap_index}")
    if max_lat_speed is None:
        max_lat_speed = world.pid_gains.max_lat_speed
    lateral = world.config.lane_width / max_lat_speed
    if gap_index == 3:
        return math.inf
    gaps = identify_gaps(world)
    if not gaps.gap_exists(gap_index):
        return math.inf
    lo, hi = gap_interval(world, gaps, gap_index)
    if lo > hi:
        return math.inf
    ego = world.ego
    v4 = gaps.index[4]
    if v4 is not None:
        t = world.traffic
        reachable = (t.pos[v4] - 0.5 * (t.length[v4] + ego.length)
                     - ego.desired_time_gap * ego.lon_speed)
        if lo > reachable:
            return math.inf
    if ego.lon_pos < lo:
        d = lo - ego.lon_pos
        closing = ego.lon_speed - gap_speed(world, gaps, gap_index)
    elif ego.lon_pos > hi:
        d = ego.lon_pos - hi
        closing = gap_speed(world, gaps, gap_index) - ego.lon_speed
    else:
        return lateral
    # d = closing * t + accel * t^2 / 2
    t = (-closing + math.sqrt(closing * closing + 2.0 * accel * d)) / accel
    return t + lateral


def _extrapolated_gaps_ok(world, gaps, buffer: float, horizon: float) -> bool:
    """Bumper gaps to V1 and V2 extrapolated at constant speed stay above ``buffer``."""
    t = world.traffic
    ego = world.ego
    times = np.linspace(0.0, horizon, 11)
    ego_pos = ego.lon_pos + ego.lon_speed * times
    for i, ahead in ((gaps.index[1], True), (gaps.index[2], False)):
        if i is None:
            continue
        pos = t.pos[i] + t.speed[i] * times
        reach = 0.5 * (t.length[i] + ego.length)
        gap = (pos - ego_pos if ahead else ego_pos - pos) - reach
        if gap.min() <= buffer:
            return False
    return True


def lateral_move_admissible(world, cfg: ExpertConfig = ExpertConfig(), check_comfort: bool = True) -> bool:
    """Whether selecting a2 now passes the safety (and optionally comfort) rules."""
    gaps = identify_gaps(world)
    if not _extrapolated_gaps_ok(world, gaps, cfg.safety_buffer,
                                 _lateral_time(world)):
        return False
    sim = world.copy()
    for _ in range(cfg.prediction_horizon):
        out = step_inplace(sim, 2)
        if out.crash:
            return False
        if sim.min_lateral_overlap_gap() <= cfg.safety_buffer:
            return False
        if check_comfort and abs(sim.ego_jerk) >= cfg.jerk_threshold:
            return False
        if out.terminated:
            break
    return True


def expert_action(world, cfg: ExpertConfig = ExpertConfig()) -> int:
    """Action chosen by the rule-based expert in ``world``."""
    if world.terminated:
        raise ValueError("expert_action needs a live world")
    if world.maneuver_phase == Phase.LATERAL:
        # once committed, only safety can stop the move
        if lateral_move_admissible(world, cfg, check_comfort=False):
            return 2
        return 1
    # a safe and comfortable move into the adjacent gap is never slower than repositioning
    if lateral_move_admissible(world, cfg):
        return 2
    times = [estimate_completion_time(world, k, cfg.reposition_accel) for k in range(3)]
    best = int(np.argmin(times))
    if not math.isfinite(times[best]):
        return 4
    return KEEP_ACTION[best]


@dataclass
class Trajectory:
    episode_id: int
    observations: np.ndarray   # (T, 44)
    actions: np.ndarray        # (T,)
    events: np.ndarray         # (T, 4)
    dones: np.ndarray          # (T,)
    termination_reason: str = "success"

    def __len__(self):
        return len(self.actions)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.episode_id == other.episode_id
                and np.array_equal(self.observations, other.observations)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.events, other.events)
                and np.array_equal(self.dones, other.dones))


def run_expert_episode(config: TrafficConfig, seed: int, cfg: ExpertConfig = ExpertConfig(),
                       episode_id: int = 0):
    """Roll out the expert for one episode; returns ``(trajectory, world)``."""
    world = reset(config, seed)
    obs, acts, evs, dones = [], [], [], []
    while not world.terminated:
        obs.append(build_observation(world))
        a = expert_action(world, cfg)
        out = step_inplace(world, a)
        acts.append(a)
        evs.append(out.events)
        dones.append(out.terminated)
    traj = Trajectory(episode_id=episode_id, observations=np.array(obs), actions=np.array(acts, dtype=np.int64),
                      events=np.array(evs, dtype=np.int64), dones=np.array(dones, dtype=bool),
                      termination_reason=world.termination_reason)
    return traj, world


class ExpertRegressionError(RuntimeError):
    """The expert failed on too many episodes to be trusted as a demonstrator."""


MIN_EXPERT_SUCCESS = 0.95


def collect_demos(n_episodes: int, seed: int, config: TrafficConfig = TrafficConfig(),
                  expert_config: ExpertConfig = ExpertConfig()):
    """Run the expert on ``n_episodes`` seeded episodes and keep the successful ones."""
    from .demos import DemoDataset, config_hash

    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    kept = []
    for i in range(n_episodes):
        traj, world = run_expert_episode(config, episode_seed(seed, i, DEMO), expert_config, episode_id=i)
        if world.termination_reason == "success":
            kept.append(traj)
    ratio = len(kept) / n_episodes
    if ratio < MIN_EXPERT_SUCCESS:
        raise ExpertRegressionError(
            f"expert succeeded on {len(kept)}/{n_episodes} episodes (< {MIN_EXPERT_SUCCESS:.0%})")
    meta = {"seed": int(seed), "config_hash": config_hash(config, expert_config), "count": len(kept),
            "episodes_run": int(n_episodes), "traffic_config": config.to_dict(),
            "expert_config": asdict(expert_config)}
    return DemoDataset(trajectories=kept, metadata=meta)
