"""Three-lane highway segment with IDM traffic and a lane-changing ego vehicle.

Lateral coordinates are measured from the road centre line: lane ``k`` has its
centre at ``(k - 1) * lane_width`` so the middle lane (index 1) sits at 0.
Longitudinal positions refer to the vehicle centre.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .gaps import gap_target, identify_gaps
from .controllers import (IdmParams, PidGains, PidState, SlidingModeParams, idm_acceleration_raw,
                          pid_lateral)

KMH = 1.0 / 3.6
# cap on the position error fed to the gap-positioning controller; bounds the
# relative approach speed toward a gap to this many m/s on the sliding surface
GAP_POSITION_ERROR_CAP = 5.0
N_ACTIONS = 5

# action -> (target gap, lateral move); a4 keeps the lane behind the current leader
ACTION_TABLE = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (2, 0), 4: (3, 0)}


class Phase(str, Enum):
    PRE_LATERAL = "pre_lateral"
    LATERAL = "lateral_in_progress"
    COMPLETED = "completed"
    RETURNING = "aborted_returning"


class SimulationError(RuntimeError):
    pass


@dataclass
class VehicleState:
    id: int
    lon_pos: float
    lat_pos: float
    lon_speed: float
    lat_speed: float = 0.0
    lon_accel: float = 0.0
    lane_index: int = 1
    desired_speed: float = 28.0
    desired_time_gap: float = 1.5
    length: float = 4.5
    width: float = 1.8
    spawn_time_gap: float = 0.0
    yields: bool = False


@dataclass(frozen=True)
class TrafficConfig:
    lane_count: int = 3
    lane_width: float = 3.6
    segment_length: float = 500.0
    lookahead: float = 250.0
    init_speed_range: Tuple[float, float] = (65 * KMH, 80 * KMH)
    desired_speed_range: Tuple[float, float] = (95 * KMH, 110 * KMH)
    time_gap_range: Tuple[float, float] = (1.0, 3.0)
    desired_time_gap_range: Tuple[float, float] = (1.0, 2.0)
    lane_density: Tuple[float, ...] = (1.0, 1.0, 1.0)
    density_jitter: float = 0.25
    yield_probability: float = 0.5
    yield_overlap: float = 0.25
    yield_lat_speed: float = 0.1
    ego_start: float = 50.0
    max_steps: int = 200
    dt: float = 0.1
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    success_tolerance: float = 0.3
    margin_time: float = 0.5
    margin_floor: float = 2.0
    ego_accel_lag: float = 0.3

    def validate(self) -> None:
        if self.lane_count != 3:
            raise ValueError("only three-lane segments are supported")
        for name in ("init_speed_range", "desired_speed_range", "time_gap_range",
                     "desired_time_gap_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
        if len(self.lane_density) != self.lane_count:
            raise ValueError("lane_density needs one multiplier per lane")
        if any(d < 0 for d in self.lane_density):
            raise ValueError("lane densities must be nonnegative")
        if not 0 <= self.density_jitter < 1:
            raise ValueError("density_jitter must lie in [0, 1)")
        densest = max(self.lane_density) * (1.0 + self.density_jitter)
        if densest > 0:
            tightest = self.time_gap_range[0] / densest * self.init_speed_range[0]
            if tightest < IdmParams().s0:
                raise ValueError(
                    f"lane_density too high: spawn gaps down to {tightest:.2f} m overlap the jam distance")
        if self.segment_length <= self.ego_start:
            raise ValueError("segment_length must exceed ego_start")
        if self.max_steps < 1 or self.dt <= 0:
            raise ValueError("max_steps and dt must be positive")

    def lane_center(self, lane: int) -> float:
        return (lane - 1) * self.lane_width

    def lane_of(self, lat: float) -> int:
        lane = int(np.floor(lat / self.lane_width + 1.5))
        return min(max(lane, 0), self.lane_count - 1)

    @property
    def road_length(self) -> float:
        return self.segment_length + self.lookahead

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficConfig":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


@dataclass(frozen=True)
class StepOutcome:
    success: bool = False
    crash: bool = False
    margin_invasion: bool = False
    lateral_move: bool = False
    terminated: bool = False
    termination_reason: str = "none"

    @property
    def events(self) -> np.ndarray:
        return np.array([self.success, self.crash, self.margin_invasion, self.lateral_move],
                        dtype=np.int64)


class _Traffic:
    """Struct-of-arrays for the surrounding vehicles.

    Rows are kept sorted by ``(lane, pos)``.  Vehicles never change lane and
    IDM never overtakes, so the order only has to be restored after inflow.
    """

    FIELDS = ("id", "pos", "speed", "accel", "lane", "desired_speed", "time_gap",
              "length", "width", "spawn_gap", "yields")

    def __init__(self):
        self.id = np.zeros(0, dtype=np.int64)
        self.pos = np.zeros(0)
        self.speed = np.zeros(0)
        self.accel = np.zeros(0)
        self.lane = np.zeros(0, dtype=np.int64)
        self.desired_speed = np.zeros(0)
        self.time_gap = np.zeros(0)
        self.length = np.zeros(0)
        self.width = np.zeros(0)
        self.spawn_gap = np.zeros(0)
        self.yields = np.zeros(0, dtype=bool)
        self.bounds = np.zeros(4, dtype=np.int64)

    def __len__(self):
        return self.pos.size

    def append(self, rows: List[dict]):
        if not rows:
            return
        for name in self.FIELDS:
            cur = getattr(self, name)
            new = np.array([r[name] for r in rows], dtype=cur.dtype)
            setattr(self, name, np.concatenate([cur, new]))
        self._sort()

    def keep(self, mask: np.ndarray):
        for name in self.FIELDS:
            setattr(self, name, getattr(self, name)[mask])
        self._reindex()

    def _sort(self):
        order = np.lexsort((self.pos, self.lane))
        for name in self.FIELDS:
            setattr(self, name, getattr(self, name)[order])
        self._reindex()

    def _reindex(self):
        self.bounds = np.searchsorted(self.lane, np.arange(4))

    def lane_slice(self, lane: int) -> Tuple[int, int]:
        return int(self.bounds[lane]), int(self.bounds[lane + 1])

    def neighbours(self, lane: int, pos: float) -> Tuple[Optional[int], Optional[int]]:
        """Indices of the nearest vehicle strictly behind and at-or-ahead of ``pos``."""
        lo, hi = self.lane_slice(lane)
        k = lo + int(np.searchsorted(self.pos[lo:hi], pos, side="left"))
        return (k - 1 if k - 1 >= lo else None), (k if k < hi else None)

    def copy(self) -> "_Traffic":
        t = _Traffic.__new__(_Traffic)
        for name in self.FIELDS:
            setattr(t, name, getattr(self, name).copy())
        t.bounds = self.bounds.copy()
        return t


@dataclass
class WorldState:
    config: TrafficConfig
    ego: VehicleState
    traffic: _Traffic
    rng: np.random.Generator
    ego_target_lane: int
    ego_origin_lane: int
    direction: int
    lane_density: np.ndarray
    spawn_gaps: np.ndarray
    next_id: int
    time_step: int = 0
    maneuver_phase: Phase = Phase.PRE_LATERAL
    tick_phase: Phase = Phase.PRE_LATERAL
    pid: PidState = field(default_factory=PidState)
    lateral_reference: float = 0.0
    current_span: int = 0
    changing_steps: int = 0
    aborted_steps: int = 0
    ego_jerk: float = 0.0
    terminated: bool = False
    termination_reason: str = "none"
    idm: IdmParams = IdmParams()
    pid_gains: PidGains = PidGains()
    smc: SlidingModeParams = SlidingModeParams()

    # -- views -----------------------------------------------------------
    def _vehicle_at(self, i: int) -> VehicleState:
        t = self.traffic
        return VehicleState(id=int(t.id[i]), lon_pos=float(t.pos[i]),
                            lat_pos=self.config.lane_center(int(t.lane[i])),
                            lon_speed=float(t.speed[i]), lat_speed=0.0,
                            lon_accel=float(t.accel[i]), lane_index=int(t.lane[i]),
                            desired_speed=float(t.desired_speed[i]),
                            desired_time_gap=float(t.time_gap[i]), length=float(t.length[i]),
                            width=float(t.width[i]), spawn_time_gap=float(t.spawn_gap[i]),
                            yields=bool(t.yields[i]))

    @property
    def others(self) -> List[VehicleState]:
        return [self._vehicle_at(i) for i in range(len(self.traffic))]

    def vehicle(self, vid: int) -> VehicleState:
        if vid == self.ego.id:
            return self.ego
        return self._vehicle_at(self.index_of(vid))

    def index_of(self, vid: int) -> int:
        idx = np.flatnonzero(self.traffic.id == vid)
        if idx.size == 0:
            raise KeyError(vid)
        return int(idx[0])

    def copy(self) -> "WorldState":
        new = copy.copy(self)
        new.ego = copy.copy(self.ego)
        new.traffic = self.traffic.copy()
        new.rng = np.random.Generator(type(self.rng.bit_generator)())
        new.rng.bit_generator.state = self.rng.bit_generator.state
        new.pid = copy.copy(self.pid)
        new.lane_density = self.lane_density.copy()
        new.spawn_gaps = self.spawn_gaps.copy()
        return new

    def to_dict(self) -> dict:
        t = self.traffic
        return {
            "time_step": self.time_step,
            "ego": asdict(self.ego),
            "traffic": {name: getattr(t, name).tolist() for name in _Traffic.FIELDS},
            "ego_target_lane": self.ego_target_lane,
            "ego_origin_lane": self.ego_origin_lane,
            "direction": self.direction,
            "lane_density": self.lane_density.tolist(),
            "spawn_gaps": self.spawn_gaps.tolist(),
            "next_id": self.next_id,
            "maneuver_phase": self.maneuver_phase.value,
            "pid": asdict(self.pid),
            "counters": [self.current_span, self.changing_steps, self.aborted_steps],
            "terminated": self.terminated,
            "termination_reason": self.termination_reason,
            "rng": self.rng.bit_generator.state,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    # -- geometry --------------------------------------------------------
    def lane_overlap(self, lane: int) -> float:
        """Fraction of the ego's width inside ``lane``."""
        cfg = self.config
        half = 0.5 * self.ego.width
        c = (lane - 1) * cfg.lane_width
        inter = (min(self.ego.lat_pos + half, c + 0.5 * cfg.lane_width)
                 - max(self.ego.lat_pos - half, c - 0.5 * cfg.lane_width))
        return max(inter, 0.0) / self.ego.width

    def _overlapping_lanes(self):
        cfg = self.config
        e = self.ego
        reach = 0.5 * (cfg.vehicle_width + e.width)
        return [lane for lane in range(cfg.lane_count)
                if abs((lane - 1) * cfg.lane_width - e.lat_pos) < reach]

    def _nearby(self):
        """Indices of the vehicles directly behind/ahead of the ego in laterally overlapping lanes."""
        t = self.traffic
        out = []
        for lane in self._overlapping_lanes():
            for i in t.neighbours(lane, self.ego.lon_pos):
                if i is not None:
                    out.append(i)
        return out

    def ego_collisions(self) -> np.ndarray:
        """Boolean mask over traffic rows whose rectangle overlaps the ego's."""
        t = self.traffic
        e = self.ego
        hit = np.zeros(len(t), dtype=bool)
        for i in self._nearby():
            if (abs(t.pos[i] - e.lon_pos) < 0.5 * (t.length[i] + e.length)
                    and abs((t.lane[i] - 1) * self.config.lane_width - e.lat_pos)
                    < 0.5 * (t.width[i] + e.width)):
                hit[i] = True
        return hit

    def margin_threshold(self) -> float:
        return max(self.config.margin_floor, self.config.margin_time * self.ego.lon_speed)

    def min_lateral_overlap_gap(self) -> float:
        """Smallest bumper gap between the ego and any laterally overlapping vehicle."""
        t = self.traffic
        e = self.ego
        best = np.inf
        for i in self._nearby():
            g = abs(t.pos[i] - e.lon_pos) - 0.5 * (t.length[i] + e.length)
            best = min(best, g)
        return float(best)


def _uniform(rng, bounds):
    return float(rng.uniform(bounds[0], bounds[1]))


def _new_vehicle(rng, cfg, vid, pos, lane, speed, spawn_gap):
    return {
        "id": vid, "pos": pos, "speed": speed, "accel": 0.0, "lane": lane,
        "desired_speed": _uniform(rng, cfg.desired_speed_range),
        "time_gap": _uniform(rng, cfg.desired_time_gap_range),
        "length": cfg.vehicle_length, "width": cfg.vehicle_width,
        "spawn_gap": float(spawn_gap), "yields": bool(rng.random() < cfg.yield_probability),
    }


def reset(config: TrafficConfig, seed: int) -> WorldState:
    """Sample a fresh episode: ego on the middle lane with a left or right request."""
    config.validate()
    rng = np.random.default_rng(seed)
    cfg = config
    direction = -1 if rng.random() < 0.5 else 1
    jitter = rng.uniform(1.0 - cfg.density_jitter, 1.0 + cfg.density_jitter, size=cfg.lane_count)
    density = np.asarray(cfg.lane_density, dtype=np.float64) * jitter

    ego = VehicleState(id=0, lon_pos=cfg.ego_start, lat_pos=0.0,
                       lon_speed=_uniform(rng, cfg.init_speed_range), lane_index=1,
                       desired_speed=_uniform(rng, cfg.desired_speed_range),
                       desired_time_gap=_uniform(rng, cfg.desired_time_gap_range),
                       length=cfg.vehicle_length, width=cfg.vehicle_width)
    rows = []
    next_id = 1
    L = cfg.vehicle_length
    for lane in range(cfg.lane_count):
        m = density[lane]
        if m <= 0:
            continue
        if lane == ego.lane_index:
            # downstream of the ego
            f_front, f_speed = ego.lon_pos + 0.5 * L, ego.lon_speed
            tg = _uniform(rng, cfg.time_gap_range) / m
            ego.spawn_time_gap = float(tg)
            while True:
                rear = f_front + tg * f_speed
                if rear > cfg.road_length:
                    break
                v = _uniform(rng, cfg.init_speed_range)
                nxt_tg = _uniform(rng, cfg.time_gap_range) / m
                rows.append(_new_vehicle(rng, cfg, next_id, rear + 0.5 * L, lane, v, nxt_tg))
                next_id += 1
                f_front, f_speed, tg = rear + L, v, nxt_tg
            # upstream of the ego
            l_rear = ego.lon_pos - 0.5 * L
            while True:
                v = _uniform(rng, cfg.init_speed_range)
                tg = _uniform(rng, cfg.time_gap_range) / m
                front = l_rear - tg * v
                if front - L < 0:
                    break
                rows.append(_new_vehicle(rng, cfg, next_id, front - 0.5 * L, lane, v, tg))
                next_id += 1
                l_rear = front - L
        else:
            v = _uniform(rng, cfg.init_speed_range)
            tg = _uniform(rng, cfg.time_gap_range) / m
            rear = float(rng.uniform(0.0, tg * v))
            while rear + L <= cfg.road_length:
                nxt_tg = _uniform(rng, cfg.time_gap_range) / m
                rows.append(_new_vehicle(rng, cfg, next_id, rear + 0.5 * L, lane, v, nxt_tg))
                next_id += 1
                # the vehicle just placed follows the next one at its own headway
                rear = rear + L + nxt_tg * v
                v = _uniform(rng, cfg.init_speed_range)
    traffic = _Traffic()
    traffic.append(rows)
    # pending upstream inflow per lane: (time gap, speed) of the next vehicle to enter
    spawn_gaps = np.array([[_uniform(rng, cfg.time_gap_range), _uniform(rng, cfg.init_speed_range)]
                           for _ in range(cfg.lane_count)])
    target = ego.lane_index + direction
    world = WorldState(config=cfg, ego=ego, traffic=traffic, rng=rng, ego_target_lane=target,
                       ego_origin_lane=ego.lane_index, direction=direction, lane_density=density,
                       spawn_gaps=spawn_gaps, next_id=next_id)
    world.lateral_reference = cfg.lane_center(ego.lane_index)
    return world


# -- dynamics ------------------------------------------------------------------

def _ego_obstacle_mode(world: WorldState, lane: int) -> int:
    """0: traffic in ``lane`` ignores the ego, 1: all of it reacts, 2: only yielders react."""
    overlap = world.lane_overlap(lane)
    if overlap <= 0.0:
        return 0
    if overlap >= 0.5:
        return 1
    ego = world.ego
    cfg = world.config
    side = 1.0 if cfg.lane_center(lane) > ego.lat_pos else -1.0
    toward = side * ego.lat_speed
    if toward <= 0.0:
        return 1
    if overlap > cfg.yield_overlap and toward > cfg.yield_lat_speed:
        return 2
    return 0


def traffic_accelerations(world: WorldState) -> np.ndarray:
    t = world.traffic
    ego = world.ego
    n = len(t)
    if n == 0:
        return np.zeros(0)
    half = 0.5 * t.length
    gap = np.full(n, np.inf)
    dv = np.zeros(n)
    same = t.lane[1:] == t.lane[:-1]
    gap[:-1] = np.where(same, (t.pos[1:] - half[1:]) - (t.pos[:-1] + half[:-1]), np.inf)
    dv[:-1] = np.where(same, t.speed[:-1] - t.speed[1:], 0.0)
    ego_rear = ego.lon_pos - 0.5 * ego.length
    for lane in range(world.config.lane_count):
        mode = _ego_obstacle_mode(world, lane)
        if not mode:
            continue
        j, _ = t.neighbours(lane, ego.lon_pos)
        if j is None or (mode == 2 and not t.yields[j]):
            continue
        g = ego_rear - (t.pos[j] + half[j])
        if g < gap[j]:
            gap[j] = g
            dv[j] = t.speed[j] - ego.lon_speed
    return idm_acceleration_raw(t.speed, t.desired_speed, t.time_gap, gap, dv, world.idm)


def _smc(pos_err: float, speed_err: float, p: SlidingModeParams) -> float:
    s = (pos_err + p.lam * speed_err) / p.phi
    s = min(max(s, -1.0), 1.0)
    return min(max(p.k * s, -p.b_max), p.a_max)


def _follow_command(world: WorldState, i: int, time_gap: float) -> float:
    t = world.traffic
    ego = world.ego
    gap = (t.pos[i] - 0.5 * t.length[i]) - (ego.lon_pos + 0.5 * ego.length)
    return _smc(gap - time_gap * ego.lon_speed, t.speed[i] - ego.lon_speed, world.smc)


def ego_command(world: WorldState, action: int, gaps=None) -> float:
    """Longitudinal acceleration command for ``action``.

    The gap-positioning reference of the action is combined (by minimum) with
    desired-speed tracking and time-gap following of whichever leaders the ego
    physically overlaps.
    """
    ego = world.ego
    if gaps is None:
        gaps = identify_gaps(world)
    cmd = _smc(0.0, ego.desired_speed - ego.lon_speed, world.smc)
    gap_index, _ = ACTION_TABLE[int(action)]
    if gap_index < 3:
        ref = gap_target(world, gaps, gap_index)
        if ref is not None:
            err = min(max(ref[0] - ego.lon_pos, -GAP_POSITION_ERROR_CAP), GAP_POSITION_ERROR_CAP)
            cmd = min(cmd, _smc(err, ref[1] - ego.lon_speed, world.smc))
    v4 = gaps.index[4]
    if v4 is not None and world.lane_overlap(world.ego_origin_lane) > 0.0:
        cmd = min(cmd, _follow_command(world, v4, ego.desired_time_gap))
    v1 = gaps.index[1]
    if v1 is not None and world.lane_overlap(world.ego_target_lane) > 0.0:
        cmd = min(cmd, _follow_command(world, v1, world.config.margin_time))
    return float(cmd)


def _advance(pos, speed, acc, dt):
    """Constant-acceleration update that stops at zero speed instead of reversing."""
    new_speed = speed + acc * dt
    disp = speed * dt + 0.5 * acc * dt * dt
    if np.ndim(new_speed) == 0:
        if new_speed < 0.0:
            disp = speed * speed / (2.0 * -acc)
            new_speed = 0.0
        return pos + disp, new_speed
    stopping = new_speed < 0.0
    if stopping.any():
        disp = np.where(stopping, speed * speed / (2.0 * np.maximum(-acc, 1e-12)), disp)
        new_speed = np.where(stopping, 0.0, new_speed)
    return pos + disp, new_speed


def _spawn_and_prune(world: WorldState) -> None:
    cfg = world.config
    t = world.traffic
    if len(t) and (t.pos - 0.5 * t.length > cfg.road_length).any():
        t.keep(t.pos - 0.5 * t.length <= cfg.road_length)
    ego = world.ego
    rows = []
    for lane in range(cfg.lane_count):
        m = world.lane_density[lane]
        if m <= 0:
            continue
        lo, hi = t.lane_slice(lane)
        upstream = t.pos[lo] - 0.5 * t.length[lo] if hi > lo else np.inf
        if ego.lane_index == lane:
            upstream = min(upstream, ego.lon_pos - 0.5 * ego.length)
        tg, v = world.spawn_gaps[lane]
        tg = tg / m
        if upstream - cfg.vehicle_length >= tg * v:
            rows.append(_new_vehicle(world.rng, cfg, world.next_id, 0.5 * cfg.vehicle_length,
                                     lane, v, tg))
            world.next_id += 1
            world.spawn_gaps[lane] = (_uniform(world.rng, cfg.time_gap_range),
                                      _uniform(world.rng, cfg.init_speed_range))
    t.append(rows)


def _events(world: WorldState, prev_phase: Phase, crash: Optional[bool] = None
            ) -> Tuple[bool, bool, bool, bool]:
    if crash is None:
        crash = bool(world.ego_collisions().any())
    success = (world.maneuver_phase == Phase.COMPLETED and prev_phase != Phase.COMPLETED
               and not crash)
    margin = world.min_lateral_overlap_gap() < world.margin_threshold()
    lateral = world.tick_phase == Phase.LATERAL
    return success, crash, bool(margin), lateral


def detect_events(prev: WorldState, next_world: WorldState) -> dict:
    """Semantic event flags for the transition ``prev -> next_world``."""
    success, crash, margin, lateral = _events(next_world, prev.maneuver_phase)
    return {"success": success, "crash": crash, "margin_invasion": margin, "lateral_move": lateral}


def step_inplace(world: WorldState, action: int, gaps=None) -> StepOutcome:
    """Advance ``world`` by one decision tick under ``action`` (mutates ``world``)."""
    if world.terminated:
        raise SimulationError("cannot step a terminated world; call reset()")
    action = int(action)
    if action not in ACTION_TABLE:
        raise ValueError(f"action must be in 0..{N_ACTIONS - 1}, got {action}")
    cfg = world.config
    dt = cfg.dt
    ego = world.ego
    prev_phase = world.maneuver_phase

    phase = prev_phase
    if action == 2:
        if phase in (Phase.PRE_LATERAL, Phase.RETURNING):
            phase = Phase.LATERAL
    elif phase == Phase.LATERAL:
        phase = Phase.RETURNING
        world.aborted_steps += world.current_span
        world.current_span = 0
    world.maneuver_phase = phase
    world.tick_phase = phase

    if gaps is None:
        gaps = identify_gaps(world)
    cmd = ego_command(world, action, gaps)
    reference = cfg.lane_center(world.ego_target_lane if phase == Phase.LATERAL
                                else world.ego_origin_lane)
    if reference != world.lateral_reference:
        world.pid.reset()
        world.lateral_reference = reference
    lat_cmd = pid_lateral(ego.lat_pos, reference, world.pid, dt, world.pid_gains)
    traffic_acc = traffic_accelerations(world)

    # ego: first-order actuator lag on the longitudinal command
    new_acc = ego.lon_accel + (cmd - ego.lon_accel) * min(dt / cfg.ego_accel_lag, 1.0)
    world.ego_jerk = (new_acc - ego.lon_accel) / dt
    ego.lon_pos, ego.lon_speed = _advance(ego.lon_pos, ego.lon_speed, new_acc, dt)
    ego.lon_accel = new_acc
    ego.lat_pos = ego.lat_pos + lat_cmd * dt
    ego.lat_speed = lat_cmd
    ego.lane_index = cfg.lane_of(ego.lat_pos)

    t = world.traffic
    t.pos, t.speed = _advance(t.pos, t.speed, traffic_acc, dt)
    t.accel = traffic_acc
    _spawn_and_prune(world)

    if phase == Phase.LATERAL:
        world.current_span += 1
    crash = bool(world.ego_collisions().any())
    if not crash:
        if (phase == Phase.LATERAL
                and abs(ego.lat_pos - cfg.lane_center(world.ego_target_lane)) < cfg.success_tolerance):
            world.maneuver_phase = Phase.COMPLETED
        elif (phase == Phase.RETURNING
              and abs(ego.lat_pos - cfg.lane_center(world.ego_origin_lane)) < cfg.success_tolerance):
            world.maneuver_phase = Phase.PRE_LATERAL
    world.time_step += 1

    success, crash, margin, lateral = _events(world, prev_phase, crash)
    reason = "none"
    if crash:
        reason = "crash"
    elif success:
        reason = "success"
    elif world.time_step >= cfg.max_steps or ego.lon_pos >= cfg.segment_length:
        reason = "timeout"
    if reason != "none":
        world.terminated = True
        world.termination_reason = reason
        world.changing_steps = world.current_span
    return StepOutcome(success=success, crash=crash, margin_invasion=margin, lateral_move=lateral,
                       terminated=reason != "none", termination_reason=reason)


def step(world: WorldState, action: int):
    """Pure step: returns ``(next_world, outcome, observation)`` leaving ``world`` untouched."""
    from .observation import build_observation

    nxt = world.copy()
    outcome = step_inplace(nxt, action)
    return nxt, outcome, build_observation(nxt)
