"""44-feature observation vector.

Layout: six 7-feature blocks ``[ego, V0, V1, V2, V3, V4]`` followed by two
ego-only features ``[target_lane_index, direction]``.  Each block is::

    [lon_pos, lat_pos, lon_speed, lat_speed, lon_accel, lane_index, present]

``lon_pos`` is absolute for the ego block and relative to the ego for the
others.  Absent vehicles are encoded as ``[100, 0, 0, 0, 0, -1, 0]``.
"""

from __future__ import annotations

import numpy as np

from .gaps import GapAssignment, identify_gaps

OBS_DIM = 44
BLOCK = 7
N_BLOCKS = 6
ABSENT_BLOCK = np.array([100.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0])

_block_scale = np.array([50.0, 3.6, 30.0, 1.5, 3.0, 2.0, 1.0])
_ego_scale = np.array([500.0, 3.6, 30.0, 1.5, 3.0, 2.0, 1.0])
FEATURE_SCALE = np.concatenate([_ego_scale] + [_block_scale] * 5 + [np.array([2.0, 1.0])])
"""Fixed per-feature divisors that bring observations to roughly unit range."""


def build_observation(world, gaps: GapAssignment = None) -> np.ndarray:
    if gaps is None:
        gaps = identify_gaps(world)
    ego = world.ego
    t = world.traffic
    lane_width = world.config.lane_width
    obs = np.empty(OBS_DIM)
    obs[0:BLOCK] = (ego.lon_pos, ego.lat_pos, ego.lon_speed, ego.lat_speed, ego.lon_accel,
                    ego.lane_index, 1.0)
    for k, i in enumerate(gaps.index):
        s = BLOCK * (k + 1)
        if i is None:
            obs[s:s + BLOCK] = ABSENT_BLOCK
        else:
            lane = t.lane[i]
            obs[s:s + BLOCK] = (t.pos[i] - ego.lon_pos, (lane - 1) * lane_width, t.speed[i], 0.0,
                                t.accel[i], lane, 1.0)
    obs[42] = world.ego_target_lane
    obs[43] = world.direction
    return obs


def scale_observations(obs) -> np.ndarray:
    return np.asarray(obs, dtype=np.float64) / FEATURE_SCALE
