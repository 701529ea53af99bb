"""Relevant-vehicle selection around the ego (V0..V4) and gap geometry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class GapAssignment:
    """Vehicle ids for V0..V4 (``None`` when absent) plus traffic-array indices.

    Gaps run front to back on the target lane: gap 0 is ``(V1, V0)``, gap 1 is
    ``(V2, V1)`` and gap 2 is ``(V3, V2)`` as ``(rear, front)`` pairs.  Gap 3 is
    the space behind the current-lane leader V4.
    """

    ids: Tuple[Optional[int], ...]
    index: Tuple[Optional[int], ...]

    @property
    def v0(self): return self.ids[0]

    @property
    def v1(self): return self.ids[1]

    @property
    def v2(self): return self.ids[2]

    @property
    def v3(self): return self.ids[3]

    @property
    def v4(self): return self.ids[4]

    @property
    def gap_bounds(self) -> List[Tuple[Optional[int], Optional[int]]]:
        v = self.ids
        return [(v[1], v[0]), (v[2], v[1]), (v[3], v[2]), (None, v[4])]

    @property
    def gap_bound_index(self) -> List[Tuple[Optional[int], Optional[int]]]:
        v = self.index
        return [(v[1], v[0]), (v[2], v[1]), (v[3], v[2]), (None, v[4])]

    def gap_exists(self, k: int) -> bool:
        """Gap 0 needs V1 to exist, gap 2 needs V2; gaps 1 and 3 always exist."""
        if k == 0:
            return self.ids[1] is not None
        if k == 2:
            return self.ids[2] is not None
        return True


def identify_gaps(world) -> GapAssignment:
    t = world.traffic
    pos = world.ego.lon_pos
    idx: List[Optional[int]] = [None] * 5
    lo, hi = t.lane_slice(world.ego_target_lane)
    # a vehicle exactly alongside counts as a leader
    k = lo + int(np.searchsorted(t.pos[lo:hi], pos, side="left"))
    if k < hi:
        idx[1] = k
    if k + 1 < hi:
        idx[0] = k + 1
    if k - 1 >= lo:
        idx[2] = k - 1
    if k - 2 >= lo:
        idx[3] = k - 2
    lo, hi = t.lane_slice(world.ego_origin_lane)
    k = lo + int(np.searchsorted(t.pos[lo:hi], pos, side="right"))
    if k < hi:
        idx[4] = k
    ids = tuple(None if i is None else int(t.id[i]) for i in idx)
    return GapAssignment(ids=ids, index=tuple(idx))


def clearance(world) -> float:
    """Bumper distance the ego wants on either side of a merge slot."""
    return world.margin_threshold()


def gap_interval(world, gaps: GapAssignment, k: int) -> Tuple[float, float]:
    """Admissible range of ego centre positions inside target-lane gap ``k`` (0..2).

    Unbounded sides are returned as +-inf.  An empty interval (low > high)
    means the gap is too short for the ego plus clearance on both sides.
    """
    t = world.traffic
    ego = world.ego
    c = clearance(world)
    rear_i, front_i = gaps.gap_bound_index[k]
    lo, hi = -np.inf, np.inf
    if rear_i is not None:
        lo = t.pos[rear_i] + 0.5 * t.length[rear_i] + c + 0.5 * ego.length
    if front_i is not None:
        hi = t.pos[front_i] - 0.5 * t.length[front_i] - c - 0.5 * ego.length
    return float(lo), float(hi)


def gap_speed(world, gaps: GapAssignment, k: int) -> float:
    t = world.traffic
    speeds = [float(t.speed[i]) for i in gaps.gap_bound_index[k] if i is not None]
    if not speeds:
        return world.ego.lon_speed
    return sum(speeds) / len(speeds)


OPEN_SIDE_OFFSET = 5.0


def gap_target(world, gaps: GapAssignment, k: int) -> Optional[Tuple[float, float]]:
    """Reference ``(position, speed)`` for positioning the ego at gap ``k``.

    Returns ``None`` when the gap is unbounded on both sides (nothing to align with).
    """
    lo, hi = gap_interval(world, gaps, k)
    if np.isinf(lo) and np.isinf(hi):
        return None
    if np.isinf(lo):
        pos = hi - OPEN_SIDE_OFFSET
    elif np.isinf(hi):
        pos = lo + OPEN_SIDE_OFFSET
    else:
        pos = 0.5 * (lo + hi)
    return pos, gap_speed(world, gaps, k)
