"""Demonstration datasets and their JSON-lines file format.

The first line of a ``demos.jsonl`` file is a header object
``{"format": "augairl-demos", "version": 1, "metadata": {...}}``.  Every
following line is one decision record::

    {"episode": int, "t": int, "obs": [44 floats], "action": int,
     "events": [4 ints], "done": bool}

Records of one trajectory are contiguous and in tick order.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .expert import Trajectory
from .sim.observation import OBS_DIM

FORMAT_NAME = "augairl-demos"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed demonstration file; ``line`` is 1-based (0 for whole-file problems)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
        self.message = message


def config_hash(*configs) -> str:
    payload = []
    for c in configs:
        payload.append(c.to_dict() if hasattr(c, "to_dict") else asdict(c))
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DemoDataset:
    trajectories: List[Trajectory] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.metadata = dict(self.metadata)
        self.metadata.setdefault("count", len(self.trajectories))
        if self.metadata["count"] != len(self.trajectories):
            raise ValueError("metadata count does not match the number of trajectories")

    def __len__(self):
        return len(self.trajectories)

    def __eq__(self, other):
        if not isinstance(other, DemoDataset):
            return NotImplemented
        return self.metadata == other.metadata and self.trajectories == other.trajectories

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def arrays(self):
        """Stacked ``(observations, actions, events)`` over all trajectories."""
        if not self.trajectories:
            return np.zeros((0, OBS_DIM)), np.zeros(0, dtype=np.int64), np.zeros((0, 4), dtype=np.int64)
        return (np.concatenate([t.observations for t in self.trajectories]),
                np.concatenate([t.actions for t in self.trajectories]),
                np.concatenate([t.events for t in self.trajectories]))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for t in self.trajectories:
            for arr in (t.observations, t.actions, t.events, t.dones):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _lines(ds: DemoDataset):
    yield json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION, "metadata": ds.metadata},
                     sort_keys=True)
    for traj in ds.trajectories:
        for t in range(len(traj)):
            yield json.dumps({"episode": traj.episode_id, "t": t,
                              "obs": traj.observations[t].tolist(),
                              "action": int(traj.actions[t]),
                              "events": traj.events[t].tolist(),
                              "done": bool(traj.dones[t])})


def save_dataset(ds: DemoDataset, path) -> None:
    """Write ``ds`` atomically (temporary file in the same directory, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".demos-", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            for line in _lines(ds):
                fh.write(line)
                fh.write("\n")
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_record(rec, lineno):
    if not isinstance(rec, dict):
        raise DatasetFormatError(lineno, "record is not a JSON object")
    for key in ("episode", "t", "obs", "action", "events", "done"):
        if key not in rec:
            raise DatasetFormatError(lineno, f"missing field {key!r}")
    obs = rec["obs"]
    if not isinstance(obs, list) or len(obs) != OBS_DIM:
        raise DatasetFormatError(lineno, f"obs must be a list of {OBS_DIM} numbers")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obs):
        raise DatasetFormatError(lineno, "obs contains a non-numeric value")
    if not isinstance(rec["action"], int) or not 0 <= rec["action"] <= 4:
        raise DatasetFormatError(lineno, "action must be an integer in 0..4")
    ev = rec["events"]
    if not isinstance(ev, list) or len(ev) != 4 or any(v not in (0, 1) for v in ev):
        raise DatasetFormatError(lineno, "events must be four 0/1 flags")
    if not isinstance(rec["done"], bool):
        raise DatasetFormatError(lineno, "done must be a boolean")


def load_dataset(path) -> DemoDataset:
    """Parse a demonstration file; any defect raises :class:`DatasetFormatError`."""
    with open(path) as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        raise DatasetFormatError(len(lines), "file does not end with a newline (truncated?)")
    if not lines:
        raise DatasetFormatError(1, "missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(1, f"invalid JSON: {exc.msg}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise DatasetFormatError(1, "not a demonstration file header")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(1, f"unsupported version {header.get('version')!r}")
    meta = header.get("metadata")
    if not isinstance(meta, dict) or not isinstance(meta.get("count"), int):
        raise DatasetFormatError(1, "header metadata needs an integer count")

    trajectories: List[Trajectory] = []
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(lineno, f"invalid JSON: {exc.msg}") from None
        _check_record(rec, lineno)
        if current is None:
            if rec["t"] != 0:
                raise DatasetFormatError(lineno, "trajectory does not start at t = 0")
            current = {"episode": rec["episode"], "obs": [], "action": [], "events": [], "done": []}
        elif rec["episode"] != current["episode"] or rec["t"] != len(current["action"]):
            raise DatasetFormatError(lineno, "record out of order inside a trajectory")
        for key in ("obs", "action", "events", "done"):
            current[key].append(rec[key])
        if rec["done"]:
            trajectories.append(Trajectory(
                episode_id=current["episode"], observations=np.array(current["obs"], dtype=np.float64),
                actions=np.array(current["action"], dtype=np.int64),
                events=np.array(current["events"], dtype=np.int64),
                dones=np.array(current["done"], dtype=bool)))
            current = None
    if current is not None:
        raise DatasetFormatError(len(lines), "last trajectory has no terminal record")
    if len(trajectories) != meta["count"]:
        raise DatasetFormatError(1, f"header count {meta['count']} but file holds {len(trajectories)} trajectories")
    return DemoDataset(trajectories=trajectories, metadata=meta)
