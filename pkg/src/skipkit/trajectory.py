"""Core trajectory data model, segment sets, and JSON-lines dataset I/O.

Conventions used throughout the package:

- Step indices are 1-based (t = 1..T) in every public API and file format.
  Internal numpy arrays are 0-based; conversion happens at the boundary.
- All numeric payloads are float64; the gripper channel is a discrete
  0/1 sequence (0 = open, 1 = closed).
- Values are immutable after construction, so episodes can be processed
  in parallel without shared mutable state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    """Return a read-only float64/int view-copy of ``a``."""
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Trajectory:
    """One demonstration episode.

    actions:      (T, d) absolute control targets; the first 3 columns are
                  the end-effector translation in meters by convention.
    ee_pos:       (T, 3) end-effector translations (may equal actions[:, :3]).
    gripper:      (T,) 0/1 channel, 0 = open, 1 = closed.
    observations: (T, d_o) flat observation vectors.
    """

    id: str
    actions: np.ndarray
    ee_pos: np.ndarray
    gripper: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", _frozen(np.asarray(self.actions, dtype=np.float64)))
        object.__setattr__(self, "ee_pos", _frozen(np.asarray(self.ee_pos, dtype=np.float64)))
        object.__setattr__(self, "gripper", _frozen(np.asarray(self.gripper, dtype=np.int8)))
        object.__setattr__(
            self, "observations", _frozen(np.asarray(self.observations, dtype=np.float64))
        )
        self._validate()

    def _validate(self) -> None:
        eid = self.id
        if self.actions.ndim != 2:
            raise ValueError(f"episode {eid}: actions must be a T x d matrix")
        t = self.actions.shape[0]
        if t < 2:
            raise ValueError(f"episode {eid}: T >= 2 violated (T={t})")
        if self.actions.shape[1] < 3:
            raise ValueError(f"episode {eid}: d >= 3 violated (d={self.actions.shape[1]})")
        if self.ee_pos.shape != (t, 3):
            raise ValueError(f"episode {eid}: ee_pos must be T x 3 with T={t}")
        if self.gripper.shape != (t,):
            raise ValueError(f"episode {eid}: gripper length must equal T={t}")
        if self.observations.ndim != 2 or self.observations.shape[0] != t:
            raise ValueError(f"episode {eid}: observations length must equal T={t}")
        for name, arr in (("actions", self.actions), ("ee_pos", self.ee_pos),
                          ("observations", self.observations)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"episode {eid}: non-finite values in {name}")
        if not np.all((self.gripper == 0) | (self.gripper == 1)):
            raise ValueError(f"episode {eid}: gripper values must be 0 or 1")

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def dim(self) -> int:
        return self.actions.shape[1]


@dataclass(frozen=True)
class VelocitySeq:
    """Per-step velocities v_t = a_t - a_{t-1}, with v_1 defined as zero."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))

    def __len__(self) -> int:
        return self.values.shape[0]


def velocities(traj: Trajectory) -> VelocitySeq:
    """Finite-difference velocities of the action sequence (first row zero)."""
    v = np.zeros_like(traj.actions)
    v[1:] = traj.actions[1:] - traj.actions[:-1]
    return VelocitySeq(v)


def mask_from_segments(segments: Sequence[tuple[int, int]], length: int) -> np.ndarray:
    """Binary step mask (length,) from 1-based inclusive segments."""
    mask = np.zeros(length, dtype=np.int8)
    for s, e in segments:
        mask[s - 1 : e] = 1
    return mask


def segments_from_mask(mask: np.ndarray) -> tuple[tuple[int, int], ...]:
    """Ordered 1-based inclusive segments of the positive runs in ``mask``."""
    m = np.asarray(mask).astype(bool)
    if m.ndim != 1:
        raise ValueError("mask must be one-dimensional")
    edges = np.flatnonzero(np.diff(np.concatenate(([False], m, [False])).astype(np.int8)))
    starts, ends = edges[::2], edges[1::2]
    return tuple((int(s) + 1, int(e)) for s, e in zip(starts, ends))


@dataclass(frozen=True)
class SegmentSet:
    """Ordered, disjoint key segments of one episode plus the derived mask.

    ``segments`` holds 1-based inclusive (start, end) pairs; ``mask[t-1]``
    is 1 iff step t lies inside some segment.
    """

    episode_id: str
    segments: tuple[tuple[int, int], ...]
    mask: np.ndarray

    def __post_init__(self):
        segs = tuple((int(s), int(e)) for s, e in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "mask", _frozen(np.asarray(self.mask, dtype=np.int8)))
        t = len(self.mask)
        prev_end = 0
        for s, e in segs:
            if not (1 <= s <= e <= t):
                raise ValueError(f"episode {self.episode_id}: segment ({s},{e}) out of 1..{t}")
            if s <= prev_end:
                raise ValueError(f"episode {self.episode_id}: segments overlap or are unordered")
            prev_end = e
        if segments_from_mask(self.mask) != segs:
            raise ValueError(f"episode {self.episode_id}: mask and segments disagree")

    @classmethod
    def from_segments(cls, episode_id: str, segments: Sequence[tuple[int, int]],
                      length: int) -> "SegmentSet":
        segs = tuple((int(s), int(e)) for s, e in segments)
        return cls(episode_id, segs, mask_from_segments(segs, length))

    @classmethod
    def from_mask(cls, episode_id: str, mask: np.ndarray) -> "SegmentSet":
        return cls(episode_id, segments_from_mask(mask), np.asarray(mask, dtype=np.int8))

    def __len__(self) -> int:
        return len(self.mask)

    @property
    def key_ratio(self) -> float:
        return float(self.mask.sum()) / float(len(self.mask))

    def key_step_count(self) -> int:
        return int(self.mask.sum())


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two binary step masks (1.0 if both empty)."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum()) / float(union)


def per_segment_iou(pred: SegmentSet, true: SegmentSet) -> list[float]:
    """Best mask-IoU of each true segment against any predicted segment."""
    t = len(true.mask)
    out = []
    for s, e in true.segments:
        gt = mask_from_segments([(s, e)], t)
        best = 0.0
        for ps, pe in pred.segments:
            pm = mask_from_segments([(ps, pe)], t)
            best = max(best, mask_iou(pm, gt))
        out.append(best)
    return out


# ---------------------------------------------------------------------------
# Dataset I/O: JSON lines, one episode object per line.  Floats are written
# in shortest round-trip decimal form, so save -> load is bit-exact.
# ---------------------------------------------------------------------------

def _traj_to_record(traj: Trajectory) -> dict:
    return {
        "id": traj.id,
        "actions": traj.actions.tolist(),
        "ee_pos": traj.ee_pos.tolist(),
        "gripper": [int(g) for g in traj.gripper],
        "observations": traj.observations.tolist(),
    }


def _traj_from_record(rec: dict) -> Trajectory:
    return Trajectory(
        id=rec["id"],
        actions=np.asarray(rec["actions"], dtype=np.float64),
        ee_pos=np.asarray(rec["ee_pos"], dtype=np.float64),
        gripper=np.asarray(rec["gripper"], dtype=np.int8),
        observations=np.asarray(rec["observations"], dtype=np.float64),
    )


def save_dataset(trajs: Iterable[Trajectory], path: str | Path) -> None:
    """Write episodes as JSON lines; the file round-trips via load_dataset."""
    lines = [json.dumps(_traj_to_record(t)) for t in trajs]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_dataset(path: str | Path) -> list[Trajectory]:
    """Load a JSON-lines dataset, validating every episode.

    Raises ValueError naming the offending line on parse failure, or the
    episode id on an invariant violation.
    """
    path = Path(path)
    trajs = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: parse failure at line {lineno}: {exc}") from exc
            try:
                trajs.append(_traj_from_record(rec))
            except KeyError as exc:
                raise ValueError(f"{path}: line {lineno}: missing field {exc}") from exc
    return trajs


def save_segments(segsets: Iterable[SegmentSet], path: str | Path, source: str) -> None:
    """Write segment sets as JSON lines: {"id", "segments", "key_ratio", "source"}."""
    lines = []
    for ss in segsets:
        rec = {
            "id": ss.episode_id,
            "segments": [[int(s), int(e)] for s, e in ss.segments],
            "key_ratio": ss.key_ratio,
            "source": source,
        }
        lines.append(json.dumps(rec))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_segments(path: str | Path, lengths: dict[str, int]) -> dict[str, SegmentSet]:
    """Load segment sets; ``lengths`` maps episode id -> T to rebuild masks."""
    path = Path(path)
    out: dict[str, SegmentSet] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: parse failure at line {lineno}: {exc}") from exc
            eid = rec["id"]
            if eid not in lengths:
                raise ValueError(f"{path}: line {lineno}: unknown episode id {eid!r}")
            segs = [(int(s), int(e)) for s, e in rec["segments"]]
            out[eid] = SegmentSet.from_segments(eid, segs, lengths[eid])
    return out
