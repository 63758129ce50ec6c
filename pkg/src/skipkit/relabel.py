"""Training-target construction: skip-aware relabeled action chunks.

Each source step t produces one H-step chunk.  Inside a key segment the
chunk starts at t+1 (dense refinement); in a skip region it starts at the
entrance of the next key segment; past the last key segment it falls back
to t+1 (skip tail).  Rows beyond the episode end are zero with mask 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .trajectory import SegmentSet, Trajectory, _frozen

Mode = Literal["refine", "skip", "skip_tail"]

MODES: tuple[Mode, ...] = ("refine", "skip", "skip_tail")


@dataclass(frozen=True)
class RelabeledSample:
    """One training sample: source step t, chunk start t*, chunk and mask."""

    episode_id: str
    t: int
    mode: Mode
    target_start: int
    chunk: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "chunk", _frozen(np.asarray(self.chunk, dtype=np.float64)))
        object.__setattr__(self, "mask", _frozen(np.asarray(self.mask, dtype=np.int8)))
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.chunk.shape[0] != self.mask.shape[0]:
            raise ValueError("chunk and mask must share length H")

    @property
    def horizon(self) -> int:
        return self.chunk.shape[0]


def next_key_start(segs: SegmentSet, t: int) -> int | None:
    """Start of the next key segment strictly after step t, or None."""
    for s, _ in segs.segments:
        if s > t:
            return s
    return None


def build_sample(traj: Trajectory, segs: SegmentSet, t: int, horizon: int) -> RelabeledSample:
    """Construct the relabeled chunk for source step t (1-based)."""
    length = len(traj)
    if not (1 <= t <= length):
        raise ValueError(f"step index {t} outside 1..{length}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if segs.mask[t - 1]:
        mode: Mode = "refine"
        start = t + 1
    else:
        nxt = next_key_start(segs, t)
        if nxt is not None:
            mode = "skip"
            start = nxt
        else:
            mode = "skip_tail"
            start = t + 1
    chunk = np.zeros((horizon, traj.dim), dtype=np.float64)
    mask = np.zeros(horizon, dtype=np.int8)
    valid = min(horizon, length - start + 1)
    if valid > 0:
        chunk[:valid] = traj.actions[start - 1 : start - 1 + valid]
        mask[:valid] = 1
    return RelabeledSample(traj.id, t, mode, start, chunk, mask)


def auto_horizon(segsets: Iterable[SegmentSet]) -> int:
    """Longest key-segment length across the dataset (at least 1)."""
    longest = 1
    for ss in segsets:
        for s, e in ss.segments:
            longest = max(longest, e - s + 1)
    return longest


def relabel_dataset(
    trajs: Sequence[Trajectory],
    segsets: Mapping[str, SegmentSet],
    horizon: int | str = "auto",
) -> list[RelabeledSample]:
    """One sample per (episode, t) for t = 1..T-1.

    horizon="auto" uses the longest key-segment length in the dataset so
    every chunk shares one shape.
    """
    for traj in trajs:
        if traj.id not in segsets:
            raise KeyError(f"missing SegmentSet for episode {traj.id!r}")
    if horizon == "auto":
        h = auto_horizon(segsets[traj.id] for traj in trajs)
    else:
        h = int(horizon)
        if h < 1:
            raise ValueError("horizon must be >= 1")
    samples = []
    for traj in trajs:
        segs = segsets[traj.id]
        for t in range(1, len(traj)):
            samples.append(build_sample(traj, segs, t, h))
    return samples


def dense_relabel_dataset(trajs: Sequence[Trajectory], horizon: int) -> list[RelabeledSample]:
    """Dense baseline: every step targets t+1 (mode refine), same horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    samples = []
    for traj in trajs:
        empty = SegmentSet.from_segments(traj.id, [], len(traj))
        for t in range(1, len(traj)):
            s = build_sample(traj, empty, t, horizon)
            # with no key segments every sample is a skip tail targeting t+1;
            # the dense baseline calls that plain refinement
            samples.append(RelabeledSample(traj.id, t, "refine", s.target_start, s.chunk, s.mask))
    return samples


def masked_chunk_loss(pred: np.ndarray, sample: RelabeledSample) -> float:
    """Mean squared-Euclidean row error over unmasked rows (0 if none)."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != sample.chunk.shape:
        raise ValueError(f"pred shape {pred.shape} != chunk shape {sample.chunk.shape}")
    m = sample.mask.astype(np.float64)
    total = m.sum()
    if total == 0:
        return 0.0
    sq = np.sum((pred - sample.chunk) ** 2, axis=1)
    return float(np.dot(m, sq) / total)


def save_relabeled(samples: Iterable[RelabeledSample], path: str | Path) -> None:
    """Write samples as JSON lines:
    {"id", "t", "mode", "target_start", "chunk", "mask"}."""
    lines = []
    for s in samples:
        rec = {
            "id": s.episode_id,
            "t": s.t,
            "mode": s.mode,
            "target_start": s.target_start,
            "chunk": s.chunk.tolist(),
            "mask": [int(m) for m in s.mask],
        }
        lines.append(json.dumps(rec))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_relabeled(path: str | Path) -> list[RelabeledSample]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: parse failure at line {lineno}: {exc}") from exc
            out.append(
                RelabeledSample(
                    episode_id=rec["id"],
                    t=int(rec["t"]),
                    mode=rec["mode"],
                    target_start=int(rec["target_start"]),
                    chunk=np.asarray(rec["chunk"], dtype=np.float64),
                    mask=np.asarray(rec["mask"], dtype=np.int8),
                )
            )
    return out


def mode_histogram(samples: Iterable[RelabeledSample]) -> dict[str, int]:
    counts = {m: 0 for m in MODES}
    for s in samples:
        counts[s.mode] += 1
    return counts
