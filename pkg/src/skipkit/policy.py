"""Nonparametric policy: exact nearest-neighbor retrieval of relabeled chunks.

The index pairs each training sample's source observation with its
(chunk, mask, mode).  Queries use brute-force Euclidean distance so ties
break deterministically toward the lowest entry index.  The index is
immutable after construction and safe to share across parallel rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .relabel import RelabeledSample
from .trajectory import Trajectory, _frozen

_MODE_CODES = {"refine": 0, "skip": 1, "skip_tail": 2}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(frozen=True)
class PolicyIndex:
    """Exact-NN store over (observation, chunk, mask, mode) entries."""

    observations: np.ndarray   # (n, d_o)
    chunks: np.ndarray         # (n, H, d)
    masks: np.ndarray          # (n, H)
    modes: np.ndarray          # (n,) codes into _MODE_NAMES
    k: int

    def __post_init__(self):
        for name in ("observations", "chunks", "masks", "modes"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.observations.shape[0] == 0:
            raise ValueError("cannot build an index from an empty sample list")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        sq = np.einsum("ij,ij->i", self.observations, self.observations)
        object.__setattr__(self, "_sq_norms", _frozen(sq))

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def horizon(self) -> int:
        return self.chunks.shape[1]


def build_index(samples: Sequence[RelabeledSample], trajs: Sequence[Trajectory],
                k: int = 1) -> PolicyIndex:
    """Pair each sample's source observation o_t with its chunk and mask."""
    if not samples:
        raise ValueError("cannot build an index from an empty sample list")
    by_id = {t.id: t for t in trajs}
    obs, chunks, masks, modes = [], [], [], []
    for s in samples:
        if s.episode_id not in by_id:
            raise KeyError(f"sample references unknown episode {s.episode_id!r}")
        traj = by_id[s.episode_id]
        obs.append(traj.observations[s.t - 1])
        chunks.append(s.chunk)
        masks.append(s.mask)
        modes.append(_MODE_CODES[s.mode])
    return PolicyIndex(
        observations=np.asarray(obs, dtype=np.float64),
        chunks=np.asarray(chunks, dtype=np.float64),
        masks=np.asarray(masks, dtype=np.int8),
        modes=np.asarray(modes, dtype=np.int8),
        k=k,
    )


def query(index: PolicyIndex, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Retrieve the chunk and mask for an observation.

    k=1 returns the nearest entry.  k>1 takes the k nearest, finds the
    majority mode among them (ties go to the nearest candidate's mode),
    and returns the nearest entry of that mode.  Distance ties always
    resolve to the lowest entry index.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (index.obs_dim,):
        raise ValueError(f"observation dimension {obs.shape} != ({index.obs_dim},)")
    # |e - q|^2 up to the constant |q|^2, via one BLAS matvec
    d2 = index._sq_norms - 2.0 * (index.observations @ obs)
    if index.k == 1:
        best = int(np.argmin(d2))
    else:
        order = np.argsort(d2, kind="stable")[: index.k]
        cand_modes = index.modes[order]
        counts = np.bincount(cand_modes, minlength=3)
        top = counts.max()
        majority = [m for m in range(3) if counts[m] == top]
        chosen_mode = cand_modes[0] if cand_modes[0] in majority else majority[0]
        best = int(order[cand_modes == chosen_mode][0])
    return index.chunks[best], index.masks[best]


@dataclass(frozen=True)
class DisplacementStats:
    """Training-demo jump statistics used to split rollout calls by mode.

    Medians of the first-target displacement for refine and skip samples;
    the split threshold is their midpoint (None when either class is
    absent, e.g. for a dense baseline with no skip samples).
    """

    refine_median: float | None
    skip_median: float | None

    @property
    def threshold(self) -> float | None:
        if self.refine_median is None or self.skip_median is None:
            return None
        return 0.5 * (self.refine_median + self.skip_median)


def displacement_stats(samples: Sequence[RelabeledSample],
                       trajs: Sequence[Trajectory]) -> DisplacementStats:
    """Median first-target jump per mode over the training samples."""
    by_id = {t.id: t for t in trajs}
    refine, skip = [], []
    for s in samples:
        if not s.mask[0]:
            continue
        pos = by_id[s.episode_id].ee_pos[s.t - 1]
        jump = float(np.linalg.norm(s.chunk[0, :3] - pos))
        if s.mode == "refine":
            refine.append(jump)
        elif s.mode == "skip":
            skip.append(jump)
    return DisplacementStats(
        refine_median=float(np.median(refine)) if refine else None,
        skip_median=float(np.median(skip)) if skip else None,
    )
