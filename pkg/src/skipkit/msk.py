"""Motion-spectrum keying: label key segments of a demonstration.

A step is refine-worthy ("key") when the local action signal is complex:
high-frequency energy in a short-time DCT of the velocities, geometric
deviation from a straight chord (bend), or a heuristic keyframe event
(gripper change, velocity zero-crossing).  Everything here is a pure
function of the episode, so labeling parallelizes per episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.fft import dct
from scipy.ndimage import binary_dilation

from .trajectory import SegmentSet, Trajectory, VelocitySeq, segments_from_mask, velocities


@dataclass(frozen=True)
class MskConfig:
    """Tunables for motion-spectrum keying.

    Defaults are the stock operating point; ``window`` must be even and the
    high band is the upper half of the spectrum (k >= window/2).
    """

    window: int = 16               # short-time DCT window length W (steps)
    quantile: float = 0.75         # per-episode quantile threshold on the hf ratio
    min_seg_len: int = 3           # discard shorter key runs as noise
    bend_cutoff: float = 0.30      # absolute, scale-invariant bend threshold
    bend_expand: int = 2           # steps of expansion around bend hits
    kf_neighborhood: int = 5       # steps kept around each heuristic keyframe
    head_exclude_frac: float = 0.20  # fraction of episode start never labeled
    use_bend: bool = True
    use_keyframes: bool = True

    def __post_init__(self):
        if self.window < 4 or self.window % 2 != 0:
            raise ValueError("window must be an even integer >= 4")
        if not (0.0 < self.quantile < 1.0):
            raise ValueError("quantile must lie in (0, 1)")
        if self.min_seg_len < 1:
            raise ValueError("min_seg_len must be >= 1")
        if self.bend_cutoff < 0 or self.bend_expand < 0 or self.kf_neighborhood < 0:
            raise ValueError("bend_cutoff, bend_expand, kf_neighborhood must be >= 0")
        if not (0.0 <= self.head_exclude_frac < 1.0):
            raise ValueError("head_exclude_frac must lie in [0, 1)")

    def without(self, *, bend: bool = False, keyframes: bool = False) -> "MskConfig":
        """Copy with the named components switched off (component ablations)."""
        return replace(
            self,
            use_bend=self.use_bend and not bend,
            use_keyframes=self.use_keyframes and not keyframes,
        )


@dataclass(frozen=True)
class SpectralProfile:
    """Per-step high-frequency energy ratio and bend score of one episode."""

    hf_ratio: np.ndarray
    bend: np.ndarray

    def __post_init__(self):
        hf = np.asarray(self.hf_ratio, dtype=np.float64)
        bd = np.asarray(self.bend, dtype=np.float64)
        if hf.shape != bd.shape or hf.ndim != 1:
            raise ValueError("hf_ratio and bend must be equal-length 1-D sequences")
        if np.any(hf < 0) or np.any(hf > 1) or not np.all(np.isfinite(hf)):
            raise ValueError("hf_ratio values must lie in [0, 1]")
        if np.any(bd < 0) or not np.all(np.isfinite(bd)):
            raise ValueError("bend values must be finite and >= 0")
        object.__setattr__(self, "hf_ratio", hf)
        object.__setattr__(self, "bend", bd)


def _window_indices(length: int, window: int) -> np.ndarray:
    """(T, W) 0-based row indices of the centered window per step, edge-clamped.

    The window for 1-based step t covers steps [t - W/2, t + W/2 - 1];
    indices outside the episode are clamped to the nearest edge, which
    replicates boundary values instead of reflecting them.
    """
    offsets = np.arange(window) - window // 2
    idx = np.arange(length)[:, None] + offsets[None, :]
    return np.clip(idx, 0, length - 1)


def st_dct(vel: VelocitySeq, t: int, window: int) -> np.ndarray:
    """Orthonormal DCT-II coefficients (W, d) of the window centered at step t.

    Parseval holds exactly: the coefficient energy equals the energy of the
    (edge-clamped) windowed velocity signal.
    """
    if window < 4 or window % 2 != 0:
        raise ValueError("window must be an even integer >= 4")
    length = len(vel)
    if not (1 <= t <= length):
        raise ValueError(f"step index {t} outside 1..{length}")
    idx = _window_indices(length, window)[t - 1]
    return dct(vel.values[idx], type=2, norm="ortho", axis=0)


def _windowed_coeffs(values: np.ndarray, window: int) -> np.ndarray:
    idx = _window_indices(values.shape[0], window)
    return dct(values[idx], type=2, norm="ortho", axis=1)


def hf_energy_ratio(vel: VelocitySeq, cfg: MskConfig) -> np.ndarray:
    """Fraction of windowed DCT energy in the upper half of the spectrum.

    Zero-energy (all-zero) windows yield ratio 0.
    """
    coeffs = _windowed_coeffs(vel.values, cfg.window)     # (T, W, d)
    energy = np.sum(coeffs * coeffs, axis=2)              # (T, W)
    high_start = math.ceil(cfg.window / 2)
    total = energy.sum(axis=1)
    high = energy[:, high_start:].sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(total > 0.0, high / total, 0.0)
    # spectrally flat windows leave O(eps) round-off in the upper band;
    # floor it so constant-velocity windows are exactly 0
    ratio[ratio < 1e-12] = 0.0
    return np.clip(ratio, 0.0, 1.0)


def _padded_positions(pos: np.ndarray, margin: int) -> np.ndarray:
    """Extend a position sequence by ``margin`` rows on each side via
    constant-velocity extrapolation (replicating the edge step), so
    overhanging windows keep a uniform parameterization."""
    steps_back = np.arange(margin, 0, -1)[:, None]
    steps_fwd = np.arange(1, margin + 1)[:, None]
    head = pos[0] - steps_back * (pos[1] - pos[0])
    tail = pos[-1] + steps_fwd * (pos[-1] - pos[-2])
    return np.concatenate([head, pos, tail])


def bend_score(traj: Trajectory, cfg: MskConfig) -> np.ndarray:
    """Mean distance of in-window translations from the straight segment
    between the first and last in-window translations, normalized by the
    mean in-window step length (scale-invariant).

    A straight path scores 0 regardless of its speed profile; only
    geometric deviation counts.  Stationary windows (zero mean step
    length) score 0.
    """
    w = cfg.window
    half = w // 2
    padded = _padded_positions(traj.ee_pos, half)
    offsets = np.arange(w) - half
    idx = np.arange(len(traj))[:, None] + offsets[None, :] + half
    pts = padded[idx]                                     # (T, W, 3)
    first = pts[:, :1, :]
    chord = pts[:, -1:, :] - first
    rel = pts - first
    chord_sq = np.sum(chord * chord, axis=2)              # (T, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        proj = np.where(chord_sq > 0.0, np.sum(rel * chord, axis=2) / chord_sq, 0.0)
    proj = np.clip(proj, 0.0, 1.0)                        # (T, W)
    dev = np.linalg.norm(rel - proj[:, :, None] * chord, axis=2)
    step_len = np.linalg.norm(np.diff(pts, axis=1), axis=2)
    mean_step = step_len.mean(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = np.where(mean_step > 0.0, dev.mean(axis=1) / mean_step, 0.0)
    return b


def spectral_profile(traj: Trajectory, cfg: MskConfig) -> SpectralProfile:
    return SpectralProfile(
        hf_ratio=hf_energy_ratio(velocities(traj), cfg),
        bend=bend_score(traj, cfg),
    )


def velocity_zero_threshold(vel: VelocitySeq) -> float:
    """Relative stop threshold: 5% of the episode's mean velocity norm."""
    return 0.05 * float(np.linalg.norm(vel.values, axis=1).mean())


def heuristic_keyframes(traj: Trajectory, cfg: MskConfig) -> list[int]:
    """Gripper-change steps plus velocity zero-crossing steps (1-based).

    A zero-crossing is a step whose velocity norm drops to <= eps while the
    previous step was above eps; eps is relative to the episode's mean speed
    so the detector is scale-invariant.
    """
    events: set[int] = set()
    g = traj.gripper
    for i in np.flatnonzero(g[1:] != g[:-1]):
        events.add(int(i) + 2)
    vel = velocities(traj)
    speed = np.linalg.norm(vel.values, axis=1)
    eps = velocity_zero_threshold(vel)
    crossings = np.flatnonzero((speed[1:] <= eps) & (speed[:-1] > eps))
    for i in crossings:
        events.add(int(i) + 2)
    return sorted(events)


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """Nearest-rank (no interpolation) quantile; deterministic and portable."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n == 0:
        raise ValueError("quantile of empty sequence")
    rank = math.ceil(q * n - 1e-9)
    rank = min(max(rank, 1), n)
    return float(v[rank - 1])


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask
    return binary_dilation(mask, structure=np.ones(2 * radius + 1, dtype=bool))


def _runs_to_segmentset(episode_id: str, key: np.ndarray, min_seg_len: int) -> SegmentSet:
    runs = [seg for seg in segments_from_mask(key) if seg[1] - seg[0] + 1 >= min_seg_len]
    return SegmentSet.from_segments(episode_id, runs, len(key))


def head_exclude_steps(length: int, frac: float) -> int:
    """Number of leading steps excluded from labeling."""
    return int(math.floor(frac * length))


def frequency_key_mask(traj: Trajectory, cfg: MskConfig) -> np.ndarray:
    """Raw frequency-keyed mask: hf ratio strictly above its per-episode
    quantile, computed over the non-excluded region."""
    ratio = hf_energy_ratio(velocities(traj), cfg)
    head = head_exclude_steps(len(traj), cfg.head_exclude_frac)
    threshold = nearest_rank_quantile(ratio[head:], cfg.quantile)
    return ratio > threshold


def msk_label(traj: Trajectory, cfg: MskConfig | None = None) -> SegmentSet:
    """Full key-segment labeling of one episode.

    Union of (1) frequency-keyed steps, (2) bend hits above the cutoff
    expanded by +-bend_expand, (3) +-kf_neighborhood around heuristic
    keyframes; the episode head is cleared, runs are grouped, and runs
    shorter than min_seg_len are discarded.
    """
    cfg = cfg or MskConfig()
    length = len(traj)
    if length < cfg.window:
        raise ValueError(
            f"episode {traj.id}: episode too short for window "
            f"(T={length} < W={cfg.window})"
        )
    key = frequency_key_mask(traj, cfg)
    if cfg.use_bend:
        hits = bend_score(traj, cfg) > cfg.bend_cutoff
        key = key | _dilate(hits, cfg.bend_expand)
    if cfg.use_keyframes:
        kf = np.zeros(length, dtype=bool)
        for t in heuristic_keyframes(traj, cfg):
            lo = max(t - cfg.kf_neighborhood, 1)
            hi = min(t + cfg.kf_neighborhood, length)
            kf[lo - 1 : hi] = True
        key = key | kf
    key[: head_exclude_steps(length, cfg.head_exclude_frac)] = False
    return _runs_to_segmentset(traj.id, key, cfg.min_seg_len)


# ---------------------------------------------------------------------------
# Alternative label sources used as ablation baselines.
# ---------------------------------------------------------------------------

def rs_label(traj: Trajectory, key_ratio: float, seg_len: int,
             head_exclude_frac: float = 0.0) -> SegmentSet:
    """Periodic placement: segments of ``seg_len`` steps every
    ceil(seg_len / key_ratio) steps, starting after the (by default empty)
    head exclusion.

    The trailing segment is trimmed so the realized key-step count matches
    round(key_ratio * T); otherwise period quantization can miss the
    requested ratio by several points at middling episode lengths.
    """
    if not (0.0 < key_ratio < 1.0):
        raise ValueError("key_ratio must lie in (0, 1)")
    if seg_len < 1:
        raise ValueError("seg_len must be >= 1")
    length = len(traj)
    period = math.ceil(seg_len / key_ratio)
    start = head_exclude_steps(length, head_exclude_frac) + 1
    segments = []
    s = start
    while s <= length:
        segments.append((s, min(s + seg_len - 1, length)))
        s += period
    target = max(1, round(key_ratio * length))
    overshoot = sum(e - b + 1 for b, e in segments) - target
    while overshoot > 0 and segments:
        b, e = segments[-1]
        trim = min(overshoot, e - b + 1)
        if trim == e - b + 1:
            segments.pop()
        else:
            segments[-1] = (b, e - trim)
        overshoot -= trim
    return SegmentSet.from_segments(traj.id, segments, length)


def vo_label(traj: Trajectory, q: float = 0.75, min_seg_len: int = 3) -> SegmentSet:
    """Velocity-only baseline: key iff speed is strictly above the
    per-episode q-quantile; grouped and length-filtered like msk_label."""
    speed = np.linalg.norm(velocities(traj).values, axis=1)
    threshold = nearest_rank_quantile(speed, q)
    return _runs_to_segmentset(traj.id, speed > threshold, min_seg_len)


def lv_label(traj: Trajectory, q: float = 0.75, min_seg_len: int = 3) -> SegmentSet:
    """Low-velocity baseline: key iff speed is strictly below the
    per-episode (1-q)-quantile; complement criterion of vo_label."""
    speed = np.linalg.norm(velocities(traj).values, axis=1)
    threshold = nearest_rank_quantile(speed, 1.0 - q)
    return _runs_to_segmentset(traj.id, speed < threshold, min_seg_len)
