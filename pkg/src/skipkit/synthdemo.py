"""Synthetic expert demonstrations with known ground-truth key segments.

Tasks live in a unit workspace: an episode starts at a point, visits a
sequence of contact sites in order, and finishes at a goal.  Transit
between sites is a straight line at 0.02 m per step; each contact site is
a dense scripted pattern (step length <= 0.004 m):

- ``zigzag``      alternating lateral offsets while advancing (oscillatory
                  velocity by construction),
- ``pause_grasp`` a deceleration ramp into micro-oscillating alignment, a
                  full stop at the site center, a gripper toggle, and a
                  curved accelerating retreat toward the next waypoint,
- ``arc``         a constant-speed circular arc passing through the center.

The deceleration/acceleration ramps belong to the pattern (and its ground
truth), so the speed transition a windowed detector sees is centered
inside the key span rather than on the transit.

Each suite is a fixed base layout; a seed applies one shared translation
(+-0.05 m) to the whole layout plus a small (+-0.01 m) independent jitter
per point, so freshly seeded instances are perturbations of one another.
Generation is pure and seed-deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .trajectory import SegmentSet, Trajectory, _frozen

Pattern = Literal["zigzag", "pause_grasp", "arc"]

MAX_SITES = 4

TRANSIT_STEP = 0.02          # transit step length, meters
LAYOUT_SHIFT = 0.05          # shared +- translation of the whole layout
POINT_JITTER = 0.01          # independent +- jitter per layout point
DEFAULT_NOISE = 0.001        # transit position noise, meters (std)


@dataclass(frozen=True)
class ContactSite:
    """One contact-rich site: where, which scripted pattern, how large.

    ``extent`` is the pattern's characteristic length: sweep length for
    zigzag, approach distance for pause_grasp, radius for arc.
    """

    center: np.ndarray
    pattern: Pattern
    extent: float
    tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, dtype=np.float64)))
        if self.pattern not in ("zigzag", "pause_grasp", "arc"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.tolerance <= 0 or self.extent <= 0:
            raise ValueError("extent and tolerance must be > 0")


@dataclass(frozen=True)
class TaskInstance:
    """One task layout: start, ordered contact sites, and goal."""

    seed: int
    suite: str
    start: np.ndarray
    contact_sites: tuple[ContactSite, ...]
    goal: np.ndarray
    goal_tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "start", _frozen(np.asarray(self.start, dtype=np.float64)))
        object.__setattr__(self, "goal", _frozen(np.asarray(self.goal, dtype=np.float64)))
        object.__setattr__(self, "contact_sites", tuple(self.contact_sites))
        if len(self.contact_sites) > MAX_SITES:
            raise ValueError(f"at most {MAX_SITES} contact sites supported")
        if self.goal_tolerance <= 0:
            raise ValueError("goal_tolerance must be > 0")
        pts = [self.start, self.goal] + [s.center for s in self.contact_sites]
        for p in pts:
            if p.shape != (3,) or np.any(p < 0.0) or np.any(p > 1.0):
                raise ValueError("all task points must lie inside the unit workspace")


@dataclass(frozen=True)
class GroundTruth:
    """Generator's record of which steps belong to contact patterns."""

    true_segments: SegmentSet


# ---------------------------------------------------------------------------
# Suite registry: base layouts chosen so transit legs dominate and the first
# leg outlasts the default 20% head exclusion.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _SuiteSpec:
    start: tuple[float, float, float]
    sites: tuple[tuple[tuple[float, float, float], Pattern, float, float], ...]
    goal: tuple[float, float, float]
    goal_tolerance: float


SUITES: dict[str, _SuiteSpec] = {
    "reach": _SuiteSpec(
        start=(0.15, 0.50, 0.50),
        sites=(),
        goal=(0.85, 0.50, 0.50),
        goal_tolerance=0.05,
    ),
    "grasp-place": _SuiteSpec(
        start=(0.07, 0.07, 0.87),
        sites=(
            ((0.89, 0.25, 0.12), "pause_grasp", 0.09, 0.04),
            ((0.11, 0.87, 0.28), "pause_grasp", 0.09, 0.04),
        ),
        goal=(0.92, 0.92, 0.80),
        goal_tolerance=0.05,
    ),
    "sweep": _SuiteSpec(
        start=(0.08, 0.90, 0.78),
        sites=(
            ((0.84, 0.42, 0.16), "zigzag", 0.11, 0.04),
            ((0.25, 0.30, 0.70), "zigzag", 0.11, 0.04),
        ),
        goal=(0.85, 0.85, 0.75),
        goal_tolerance=0.05,
    ),
    "multi-pick": _SuiteSpec(
        start=(0.10, 0.90, 0.85),
        sites=(
            ((0.85, 0.55, 0.15), "pause_grasp", 0.09, 0.04),
            ((0.30, 0.38, 0.65), "arc", 0.06, 0.04),
            ((0.78, 0.14, 0.55), "pause_grasp", 0.09, 0.04),
        ),
        goal=(0.14, 0.14, 0.14),
        goal_tolerance=0.05,
    ),
}

_SUITE_IDS = {name: i for i, name in enumerate(sorted(SUITES))}


def gen_task(seed: int, suite: str) -> TaskInstance:
    """Deterministic task instance for (seed, suite)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; known: {sorted(SUITES)}")
    spec = SUITES[suite]
    rng = np.random.default_rng([_SUITE_IDS[suite], seed])
    shift = rng.uniform(-LAYOUT_SHIFT, LAYOUT_SHIFT, 3)

    def place(base) -> np.ndarray:
        return np.asarray(base) + shift + rng.uniform(-POINT_JITTER, POINT_JITTER, 3)

    start = place(spec.start)
    sites = tuple(
        ContactSite(place(c), pattern, extent, tol)
        for c, pattern, extent, tol in spec.sites
    )
    goal = place(spec.goal)
    return TaskInstance(seed, suite, start, sites, goal, spec.goal_tolerance)


# ---------------------------------------------------------------------------
# Geometry helpers.
# ---------------------------------------------------------------------------

def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def _perp_unit(u: np.ndarray, hint: np.ndarray | None = None) -> np.ndarray:
    """Unit vector perpendicular to u, as close to ``hint`` as possible."""
    if hint is not None:
        r = hint - np.dot(hint, u) * u
        if np.linalg.norm(r) > 1e-9:
            return _unit(r)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(u)))] = 1.0
    return _unit(np.cross(u, axis))


def _rotate_toward(heading: np.ndarray, desired: np.ndarray, max_angle: float) -> np.ndarray:
    """Rotate unit ``heading`` toward unit ``desired`` by at most max_angle."""
    c = float(np.clip(np.dot(heading, desired), -1.0, 1.0))
    angle = math.acos(c)
    if angle <= max_angle or angle < 1e-12:
        return desired
    perp = desired - c * heading
    norm = np.linalg.norm(perp)
    if norm < 1e-12:
        # exactly opposed; tip sideways deterministically
        perp = _perp_unit(heading)
        norm = 1.0
    return heading * math.cos(max_angle) + (perp / norm) * math.sin(max_angle)


# ---------------------------------------------------------------------------
# Scripted contact patterns.  Each returns (entry_point, pattern_points);
# the transit leg ends at entry_point and every pattern point is a
# ground-truth key step.
# ---------------------------------------------------------------------------

# deceleration ramp into the alignment phase (speeds in meters/step)
_PG_RAMP_SPEEDS = tuple(0.016 * (0.004 / 0.016) ** (i / 5) for i in range(6))
_PG_ALIGN_STEPS = 12
_PG_ALIGN_ADVANCE = 0.003
_PG_ALIGN_AMPLITUDE = 0.0011  # lateral micro-oscillation during alignment
_PG_PAUSE_STEPS = 3
_PG_RETREAT_SPEEDS = tuple(0.004 * (0.016 / 0.004) ** (i / 9) for i in range(10))
_PG_RETREAT_TURN_RADIUS = 0.018
PG_APPROACH = sum(_PG_RAMP_SPEEDS) + _PG_ALIGN_STEPS * _PG_ALIGN_ADVANCE

_ZIGZAG_ADVANCE = 0.003
_ZIGZAG_AMPLITUDE = 0.0011   # peak of the sine amplitude envelope
_ARC_SWEEP = 1.8             # radians
_ARC_STEP_LEN = 0.0036


def _pause_grasp_points(center: np.ndarray, u: np.ndarray,
                        next_wp: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    entry = center - u * PG_APPROACH
    lat = _perp_unit(u, hint=np.array([0.0, 0.0, 1.0]))
    pts: list[np.ndarray] = []
    pos = entry.copy()
    for s in _PG_RAMP_SPEEDS:
        pos = pos + u * s
        pts.append(pos.copy())
    align_start = pos.copy()
    for i in range(1, _PG_ALIGN_STEPS + 1):
        sign = 0.0 if i == _PG_ALIGN_STEPS else (1.0 if i % 2 == 1 else -1.0)
        pts.append(align_start + u * (_PG_ALIGN_ADVANCE * i)
                   + lat * (_PG_ALIGN_AMPLITUDE * sign))
    for _ in range(_PG_PAUSE_STEPS):
        pts.append(center.copy())
    heading = _perp_unit(u, hint=np.array([0.0, 0.0, 1.0]))
    pos = center.copy()
    for s in _PG_RETREAT_SPEEDS:
        desired = _unit(next_wp - pos)
        heading = _rotate_toward(heading, desired, s / _PG_RETREAT_TURN_RADIUS)
        pos = pos + heading * s
        pts.append(pos.copy())
    return entry, pts


def _zigzag_points(center: np.ndarray, u: np.ndarray,
                   extent: float) -> tuple[np.ndarray, list[np.ndarray]]:
    """Dense sweep through the center with step-alternating lateral offsets.

    The lateral amplitude follows a sine envelope peaking mid-pattern, so
    the oscillation strength (and with it the spectral signature) rises
    smoothly toward the center and fades at the edges.
    """
    entry = center - u * (extent / 2.0)
    lat = _perp_unit(u, hint=np.array([0.0, 0.0, 1.0]))
    n = max(2, round(extent / _ZIGZAG_ADVANCE))
    adv = extent / n
    pts = []
    for i in range(1, n + 1):
        sign = 0.0 if i == n else (1.0 if i % 2 == 1 else -1.0)
        amp = _ZIGZAG_AMPLITUDE * math.sin(math.pi * i / n)
        pts.append(entry + u * (adv * i) + lat * (amp * sign))
    return entry, pts


def _arc_points(center: np.ndarray, u: np.ndarray, radius: float,
                next_wp: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    w = _perp_unit(u, hint=next_wp - center)
    half = _ARC_SWEEP / 2.0
    entry = center - radius * math.sin(half) * u - radius * (1.0 - math.cos(half)) * w
    pivot = entry + radius * w
    n = int(math.ceil(radius * _ARC_SWEEP / _ARC_STEP_LEN))
    n += n % 2  # even step count puts one sample exactly on the center
    pts = []
    for i in range(1, n + 1):
        phi = _ARC_SWEEP * i / n
        pts.append(pivot - radius * math.cos(phi) * w + radius * math.sin(phi) * u)
    return entry, pts


def _transit_points(cur: np.ndarray, target: np.ndarray, rng: np.random.Generator,
                    noise: float) -> list[np.ndarray]:
    dist = float(np.linalg.norm(target - cur))
    n = max(1, int(math.ceil(dist / TRANSIT_STEP)))
    pts = []
    for i in range(1, n + 1):
        p = cur + (target - cur) * (i / n)
        if i < n and noise > 0.0:
            p = p + rng.normal(0.0, noise, 3)
        pts.append(p)
    return pts


_REACH_DECEL_DIST = 0.03
_REACH_DECEL_STEPS = 10
_REACH_DECEL_SHRINK = 0.62


def _reach_tail(goal: np.ndarray, u: np.ndarray) -> list[np.ndarray]:
    """Decelerating final approach plus a short full stop at the goal."""
    pts = []
    rem = _REACH_DECEL_DIST
    for _ in range(_REACH_DECEL_STEPS):
        rem *= _REACH_DECEL_SHRINK
        pts.append(goal - u * rem)
    pts.append(goal.copy())
    pts.append(goal.copy())
    return pts


# ---------------------------------------------------------------------------
# Observations and gripper simulation (shared with the rollout environment).
# ---------------------------------------------------------------------------

def observation_vector(position: np.ndarray, gripper: int,
                       instance: TaskInstance) -> np.ndarray:
    """Flat observation: position, gripper, padded site centers, goal."""
    sites = np.zeros((MAX_SITES, 3))
    for i, s in enumerate(instance.contact_sites):
        sites[i] = s.center
    return np.concatenate([
        np.asarray(position, dtype=np.float64),
        np.array([float(gripper)]),
        sites.ravel(),
        instance.goal,
    ])


OBS_DIM = 3 + 1 + MAX_SITES * 3 + 3


def advance_subgoal(instance: TaskInstance, position: np.ndarray,
                    done: int) -> tuple[int, bool]:
    """Check the next pending site; returns (done count, gripper toggled).

    A site completes when the position enters its tolerance ball; a
    pause_grasp completion toggles the gripper.  Sites complete in order.
    """
    sites = instance.contact_sites
    if done < len(sites):
        site = sites[done]
        if np.linalg.norm(position - site.center) <= site.tolerance:
            return done + 1, site.pattern == "pause_grasp"
    return done, False


def simulate_gripper(positions: np.ndarray, instance: TaskInstance) -> np.ndarray:
    g = np.zeros(len(positions), dtype=np.int8)
    state, done = 0, 0
    for i, p in enumerate(positions):
        done, toggled = advance_subgoal(instance, p, done)
        if toggled:
            state ^= 1
        g[i] = state
    return g


# ---------------------------------------------------------------------------
# Expert generation.
# ---------------------------------------------------------------------------

def gen_expert(instance: TaskInstance, noise: float = DEFAULT_NOISE,
               seed: int = 0) -> tuple[Trajectory, GroundTruth]:
    """Script one expert demonstration of ``instance``.

    Transit points carry additive Gaussian position noise (std ``noise``);
    contact patterns are exact.  Deterministic in (instance, noise, seed).
    """
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng([instance.seed, seed])
    pts: list[np.ndarray] = [instance.start.copy()]
    key: list[bool] = [False]
    cur = instance.start
    waypoints = [s.center for s in instance.contact_sites] + [instance.goal]
    for i, site in enumerate(instance.contact_sites):
        u = _unit(site.center - cur)
        next_wp = waypoints[i + 1]
        if site.pattern == "pause_grasp":
            entry, body = _pause_grasp_points(site.center, u, next_wp)
        elif site.pattern == "zigzag":
            entry, body = _zigzag_points(site.center, u, site.extent)
        else:
            entry, body = _arc_points(site.center, u, site.extent, next_wp)
        leg = _transit_points(cur, entry, rng, noise)
        pts.extend(leg)
        key.extend([False] * len(leg))
        pts.extend(body)
        key.extend([True] * len(body))
        cur = pts[-1]
    if instance.suite == "reach":
        u = _unit(instance.goal - cur)
        pre = instance.goal - u * _REACH_DECEL_DIST
        leg = _transit_points(cur, pre, rng, noise) + _reach_tail(instance.goal, u)
    else:
        leg = _transit_points(cur, instance.goal, rng, noise)
    pts.extend(leg)
    key.extend([False] * len(leg))

    positions = np.asarray(pts)
    gripper = simulate_gripper(positions, instance)
    obs = np.stack([
        observation_vector(p, int(g), instance) for p, g in zip(positions, gripper)
    ])
    episode_id = f"{instance.suite}-i{instance.seed}-e{seed}"
    traj = Trajectory(
        id=episode_id,
        actions=positions,
        ee_pos=positions,
        gripper=gripper,
        observations=obs,
    )
    truth = GroundTruth(SegmentSet.from_mask(episode_id, np.asarray(key, dtype=np.int8)))
    return traj, truth


# ---------------------------------------------------------------------------
# Sidecar I/O.
# ---------------------------------------------------------------------------

def save_groundtruth(truths: Iterable[GroundTruth], path: str | Path) -> None:
    lines = []
    for gt in truths:
        ss = gt.true_segments
        rec = {"id": ss.episode_id,
               "true_segments": [[int(s), int(e)] for s, e in ss.segments]}
        lines.append(json.dumps(rec))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_groundtruth(path: str | Path, lengths: dict[str, int]) -> dict[str, GroundTruth]:
    out: dict[str, GroundTruth] = {}
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            eid = rec["id"]
            segs = [(int(s), int(e)) for s, e in rec["true_segments"]]
            out[eid] = GroundTruth(SegmentSet.from_segments(eid, segs, lengths[eid]))
    return out


def save_instances(instances: Iterable[TaskInstance], path: str | Path) -> None:
    lines = []
    for inst in instances:
        rec = {
            "seed": inst.seed,
            "suite": inst.suite,
            "start": inst.start.tolist(),
            "contact_sites": [
                {"center": s.center.tolist(), "pattern": s.pattern,
                 "extent": s.extent, "tolerance": s.tolerance}
                for s in inst.contact_sites
            ],
            "goal": inst.goal.tolist(),
            "goal_tolerance": inst.goal_tolerance,
        }
        lines.append(json.dumps(rec))
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_instances(path: str | Path) -> list[TaskInstance]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sites = tuple(
                ContactSite(np.asarray(s["center"]), s["pattern"], s["extent"], s["tolerance"])
                for s in rec["contact_sites"]
            )
            out.append(TaskInstance(
                seed=int(rec["seed"]),
                suite=rec["suite"],
                start=np.asarray(rec["start"]),
                contact_sites=sites,
                goal=np.asarray(rec["goal"]),
                goal_tolerance=float(rec["goal_tolerance"]),
            ))
    return out
