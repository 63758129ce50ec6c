"""Closed-loop evaluation: kinematic environment, rollouts, and metrics.

The environment executes absolute position targets one per step (teleport
with workspace clamp), tracks in-order contact-site completion, and flags
success when all sites are done and the effector is within the goal
tolerance.  Every policy query returns an action chunk whose unmasked
rows are executed in full before the next query (no temporal ensembling).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .policy import DisplacementStats, PolicyIndex, query
from .synthdemo import TaskInstance, advance_subgoal, observation_vector
from .trajectory import Trajectory


class KinematicEnv:
    """Pure-kinematic task environment over one TaskInstance.

    The gripper toggles automatically when a pause_grasp site completes,
    mirroring how the demonstrations were scripted; chunks carry no
    gripper command.
    """

    def __init__(self, instance: TaskInstance):
        self.instance = instance
        self.position = instance.start.copy()
        self.gripper = 0
        self.subgoals_done = 0
        self.steps = 0

    def observe(self) -> np.ndarray:
        return observation_vector(self.position, self.gripper, self.instance)

    @property
    def success(self) -> bool:
        inst = self.instance
        return (
            self.subgoals_done == len(inst.contact_sites)
            and np.linalg.norm(self.position - inst.goal) <= inst.goal_tolerance
        )

    def step(self, target: np.ndarray) -> None:
        self.position = np.clip(np.asarray(target, dtype=np.float64)[:3], 0.0, 1.0)
        self.steps += 1
        done, toggled = advance_subgoal(self.instance, self.position, self.subgoals_done)
        self.subgoals_done = done
        if toggled:
            self.gripper ^= 1


@dataclass(frozen=True)
class RolloutResult:
    """Outcome of one closed-loop episode."""

    episode_id: str
    success: bool
    steps: int
    forward_calls: int
    jump_distances: tuple[float, ...]
    call_modes: tuple[str, ...] | None = None

    def with_call_modes(self, threshold: float | None) -> "RolloutResult":
        """Post-hoc key/skip split of the calls by displacement threshold."""
        if threshold is None:
            modes = tuple("key" for _ in self.jump_distances)
        else:
            modes = tuple("skip" if d > threshold else "key" for d in self.jump_distances)
        return replace(self, call_modes=modes)


def rollout(index: PolicyIndex, instance: TaskInstance, budget: int) -> RolloutResult:
    """Observe, query, execute the full unmasked chunk; repeat to success
    or budget exhaustion."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    env = KinematicEnv(instance)
    jumps: list[float] = []
    calls = 0
    while env.steps < budget and not env.success:
        obs = env.observe()
        chunk, mask = query(index, obs)
        calls += 1
        jumps.append(float(np.linalg.norm(chunk[0, :3] - env.position)))
        for h in range(chunk.shape[0]):
            if not mask[h]:
                continue
            env.step(chunk[h])
            if env.success or env.steps >= budget:
                break
    return RolloutResult(
        episode_id=f"{instance.suite}-i{instance.seed}",
        success=env.success,
        steps=env.steps,
        forward_calls=calls,
        jump_distances=tuple(jumps),
    )


@dataclass(frozen=True)
class SuiteMetrics:
    """Aggregate rollout metrics over one evaluation suite."""

    sr: float
    steps: float
    steps_succ: float | None
    forward_calls: float
    jump_distances: tuple[float, ...]
    results: tuple[RolloutResult, ...] = field(repr=False, default=())

    def to_dict(self, jump: dict | None = None) -> dict:
        rec = {
            "sr": self.sr,
            "steps": self.steps,
            "steps_succ": self.steps_succ,
            "forward_calls": self.forward_calls,
        }
        if jump is not None:
            rec["jump"] = jump
        return rec


def eval_suite(index: PolicyIndex, suite: Sequence[TaskInstance],
               budget: int) -> SuiteMetrics:
    """Roll out every instance and aggregate SR / Steps / Steps_succ / calls."""
    if not suite:
        raise ValueError("evaluation suite is empty")
    results = tuple(rollout(index, inst, budget) for inst in suite)
    succ_steps = [r.steps for r in results if r.success]
    jumps: list[float] = []
    for r in results:
        jumps.extend(r.jump_distances)
    return SuiteMetrics(
        sr=sum(r.success for r in results) / len(results),
        steps=float(np.mean([r.steps for r in results])),
        steps_succ=float(np.mean(succ_steps)) if succ_steps else None,
        forward_calls=float(np.mean([r.forward_calls for r in results])),
        jump_distances=tuple(jumps),
        results=results,
    )


@dataclass(frozen=True)
class JumpReport:
    """Two-class split of per-call jump distances."""

    threshold: float | None
    key_median: float | None
    skip_median: float | None
    key_count: int
    skip_count: int
    separation: float

    def to_dict(self) -> dict:
        return {
            "key_median": self.key_median,
            "skip_median": self.skip_median,
            "separation": self.separation,
        }


def separation_score(values: np.ndarray, labels: np.ndarray) -> float:
    """Between-cluster variance over total variance of a 1-D two-class split.

    Degenerate splits (one class, or zero total variance) score 0.
    """
    values = np.asarray(values, dtype=np.float64)
    total_var = values.var()
    if total_var <= 0.0:
        return 0.0
    mean = values.mean()
    between = 0.0
    for cls in (False, True):
        sel = values[labels == cls]
        if len(sel):
            between += len(sel) / len(values) * (sel.mean() - mean) ** 2
    return float(between / total_var)


def jump_stats(results: Sequence[RolloutResult],
               demo_stats: DisplacementStats) -> JumpReport:
    """Split pooled rollout jumps into key/skip at the demo-derived
    threshold and report per-mode medians plus a separation score."""
    jumps = np.array([d for r in results for d in r.jump_distances])
    if len(jumps) < 2:
        raise ValueError("need at least 2 policy calls to analyze jumps")
    threshold = demo_stats.threshold
    if threshold is None:
        is_skip = np.zeros(len(jumps), dtype=bool)
    else:
        is_skip = jumps > threshold
    key = jumps[~is_skip]
    skip = jumps[is_skip]
    return JumpReport(
        threshold=threshold,
        key_median=float(np.median(key)) if len(key) else None,
        skip_median=float(np.median(skip)) if len(skip) else None,
        key_count=int(len(key)),
        skip_count=int(len(skip)),
        separation=separation_score(jumps, is_skip),
    )


def export_jump_histogram(jumps: Sequence[float], threshold: float | None,
                          path: str | Path, n_bins: int = 32) -> None:
    """CSV histogram (bin_lo, bin_hi, count_key, count_skip) of call jumps."""
    jumps = np.asarray(jumps, dtype=np.float64)
    hi = float(jumps.max()) if len(jumps) else 1.0
    hi = hi if hi > 0 else 1.0
    edges = np.linspace(0.0, hi * (1 + 1e-9), n_bins + 1)
    thr = math.inf if threshold is None else threshold
    key = jumps[jumps <= thr]
    skip = jumps[jumps > thr]
    key_counts, _ = np.histogram(key, bins=edges)
    skip_counts, _ = np.histogram(skip, bins=edges)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_key", "count_skip"])
        for i in range(n_bins):
            writer.writerow([edges[i], edges[i + 1], int(key_counts[i]), int(skip_counts[i])])


def default_budget(trajs: Sequence[Trajectory]) -> int:
    """3x the longest training demonstration."""
    return 3 * max(len(t) for t in trajs)
