import numpy as np
import pytest

import skipkit as sk
from skipkit.msk import MskConfig, hf_energy_ratio
from skipkit.synthdemo import (
    OBS_DIM,
    SUITES,
    gen_expert,
    gen_task,
    load_groundtruth,
    load_instances,
    observation_vector,
    save_groundtruth,
    save_instances,
)
from skipkit.trajectory import velocities


class TestGenTask:
    def test_same_seed_identical(self):
        a = gen_task(42, "grasp-place")
        b = gen_task(42, "grasp-place")
        assert np.array_equal(a.start, b.start)
        assert np.array_equal(a.goal, b.goal)
        for sa, sb in zip(a.contact_sites, b.contact_sites):
            assert np.array_equal(sa.center, sb.center)

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="unknown suite"):
            gen_task(0, "juggle")

    def test_reach_has_no_contact_sites(self):
        inst = gen_task(0, "reach")
        assert inst.contact_sites == ()

    @pytest.mark.parametrize("suite", sorted(SUITES))
    def test_hundred_seeds_valid(self, suite):
        for seed in range(100):
            inst = gen_task(seed, suite)
            points = [inst.start, inst.goal] + [s.center for s in inst.contact_sites]
            for p in points:
                assert np.all(p >= 0.0) and np.all(p <= 1.0)
            # consecutive waypoints stay well separated
            for a, b in zip(points := [inst.start] + [s.center for s in inst.contact_sites]
                            + [inst.goal], points[1:]):
                assert np.linalg.norm(a - b) >= 0.2

    def test_instances_vary_with_seed(self):
        a, b = gen_task(1, "sweep"), gen_task(2, "sweep")
        assert not np.array_equal(a.start, b.start)


class TestGenExpert:
    def test_bit_for_bit_determinism(self):
        inst = gen_task(5, "multi-pick")
        t1, g1 = gen_expert(inst, noise=0.001, seed=9)
        t2, g2 = gen_expert(inst, noise=0.001, seed=9)
        assert np.array_equal(t1.actions, t2.actions)
        assert np.array_equal(t1.observations, t2.observations)
        assert g1.true_segments.segments == g2.true_segments.segments

    def test_noiseless_reach_is_straight_with_empty_truth(self):
        inst = gen_task(3, "reach")
        traj, truth = gen_expert(inst, noise=0.0, seed=3)
        assert truth.true_segments.segments == ()
        # every point lies on the start-goal line
        d = inst.goal - inst.start
        d = d / np.linalg.norm(d)
        rel = traj.ee_pos - inst.start
        offline = rel - (rel @ d)[:, None] * d[None, :]
        assert np.max(np.linalg.norm(offline, axis=1)) < 1e-9

    def test_msk_recovers_both_grasp_place_sites(self):
        inst = gen_task(8, "grasp-place")
        traj, truth = gen_expert(inst, noise=0.001, seed=8)
        pred = sk.msk_label(traj)
        per_seg = sk.per_segment_iou(pred, truth.true_segments)
        assert len(per_seg) == 2
        assert all(v >= 0.8 for v in per_seg)

    def test_arc_recovered_only_with_bend(self):
        inst = gen_task(9, "multi-pick")
        traj, truth = gen_expert(inst, noise=0.001, seed=9)
        arc_idx = [i for i, s in enumerate(inst.contact_sites) if s.pattern == "arc"]
        assert arc_idx, "multi-pick is expected to contain an arc site"
        arc_seg = truth.true_segments.segments[arc_idx[0]]
        arc_truth = sk.SegmentSet.from_segments(traj.id, [arc_seg], len(traj))

        with_bend = sk.msk_label(traj, MskConfig(use_keyframes=False))
        without = sk.msk_label(traj, MskConfig(use_keyframes=False, use_bend=False))
        iou_with = max(sk.per_segment_iou(with_bend, arc_truth))
        iou_without = max(sk.per_segment_iou(without, arc_truth), default=0.0)
        assert iou_with >= 0.5
        assert iou_without < 0.5

    def test_transit_steps_within_spec(self):
        inst = gen_task(10, "grasp-place")
        traj, truth = gen_expert(inst, noise=0.0, seed=10)
        speed = np.linalg.norm(velocities(traj).values, axis=1)
        transit = ~truth.true_segments.mask.astype(bool)
        transit[0] = False
        assert np.max(speed[transit]) <= 0.02 + 1e-9
        contact = truth.true_segments.mask.astype(bool)
        # patterns ramp down from transit pace to the dense regime
        assert np.min(speed[contact]) <= 0.004

    def test_ground_truth_ratio_bracket(self):
        ratios = []
        for seed in range(20):
            inst = gen_task(seed, "grasp-place")
            _, truth = gen_expert(inst, noise=0.001, seed=seed)
            ratios.append(truth.true_segments.key_ratio)
        assert all(0.15 <= r <= 0.35 for r in ratios)

    def test_episode_lengths_in_regime(self):
        for suite in ("grasp-place", "sweep", "multi-pick"):
            inst = gen_task(0, suite)
            traj, _ = gen_expert(inst, noise=0.001, seed=0)
            assert 150 <= len(traj) <= 500

    def test_separability_at_low_noise(self):
        for noise in (0.001, 0.002):
            inst = gen_task(4, "grasp-place")
            traj, truth = gen_expert(inst, noise=noise, seed=4)
            r = hf_energy_ratio(velocities(traj), MskConfig())
            contact = truth.true_segments.mask.astype(bool)
            assert r[contact].mean() > r[~contact].mean()

    def test_observation_layout(self):
        inst = gen_task(6, "grasp-place")
        traj, _ = gen_expert(inst, noise=0.001, seed=6)
        assert traj.observations.shape[1] == OBS_DIM
        np.testing.assert_array_equal(traj.observations[0, :3], traj.ee_pos[0])
        expected0 = observation_vector(traj.ee_pos[0], int(traj.gripper[0]), inst)
        np.testing.assert_array_equal(traj.observations[0], expected0)

    def test_gripper_toggles_only_inside_pause_patterns(self):
        inst = gen_task(7, "multi-pick")
        traj, truth = gen_expert(inst, noise=0.001, seed=7)
        toggles = np.flatnonzero(traj.gripper[1:] != traj.gripper[:-1]) + 2
        pause_spans = [
            truth.true_segments.segments[i]
            for i, s in enumerate(inst.contact_sites) if s.pattern == "pause_grasp"
        ]
        assert len(toggles) == len(pause_spans)
        for t, (s, e) in zip(toggles, pause_spans):
            assert s <= t <= e


class TestSidecars:
    def test_groundtruth_roundtrip(self, tmp_path):
        inst = gen_task(2, "sweep")
        traj, truth = gen_expert(inst, noise=0.001, seed=2)
        path = tmp_path / "gt.jsonl"
        save_groundtruth([truth], path)
        loaded = load_groundtruth(path, {traj.id: len(traj)})
        assert loaded[traj.id].true_segments.segments == truth.true_segments.segments

    def test_instances_roundtrip(self, tmp_path):
        instances = [gen_task(i, "multi-pick") for i in range(3)]
        path = tmp_path / "inst.jsonl"
        save_instances(instances, path)
        loaded = load_instances(path)
        assert len(loaded) == 3
        for a, b in zip(instances, loaded):
            assert a.seed == b.seed and a.suite == b.suite
            assert np.array_equal(a.start, b.start)
            assert np.array_equal(a.goal, b.goal)
            assert a.goal_tolerance == b.goal_tolerance
            for sa, sb in zip(a.contact_sites, b.contact_sites):
                assert sa.pattern == sb.pattern
                assert np.array_equal(sa.center, sb.center)
