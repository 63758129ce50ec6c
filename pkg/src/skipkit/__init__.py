"""skipkit: spectral key/skip segmentation, action relabeling, and
closed-loop evaluation for demonstration trajectories."""

from .trajectory import (
    SegmentSet,
    Trajectory,
    VelocitySeq,
    load_dataset,
    load_segments,
    mask_from_segments,
    mask_iou,
    per_segment_iou,
    save_dataset,
    save_segments,
    segments_from_mask,
    velocities,
)
from .msk import (
    MskConfig,
    SpectralProfile,
    bend_score,
    heuristic_keyframes,
    hf_energy_ratio,
    lv_label,
    msk_label,
    nearest_rank_quantile,
    rs_label,
    spectral_profile,
    st_dct,
    vo_label,
)
from .relabel import (
    RelabeledSample,
    auto_horizon,
    build_sample,
    dense_relabel_dataset,
    load_relabeled,
    masked_chunk_loss,
    mode_histogram,
    next_key_start,
    relabel_dataset,
    save_relabeled,
)
from .synthdemo import (
    ContactSite,
    GroundTruth,
    SUITES,
    TaskInstance,
    gen_expert,
    gen_task,
    load_groundtruth,
    load_instances,
    observation_vector,
    save_groundtruth,
    save_instances,
)
from .policy import DisplacementStats, PolicyIndex, build_index, displacement_stats, query
from .rollout import (
    JumpReport,
    KinematicEnv,
    RolloutResult,
    SuiteMetrics,
    default_budget,
    eval_suite,
    export_jump_histogram,
    jump_stats,
    rollout,
    separation_score,
)

__version__ = "0.1.0"
