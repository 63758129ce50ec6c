"""Command-line pipeline: gen -> segment -> relabel -> eval, plus sweeps.

Stages communicate through JSON-lines artifacts in one output directory,
every stage is deterministic given (config, seed), and the effective
config is echoed next to the artifacts for provenance.  Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .msk import MskConfig, lv_label, msk_label, rs_label, spectral_profile, vo_label
from .policy import build_index, displacement_stats
from .relabel import (
    auto_horizon,
    dense_relabel_dataset,
    load_relabeled,
    mode_histogram,
    relabel_dataset,
    save_relabeled,
)
from .rollout import default_budget, eval_suite, export_jump_histogram, jump_stats
from .synthdemo import (
    SUITES,
    gen_expert,
    gen_task,
    load_instances,
    save_groundtruth,
    save_instances,
)
from .trajectory import load_dataset, load_segments, save_dataset, save_segments

LABELERS = ("msk", "rs", "vo", "lv", "dense")
SWEEP_AXES = ("q", "W", "components", "labeler")

_EVAL_SEED_OFFSET = 500_000


@dataclass
class RunConfig:
    """Effective settings for one pipeline run (flags mirror field names)."""

    suite: str = "grasp-place"
    n_train: int = 50
    n_eval: int = 50
    seed: int = 0
    noise: float = 0.001
    labeler: str = "msk"
    msk: MskConfig = field(default_factory=MskConfig)
    key_ratio: float = 0.25     # rs labeler: requested key-step fraction
    seg_len: int = 5            # rs labeler: segment length
    h: int | str = "auto"       # chunk length H
    k: int = 1
    budget: int | None = None   # None: 3x longest training demo
    compare: str | None = None
    profiles: bool = False
    output_dir: str = "out"

    def to_dict(self) -> dict:
        rec = dataclasses.asdict(self)
        return rec


def _train_seed(cfg: RunConfig, i: int) -> int:
    return cfg.seed * 1_000_000 + i


def _eval_seed(cfg: RunConfig, i: int) -> int:
    return cfg.seed * 1_000_000 + _EVAL_SEED_OFFSET + i


def _echo_config(cfg: RunConfig) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def _write_summary(cfg: RunConfig, name: str, payload: dict) -> None:
    (Path(cfg.output_dir) / name).write_text(json.dumps(payload, indent=2) + "\n")


def _label_episode(traj, cfg: RunConfig):
    if cfg.labeler == "msk":
        return msk_label(traj, cfg.msk)
    if cfg.labeler == "rs":
        return rs_label(traj, cfg.key_ratio, cfg.seg_len)
    if cfg.labeler == "vo":
        return vo_label(traj, cfg.msk.quantile, cfg.msk.min_seg_len)
    if cfg.labeler == "lv":
        return lv_label(traj, cfg.msk.quantile, cfg.msk.min_seg_len)
    raise ValueError(f"labeler {cfg.labeler!r} produces no segmentation")


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_gen(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = {}
    for split, n, seed_fn in (("train", cfg.n_train, _train_seed),
                              ("eval", cfg.n_eval, _eval_seed)):
        instances, trajs, truths = [], [], []
        for i in range(n):
            s = seed_fn(cfg, i)
            inst = gen_task(s, cfg.suite)
            traj, gt = gen_expert(inst, noise=cfg.noise, seed=s)
            instances.append(inst)
            trajs.append(traj)
            truths.append(gt)
        save_dataset(trajs, out / f"{split}.jsonl")
        save_groundtruth(truths, out / f"{split}_groundtruth.jsonl")
        save_instances(instances, out / f"{split}_instances.jsonl")
        splits[split] = {
            "episodes": n,
            "mean_length": float(np.mean([len(t) for t in trajs])) if trajs else 0.0,
        }
    _echo_config(cfg)
    _write_summary(cfg, "gen_summary.json", {"suite": cfg.suite, **splits})
    for split, info in splits.items():
        print(f"{split}: {info['episodes']} episodes, mean length {info['mean_length']:.1f}")
    return 0


def cmd_segment(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    dataset = out / "train.jsonl"
    if not dataset.exists():
        raise FileNotFoundError(f"dataset missing: {dataset} (run `gen` first)")
    if cfg.labeler == "dense":
        raise ValueError("the dense baseline has no segmentation stage")
    trajs = load_dataset(dataset)
    segsets = [_label_episode(t, cfg) for t in trajs]
    save_segments(segsets, out / "segments.jsonl", source=cfg.labeler)
    if cfg.profiles:
        profile_dir = out / "profiles"
        profile_dir.mkdir(exist_ok=True)
        for traj, segs in zip(trajs, segsets):
            prof = spectral_profile(traj, cfg.msk)
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(["t", "r_t", "b_t", "y_t"])
            for t in range(len(traj)):
                writer.writerow([t + 1, prof.hf_ratio[t], prof.bend[t], int(segs.mask[t])])
            (profile_dir / f"{traj.id}.csv").write_text(buf.getvalue())
    ratios = [s.key_ratio for s in segsets]
    seg_lens = [e - b + 1 for s in segsets for b, e in s.segments]
    summary = {
        "labeler": cfg.labeler,
        "episodes": len(segsets),
        "mean_key_ratio": float(np.mean(ratios)) if ratios else 0.0,
        "mean_segment_length": float(np.mean(seg_lens)) if seg_lens else 0.0,
        "segments_per_episode": len(seg_lens) / len(segsets) if segsets else 0.0,
    }
    _echo_config(cfg)
    _write_summary(cfg, "segment_summary.json", summary)
    print(f"{summary['episodes']} episodes: mean key ratio "
          f"{summary['mean_key_ratio']:.3f}, mean segment length "
          f"{summary['mean_segment_length']:.1f}")
    return 0


def cmd_relabel(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    dataset = out / "train.jsonl"
    if not dataset.exists():
        raise FileNotFoundError(f"dataset missing: {dataset} (run `gen` first)")
    trajs = load_dataset(dataset)
    lengths = {t.id: len(t) for t in trajs}
    seg_path = out / "segments.jsonl"
    if cfg.labeler == "dense":
        if cfg.h == "auto":
            if not seg_path.exists():
                raise ValueError("dense relabeling with h=auto needs segments.jsonl "
                                 "(or pass an explicit --h)")
            segsets = load_segments(seg_path, lengths)
            horizon = auto_horizon(segsets.values())
        else:
            horizon = int(cfg.h)
        samples = dense_relabel_dataset(trajs, horizon)
    else:
        if not seg_path.exists():
            raise FileNotFoundError(f"segmentation missing: {seg_path} (run `segment` first)")
        segsets = load_segments(seg_path, lengths)
        samples = relabel_dataset(trajs, segsets, cfg.h)
        horizon = samples[0].horizon
    save_relabeled(samples, out / "relabeled.jsonl")
    hist = mode_histogram(samples)
    _echo_config(cfg)
    _write_summary(cfg, "relabel_summary.json", {"h": horizon, "modes": hist,
                                                 "samples": len(samples)})
    print(f"{len(samples)} samples, H={horizon}, modes: "
          f"refine={hist['refine']} skip={hist['skip']} skip_tail={hist['skip_tail']}")
    return 0


def _eval_one_arm(samples, trajs, instances, cfg: RunConfig, budget: int):
    index = build_index(samples, trajs, k=cfg.k)
    return eval_suite(index, instances, budget)


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    needed = [out / "train.jsonl", out / "relabeled.jsonl", out / "eval_instances.jsonl"]
    for p in needed:
        if not p.exists():
            raise FileNotFoundError(f"eval input missing: {p}")
    trajs = load_dataset(needed[0])
    samples = load_relabeled(needed[1])
    instances = load_instances(needed[2])
    budget = cfg.budget if cfg.budget is not None else default_budget(trajs)
    stats = displacement_stats(samples, trajs)

    metrics = _eval_one_arm(samples, trajs, instances, cfg, budget)
    jump = jump_stats(metrics.results, stats)
    (out / "metrics.json").write_text(
        json.dumps(metrics.to_dict(jump=jump.to_dict()), indent=2) + "\n")
    export_jump_histogram(metrics.jump_distances, jump.threshold, out / "jump_hist.csv")
    summary = {"labeler": cfg.labeler, "budget": budget,
               "metrics": metrics.to_dict(jump=jump.to_dict())}
    print(f"{cfg.labeler}: SR {metrics.sr:.3f}, steps {metrics.steps:.1f}, "
          f"forward calls {metrics.forward_calls:.2f}")

    if cfg.compare == "dense":
        horizon = samples[0].horizon
        dense_samples = dense_relabel_dataset(trajs, horizon)
        dense_metrics = _eval_one_arm(dense_samples, trajs, instances, cfg, budget)
        dense_jump = jump_stats(dense_metrics.results, stats)
        (out / "metrics_dense.json").write_text(
            json.dumps(dense_metrics.to_dict(jump=dense_jump.to_dict()), indent=2) + "\n")
        export_jump_histogram(dense_metrics.jump_distances, dense_jump.threshold,
                              out / "jump_hist_dense.csv")
        reduction = 100.0 * (1.0 - metrics.steps / dense_metrics.steps)
        summary["dense"] = dense_metrics.to_dict(jump=dense_jump.to_dict())
        summary["step_reduction_pct"] = reduction
        print(f"dense: SR {dense_metrics.sr:.3f}, steps {dense_metrics.steps:.1f}, "
              f"forward calls {dense_metrics.forward_calls:.2f}")
        print(f"step reduction: {reduction:.1f}%")
    _echo_config(cfg)
    _write_summary(cfg, "eval_summary.json", summary)
    return 0


def _sweep_variants(cfg: RunConfig, axis: str):
    if axis == "q":
        for q in (0.70, 0.75, 0.80, 0.85, 0.90):
            yield q, dataclasses.replace(cfg, msk=dataclasses.replace(cfg.msk, quantile=q))
    elif axis == "W":
        for w in (4, 8, 16, 32):
            yield w, dataclasses.replace(cfg, msk=dataclasses.replace(cfg.msk, window=w))
    elif axis == "components":
        grid = (("full", True, True), ("wo_bend", True, False),
                ("wo_union", False, True), ("wo_both", False, False))
        for name, use_kf, use_bend in grid:
            msk = dataclasses.replace(cfg.msk, use_keyframes=use_kf, use_bend=use_bend)
            yield name, dataclasses.replace(cfg, msk=msk)
    elif axis == "labeler":
        for lab in ("msk", "rs", "vo", "lv"):
            yield lab, dataclasses.replace(cfg, labeler=lab)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")


def cmd_sweep(cfg: RunConfig, axis: str) -> int:
    # one shared dataset per sweep; only the labeling varies
    trajs, instances = [], []
    for i in range(cfg.n_train):
        s = _train_seed(cfg, i)
        traj, _ = gen_expert(gen_task(s, cfg.suite), noise=cfg.noise, seed=s)
        trajs.append(traj)
    for i in range(cfg.n_eval):
        instances.append(gen_task(_eval_seed(cfg, i), cfg.suite))
    budget = cfg.budget if cfg.budget is not None else default_budget(trajs)

    rows = []
    for value, variant in _sweep_variants(cfg, axis):
        segsets = {t.id: _label_episode(t, variant) for t in trajs}
        samples = relabel_dataset(trajs, segsets, variant.h)
        metrics = _eval_one_arm(samples, trajs, instances, variant, budget)
        steps_succ = "" if metrics.steps_succ is None else f"{metrics.steps_succ:.6g}"
        rows.append([value, f"{metrics.sr:.6g}", f"{metrics.steps:.6g}", steps_succ])
        print(f"{axis}={value}: SR {metrics.sr:.3f}, steps {metrics.steps:.1f}")

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([axis, "sr", "steps", "steps_succ"])
    writer.writerows(rows)
    (out / f"sweep_{axis}.csv").write_text(buf.getvalue())
    _echo_config(cfg)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skipkit",
        description="Key/skip segmentation, action relabeling, and closed-loop evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file; explicit flags override its values")
        p.add_argument("--suite", choices=sorted(SUITES), default=None)
        p.add_argument("--n-train", type=int, default=None)
        p.add_argument("--n-eval", type=int, default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (falls back to $SKIPKIT_SEED, then 0)")
        p.add_argument("--noise", type=float, default=None)
        p.add_argument("--labeler", choices=LABELERS, default=None)
        p.add_argument("--q", type=float, default=None, help="hf-ratio quantile threshold")
        p.add_argument("--window", type=int, default=None, help="short-time DCT window W")
        p.add_argument("--min-seg-len", type=int, default=None)
        p.add_argument("--bend-cutoff", type=float, default=None)
        p.add_argument("--bend-expand", type=int, default=None)
        p.add_argument("--kf-neighborhood", type=int, default=None)
        p.add_argument("--head-exclude-frac", type=float, default=None)
        p.add_argument("--no-bend", action="store_true")
        p.add_argument("--no-keyframes", action="store_true")
        p.add_argument("--key-ratio", type=float, default=None, help="rs labeler target ratio")
        p.add_argument("--seg-len", type=int, default=None, help="rs labeler segment length")
        p.add_argument("--h", type=str, default=None, help='chunk length H (int or "auto")')
        p.add_argument("--k", type=int, default=None, help="neighbors per policy query")
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--output-dir", type=str, default=None)

    add_common(sub.add_parser("gen", help="generate train/eval datasets"))
    seg = sub.add_parser("segment", help="label key segments of the training set")
    add_common(seg)
    seg.add_argument("--profiles", action="store_true",
                     help="dump per-step hf-ratio/bend CSV profiles")
    add_common(sub.add_parser("relabel", help="build relabeled training chunks"))
    ev = sub.add_parser("eval", help="closed-loop evaluation on held-out instances")
    add_common(ev)
    ev.add_argument("--compare", choices=("dense",), default=None,
                    help="also evaluate a dense-relabeled arm on the same instances")
    sw = sub.add_parser("sweep", help="ablation sweep over one axis")
    add_common(sw)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    return parser


_MSK_FLAGS = {
    "q": "quantile",
    "window": "window",
    "min_seg_len": "min_seg_len",
    "bend_cutoff": "bend_cutoff",
    "bend_expand": "bend_expand",
    "kf_neighborhood": "kf_neighborhood",
    "head_exclude_frac": "head_exclude_frac",
}


def _merge_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < explicit flags; seed falls back to SKIPKIT_SEED."""
    base: dict = {}
    msk_kwargs: dict = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        msk_kwargs.update(file_cfg.pop("msk", {}))
        base.update(file_cfg)
    for name in ("suite", "n_train", "n_eval", "seed", "noise", "labeler",
                 "key_ratio", "seg_len", "k", "budget", "output_dir"):
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    for flag, fld in _MSK_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            msk_kwargs[fld] = value
    if getattr(args, "no_bend", False):
        msk_kwargs["use_bend"] = False
    if getattr(args, "no_keyframes", False):
        msk_kwargs["use_keyframes"] = False
    if getattr(args, "h", None) is not None:
        base["h"] = args.h if args.h == "auto" else int(args.h)
    if getattr(args, "compare", None) is not None:
        base["compare"] = args.compare
    if getattr(args, "profiles", False):
        base["profiles"] = True
    if "seed" not in base and os.environ.get("SKIPKIT_SEED"):
        base["seed"] = int(os.environ["SKIPKIT_SEED"])
    base["msk"] = MskConfig(**msk_kwargs)
    return RunConfig(**base)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "segment":
            return cmd_segment(cfg)
        if args.command == "relabel":
            return cmd_relabel(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.axis)
        parser.error(f"unknown command {args.command!r}")
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
