"""Command-line front end.

Subcommands cover the pipeline stages individually (extract, index,
retrieve, match), the report-producing tail (chains, eval, run), and
synthetic dataset generation (synth). Stage subcommands persist their
outputs under --work-dir, so a later subcommand resumes instead of
recomputing. Exit codes: 0 success, 2 bad configuration, 3 bad data,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dataset import load_dataset, save_dataset
from .errors import DefectMatchError
from .features import FeatureConfig
from .matching import MatchConfig
from .chains import MatchThresholdConfig
from .pipeline import PipelineConfig, emit_report, run_pipeline
from .retrieval import RetrievalConfig
from .synth import SynthConfig, generate, plant_trap_scenario

_F = FeatureConfig()
_R = RetrievalConfig()
_M = MatchConfig()
_T = MatchThresholdConfig()
_S = SynthConfig()


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0,
                   help="global seed: vocabulary training and match verification")
    p.add_argument("--workers", type=int, default=1,
                   help="thread count; never changes results")
    return p


def _pipeline_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--work-dir", default=None,
                   help="cache directory for resumable stage outputs")

    g = p.add_argument_group("features")
    g.add_argument("--fast-threshold", type=int, default=_F.fast_threshold)
    g.add_argument("--target-keypoints", type=int, default=_F.target_keypoints)
    g.add_argument("--pyramid-levels", type=int, default=_F.pyramid_levels)
    g.add_argument("--scale-factor", type=float, default=_F.scale_factor)
    g.add_argument("--patch-radius", type=int, default=_F.patch_radius)
    g.add_argument("--descriptor-pattern-seed", type=int,
                   default=_F.descriptor_pattern_seed)

    g = p.add_argument_group("retrieval")
    g.add_argument("--alpha", type=float, default=_R.alpha,
                   help="blend weight: 1 = bag of words only, 0 = embeddings only")
    g.add_argument("--top-k", type=int, default=_R.top_k)
    g.add_argument("--min-score", type=float, default=_R.min_score)
    g.add_argument("--vocab-k", type=int, default=_R.vocab_k)
    g.add_argument("--vocab-train-cap", type=int, default=_R.vocab_train_cap)

    g = p.add_argument_group("matching")
    g.add_argument("--ratio", type=float, default=_M.ratio)
    g.add_argument("--cross-check", action=argparse.BooleanOptionalAction,
                   default=_M.cross_check)
    g.add_argument("--max-distance", type=int, default=_M.max_distance)
    g.add_argument("--ransac", action=argparse.BooleanOptionalAction,
                   default=_M.ransac_enabled, help="geometric verification")
    g.add_argument("--ransac-iters", type=int, default=_M.ransac_iters)
    g.add_argument("--ransac-inlier-px", type=float, default=_M.ransac_inlier_px)
    g.add_argument("--ransac-min-matches", type=int, default=_M.ransac_min_matches)

    g = p.add_argument_group("chaining")
    g.add_argument("--tau", type=int, default=_T.tau,
                   help="valid-match count required to link two defects")
    return p


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        features=FeatureConfig(
            fast_threshold=args.fast_threshold,
            target_keypoints=args.target_keypoints,
            pyramid_levels=args.pyramid_levels,
            scale_factor=args.scale_factor,
            patch_radius=args.patch_radius,
            descriptor_pattern_seed=args.descriptor_pattern_seed,
        ),
        retrieval=RetrievalConfig(
            alpha=args.alpha,
            top_k=args.top_k,
            min_score=args.min_score,
            vocab_k=args.vocab_k,
            vocab_train_cap=args.vocab_train_cap,
        ),
        matching=MatchConfig(
            ratio=args.ratio,
            cross_check=args.cross_check,
            max_distance=args.max_distance,
            ransac_enabled=args.ransac,
            ransac_iters=args.ransac_iters,
            ransac_inlier_px=args.ransac_inlier_px,
            ransac_min_matches=args.ransac_min_matches,
            seed=args.seed,
        ),
        threshold=MatchThresholdConfig(tau=args.tau),
        seed=args.seed,
        workers=args.workers,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defectmatch",
        description="Match structural defect detections across overlapping "
                    "inspection images and chain them into per-defect groups.",
    )
    common = _common_flags()
    pipe = _pipeline_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    for name, stop, blurb in (
        ("extract", "features", "detect and describe keypoints per image"),
        ("index", "index", "build the visual vocabulary and per-image BoW vectors"),
        ("retrieve", "retrieve", "rank likely-overlapping image pairs"),
        ("match", "match", "match retrieved pairs and count valid matches"),
    ):
        sp = sub.add_parser(name, parents=[common, pipe], help=blurb)
        sp.set_defaults(func=cmd_stage, stop_after=stop)

    sp = sub.add_parser("chains", parents=[common, pipe],
                        help="full pipeline, report without evaluation")
    sp.add_argument("--out", required=True, help="report output directory")
    sp.set_defaults(func=cmd_report, eval_mode="never")

    sp = sub.add_parser("eval", parents=[common, pipe],
                        help="full pipeline, metrics against ground truth")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report, eval_mode="require")

    sp = sub.add_parser("run", parents=[common, pipe],
                        help="full pipeline; evaluates when ground truth is present")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report, eval_mode="auto")

    sp = sub.add_parser("synth", parents=[common],
                        help="generate a synthetic survey dataset")
    sp.add_argument("--out", required=True, help="dataset output directory")
    sp.add_argument("--dataset-id", default="synth")
    sp.add_argument("--canvas-size", type=int, nargs=2, default=list(_S.canvas_size),
                    metavar=("W", "H"))
    sp.add_argument("--n-crops", type=int, default=_S.n_crops)
    sp.add_argument("--crop-size", type=int, nargs=2, default=list(_S.crop_size),
                    metavar=("W", "H"))
    sp.add_argument("--overlap-target", type=float, default=_S.overlap_target)
    sp.add_argument("--n-defects", type=int, default=_S.n_defects)
    sp.add_argument("--defect-classes", nargs="+", default=list(_S.defect_classes))
    sp.add_argument("--n-utilities", type=int, default=_S.n_utilities)
    sp.add_argument("--rotation-jitter", type=float, default=_S.rotation_jitter)
    sp.add_argument("--noise-sigma", type=float, default=_S.noise_sigma)
    sp.add_argument("--scale-jitter", type=float, default=_S.scale_jitter)
    sp.add_argument("--center-jitter", type=float, default=_S.center_jitter)
    sp.add_argument("--trap", action=argparse.BooleanOptionalAction, default=False,
                    help="plant the repeated-ruler scenario instead of a survey")
    sp.set_defaults(func=cmd_synth)
    return parser


def cmd_stage(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.manifest)
    summary = run_pipeline(
        dataset, config_from_args(args),
        work_dir=args.work_dir, stop_after=args.stop_after,
    )
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.manifest)
    with_eval = {"never": False, "require": True, "auto": None}[args.eval_mode]
    report = run_pipeline(
        dataset, config_from_args(args),
        work_dir=args.work_dir, with_eval=with_eval,
    )
    paths = emit_report(report, args.out)
    print(f"chains: {len(report.chains)}  singletons: {len(report.singletons)}  "
          f"image pairs matched: {len(report.retrieval_pairs)}")
    if report.evaluation is not None:
        pw, ch = report.evaluation.pairwise, report.evaluation.chain
        print(f"pairwise precision={_show(pw.precision)} recall={_show(pw.recall)}")
        print(f"chain    precision={_show(ch.precision)} recall={_show(ch.recall)}")
    for name in ("report", "chains", "metrics"):
        print(f"wrote {paths[name]}")
    return 0


def _show(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        canvas_size=tuple(args.canvas_size),
        n_crops=args.n_crops,
        crop_size=tuple(args.crop_size),
        overlap_target=args.overlap_target,
        n_defects=args.n_defects,
        defect_classes=tuple(args.defect_classes),
        n_utilities=args.n_utilities,
        rotation_jitter=args.rotation_jitter,
        noise_sigma=args.noise_sigma,
        scale_jitter=args.scale_jitter,
        center_jitter=args.center_jitter,
    )
    scene = plant_trap_scenario(cfg) if args.trap else generate(cfg)
    manifest = save_dataset(
        args.out,
        args.dataset_id,
        scene.records,
        scene.pixels,
        scene.detections,
        embeddings=scene.embeddings if scene.embeddings else None,
        ground_truth=scene.ground_truth,
    )
    print(f"{len(scene.records)} images, {len(scene.detections)} detections")
    print(f"wrote {manifest}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DefectMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
