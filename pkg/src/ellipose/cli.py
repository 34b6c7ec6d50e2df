"""Command-line interface: reconstruct, annotate, pose, simulate.

Exit codes: 0 success, 2 parse/usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import dataio
from .errors import ElliposeError, ParseError, SchemaVersionMismatch
from .geometry import crop_transform, inscribed_ellipse
from .metrics import pose_errors, reprojection_error, add_error
from .multibin import decode_prediction
from .pose import RansacOptions, ransac_pose
from .reconstruction import generate_annotations, reconstruct_cloud
from .scenarios import run_scenario
from .simulator import DEG, DetectorModel, run_detector

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3


def _cmd_reconstruct(args) -> int:
    dataset = dataio.load_dataset(args.dataset)
    wanted = set(args.labels.split(",")) if args.labels else None
    boxes_by_view = {}
    for vid, anns in dataset.annotations.items():
        rows = [
            (a.label, a.box)
            for a in anns
            if wanted is None or a.label in wanted
        ]
        if rows:
            boxes_by_view[vid] = rows
    cloud, failures = reconstruct_cloud(
        boxes_by_view, dataset.views, allow_partial=args.allow_partial
    )
    dataio.save_cloud(cloud, args.out)
    for label, exc in sorted(failures.items()):
        print(f"warning: skipped label {label!r}: {exc}", file=sys.stderr)
    print(f"wrote {args.out} ({len(cloud.entries)} objects)")
    return EXIT_OK


def _cmd_annotate(args) -> int:
    dataset = dataio.load_dataset(args.dataset)
    cloud = dataio.load_cloud(args.cloud)
    annotations, skipped = generate_annotations(cloud, dataset.views)
    dataio.save_annotations(annotations, skipped, args.out)
    for vid, label, reason in skipped:
        print(f"note: skipped {label!r} in view {vid}: {reason}", file=sys.stderr)
    n = sum(len(rows) for rows in annotations.values())
    print(f"wrote {args.out} ({n} annotations, {len(skipped)} skipped)")
    return EXIT_OK


def _detections_for_view(dataset, view, args, annotations_override):
    """(label, Ellipse) detections according to --detections."""
    if args.detections == "predictions":
        pred = dataset.predictions
        if pred is None:
            raise ParseError("dataset carries no predictions", file=args.dataset)
        out = []
        for rec in pred.records.get(view.view_id, []):
            T = crop_transform(rec.box, pred.crop_size)
            out.append((rec.label, decode_prediction(rec.prediction, pred.config, T)))
        return out
    if args.detections == "detector":
        if dataset.scene is None:
            raise ParseError("dataset carries no scene for the detector", file=args.dataset)
        model = DetectorModel(args.detector_kind, args.box_noise, seed=args.seed)
        return [(label, e) for label, e, _ in run_detector(model, dataset.scene, view)]
    if annotations_override is not None:
        return [
            (label, e) for label, e, _ in annotations_override.get(view.view_id, [])
        ]
    out = []
    for a in dataset.annotations.get(view.view_id, []):
        e = a.ellipse if a.ellipse is not None else inscribed_ellipse(a.box)
        out.append((a.label, e))
    return out


def _cmd_pose(args) -> int:
    dataset = dataio.load_dataset(args.dataset)
    cloud = dataio.load_cloud(args.cloud)
    orientations = (
        dataio.load_orientations(args.orientation_file)
        if args.orientation_file
        else None
    )
    annotations_override = None
    if args.annotations_file:
        annotations_override, _ = dataio.load_annotations(args.annotations_file)
    mode = args.mode.replace("-", "_")
    eval_points = (
        dataset.scene.evaluation_points(1000) if dataset.scene is not None else None
    )
    poses, failures, rows = {}, {}, []
    for view in dataset.views:
        detections = _detections_for_view(dataset, view, args, annotations_override)
        if orientations is not None:
            R = orientations.get(view.view_id, view.pose.R)
        else:
            R = view.pose.R
        opts = RansacOptions(
            mode=mode,
            iterations=args.iterations,
            inlier_iou_threshold=args.iou_threshold,
            seed=args.seed,
            rotation=R if mode == "orientation_known" else None,
            refine_orientation=not args.keep_orientation,
        )
        try:
            est = ransac_pose(detections, cloud, view.cam, opts)
        except ElliposeError as exc:
            failures[view.view_id] = f"{type(exc).__name__}: {exc}"
            continue
        poses[view.view_id] = est
        rot, pos = pose_errors(est.pose, view.pose)
        if eval_points is not None:
            try:
                reproj = reprojection_error(est.pose, view.pose, view.cam, eval_points)
            except ElliposeError:
                reproj = float("inf")
            add = add_error(est.pose, view.pose, eval_points)
        else:
            reproj = add = float("nan")
        rows.append(
            (
                view.view_id,
                len(est.inliers),
                float(est.score),
                rot / DEG,
                pos,
                reproj,
                add,
            )
        )
    dataio.save_poses(poses, failures, args.out_poses)
    dataio.write_csv(
        args.out_metrics,
        [
            "view_id",
            "n_inliers",
            "mean_inlier_iou[ratio]",
            "rotation_error[deg]",
            "position_error[world]",
            "reprojection_error[px]",
            "add_error[world]",
        ],
        rows,
    )
    for vid, reason in failures.items():
        print(f"warning: no pose for view {vid}: {reason}", file=sys.stderr)
    print(f"wrote {args.out_poses} and {args.out_metrics} ({len(rows)} views)")
    if not poses:
        print("error: no view produced a pose", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_simulate(args) -> int:
    with open(args.scenario, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", file=args.scenario) from exc
    if doc.get("schema_version") != dataio.SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{args.scenario}: unsupported schema_version")
    name = doc.get("name")
    if not name:
        raise ParseError("missing field", file=args.scenario, field="name")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    paths = run_scenario(name, doc.get("params", {}), args.out_dir, seed)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ellipose",
        description="Object-based camera pose estimation from ellipse-ellipsoid geometry",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="build an ellipsoid cloud from annotated boxes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default=None, help="comma-separated label filter")
    p.add_argument("--allow-partial", action="store_true")
    p.set_defaults(fn=_cmd_reconstruct)

    p = sub.add_parser("annotate", help="reproject a cloud into every view")
    p.add_argument("--dataset", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_annotate)

    p = sub.add_parser("pose", help="estimate per-view camera poses")
    p.add_argument("--dataset", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out-poses", required=True)
    p.add_argument("--out-metrics", required=True)
    p.add_argument("--mode", choices=["orientation-known", "full"], default="orientation-known")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=8)
    p.add_argument("--iou-threshold", type=float, default=0.75)
    p.add_argument("--orientation-file", default=None)
    p.add_argument(
        "--annotations-file", default=None,
        help="use ellipses from an annotate output instead of the dataset",
    )
    p.add_argument(
        "--detections",
        choices=["annotations", "predictions", "detector"],
        default="annotations",
    )
    p.add_argument("--detector-kind", default="gt_projection")
    p.add_argument("--box-noise", type=float, default=0.0)
    p.add_argument(
        "--keep-orientation",
        action="store_true",
        help="never refine the provided orientation",
    )
    p.set_defaults(fn=_cmd_pose)

    p = sub.add_parser("simulate", help="run a named scenario end to end")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, SchemaVersionMismatch, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ElliposeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
