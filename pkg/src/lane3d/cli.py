"""Command line entry point: ``lane3d <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io as lio
from .anchors import decode, encode_with_report
from .errors import Lane3DError
from .geometry import ego_to_topview, topview_to_ego
from .lanes import CATEGORIES
from .loss import loss as anchor_loss
from .metrics import EvalFrame, evaluate
from .matching import FrameMatcher, densify
from .scene import (
    Box,
    NoiseModel,
    OcclusionLabel,
    finalize_ground_truth,
    generate_scene,
    label_occlusion,
    perturb_predictions,
    road_lanes,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(obj, path=None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _run_config(args):
    overrides = lio.load_config(args.config) if getattr(args, "config", None) else {}
    flag_map = {
        "d_max": "d_max",
        "match_fraction": "match_fraction",
        "near_far_split": "near_far_split",
        "range_end": "range_end",
        "prob_threshold": "prob_threshold",
        "vis_threshold": "vis_threshold",
        "y_ref": "y_ref",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "thresholds", None):
        overrides["thresholds"] = lio._parse_value("thresholds", args.thresholds, 0)
    return lio.build_run_config(overrides)


def _fmt(v) -> str:
    return "     n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:8.4f}"


def summary_table(reports) -> str:
    head = f"{'category':<12}{'AP':>8}{'F-max':>8}{'tau*':>8}{'x_near':>8}{'x_far':>8}{'z_near':>8}{'z_far':>8}{'gt':>7}{'pred':>7}"
    lines = [head, "-" * len(head)]
    for cat, r in reports.items():
        lines.append(
            f"{cat:<12}{_fmt(r.ap)}{_fmt(r.f_max)}{_fmt(r.best_threshold)}"
            f"{_fmt(r.x_err_near)}{_fmt(r.x_err_far)}{_fmt(r.z_err_near)}{_fmt(r.z_err_far)}"
            f"{r.counts['gt']:>7d}{r.counts['pred']:>7d}"
        )
    return "\n".join(lines)


def _pair_frames(gt_frames, pred_frames):
    preds = {}
    for fr in pred_frames:
        if fr.frame_id in preds:
            raise Lane3DError(f"duplicate prediction frame {fr.frame_id!r}")
        preds[fr.frame_id] = fr
    gt_ids = set()
    pairs = []
    for fr in gt_frames:
        if fr.frame_id in gt_ids:
            raise Lane3DError(f"duplicate ground-truth frame {fr.frame_id!r}")
        gt_ids.add(fr.frame_id)
        p = preds.get(fr.frame_id)
        pairs.append((fr, p))
    orphan = sorted(set(preds) - gt_ids)
    if orphan:
        raise Lane3DError(f"prediction frame {orphan[0]!r} has no ground truth")
    return pairs


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    pairs = _pair_frames(lio.read_jsonl(args.gt), lio.read_jsonl(args.pred))
    frames = [EvalFrame(g.frame_id, g.lanes, p.lanes if p else []) for g, p in pairs]
    reports = {cat: evaluate(frames, cfg.match, cfg.thresholds, cat) for cat in CATEGORIES}
    doc = {"config": cfg.to_dict(), "reports": {c: r.to_dict() for c, r in reports.items()}}
    _dump_json(doc, args.out)
    if args.dump_matches:
        _dump_json(_match_dump(frames, cfg, reports), args.dump_matches)
    print(summary_table(reports))
    return EXIT_OK


def _match_dump(frames, cfg, reports) -> dict:
    out = []
    for fr in frames:
        entry = {"frame_id": fr.frame_id}
        for cat in CATEGORIES:
            tau = reports[cat].best_threshold
            gts = [l for l in fr.gt if l.category == cat]
            preds = [l for l in fr.pred if l.category == cat]
            m = FrameMatcher([densify(l, cfg.match) for l in preds], [densify(l, cfg.match) for l in gts], cfg.match)
            rep = m.report(m.pred_probs >= tau)
            entry[cat] = {
                "threshold": tau,
                "assignment": [[p, g, c] for p, g, c in rep.assignment],
                "pred_matched": rep.pred_matched.tolist(),
                "gt_matched": rep.gt_matched.tolist(),
            }
        out.append(entry)
    return {"frames": out}


def cmd_transform(args) -> int:
    c = args.coords
    if args.to_ego:
        if len(c) != 2 or args.z is None:
            raise UsageError("--to-ego expects two coordinates (x_bar y_bar) and --z")
        p = topview_to_ego(c, args.z, args.height)
    else:
        if len(c) == 3 and args.z is None:
            pt = c
        elif len(c) == 2 and args.z is not None:
            pt = [c[0], c[1], args.z]
        else:
            raise UsageError("--to-topview expects x y z (or x y with --z)")
        p = ego_to_topview(pt, args.height)
    print(" ".join(repr(float(v)) for v in p))
    return EXIT_OK


def cmd_anchors(args) -> int:
    cfg = _run_config(args)
    frames = lio.read_jsonl(args.input)
    out = []
    if args.action == "encode":
        for fr in frames:
            if fr.camera is None:
                raise Lane3DError(f"frame {fr.frame_id!r} has no camera; its height is required")
            tensor, report = encode_with_report(fr.lanes, cfg.anchors, fr.camera.height_m)
            for col in report.collisions:
                print(
                    f"{fr.frame_id}: anchor {col.anchor} ({col.category}) kept lane {col.kept_lane}, "
                    f"dropped lane {col.dropped_lane}",
                    file=sys.stderr,
                )
            out.append(lio.FrameRecord(fr.frame_id, fr.camera, [], tensor))
    else:
        for fr in frames:
            if fr.camera is None or fr.anchors is None:
                raise Lane3DError(f"frame {fr.frame_id!r} needs a camera and anchors to decode")
            lanes = decode(fr.anchors, cfg.anchors, fr.camera.height_m, cfg.prob_threshold, cfg.vis_threshold)
            out.append(lio.FrameRecord(fr.frame_id, fr.camera, lanes))
    lio.write_jsonl(args.out, out)
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg = _run_config(args)
    pairs = _pair_frames(lio.read_jsonl(args.gt), lio.read_jsonl(args.pred))
    per_frame = {}
    totals = {"existence_term": 0.0, "offset_term": 0.0, "height_term": 0.0, "visibility_term": 0.0, "total": 0.0}
    for g, p in pairs:
        if p is None or p.anchors is None or g.anchors is None:
            raise Lane3DError(f"frame {g.frame_id!r} lacks anchor tensors")
        b = anchor_loss(p.anchors, g.anchors, cfg.anchors).as_dict()
        per_frame[g.frame_id] = b
        for k in totals:
            totals[k] += b[k]
    text = _dump_json({"frames": per_frame, "sum": totals}, args.out)
    print(text, end="")
    return EXIT_OK


def _spec_boxes(spec, raw):
    boxes = []
    for d in raw:
        if "x_min" in d:
            boxes.append(lio.box_from_dict(d))
        else:
            boxes.append(Box.on_ground(spec, d["x"], d["y"], d["width"], d["length"], d["height"]))
    return boxes


def cmd_fixtures(args) -> int:
    if args.action == "perturb":
        noise = NoiseModel(args.sigma_x, args.sigma_z, args.drop_rate, args.spurious_rate)
        frames = lio.read_jsonl(args.gt)
        out = []
        for k, fr in enumerate(frames):
            lanes = perturb_predictions(fr.lanes, args.seed + k, noise)
            out.append(lio.FrameRecord(fr.frame_id, fr.camera, lanes))
        lio.write_jsonl(args.out, out)
        return EXIT_OK

    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise lio.ParseError(e.msg, line=e.lineno) from None
    spec = lio.spec_from_dict(raw)
    boxes = _spec_boxes(spec, raw.get("occluders", []))
    n_vehicles = int(raw.get("n_vehicles", 0))
    os.makedirs(args.out_dir, exist_ok=True)
    records = []
    for k in range(args.frames):
        seed = args.seed + k
        frame_id = f"{seed:06d}"
        if args.lanes_only:
            from .scene import CameraRanges, sample_camera

            cam = sample_camera(np.random.default_rng(seed), CameraRanges())
            records.append(lio.FrameRecord(frame_id, cam, road_lanes(spec)))
            continue
        fx = generate_scene(spec, seed, n_vehicles=n_vehicles, occluders=boxes)
        sub = args.out_dir if args.frames == 1 else os.path.join(args.out_dir, f"frame_{frame_id}")
        lio.save_scene(fx, sub, frame_id)
        records.append(lio.FrameRecord(frame_id, fx.camera, fx.lanes_gt))
    lio.write_jsonl(os.path.join(args.out_dir, "gt.jsonl"), records)
    return EXIT_OK


def cmd_occlusion(args) -> int:
    fixture, frame_id = lio.load_scene(args.scene)
    labels = label_occlusion(fixture, args.eps)
    final = finalize_ground_truth(fixture.lanes_gt, labels)
    out = args.out or os.path.join(args.scene, "gt_final.jsonl")
    lio.write_jsonl(out, [lio.FrameRecord(frame_id, fixture.camera, final)])
    counts = {lab.name.lower(): 0 for lab in OcclusionLabel}
    for lab in labels:
        for code, n in zip(*np.unique(lab, return_counts=True)):
            counts[OcclusionLabel(int(code)).name.lower()] += int(n)
    print(_dump_json({"frame_id": frame_id, "labels": counts, "lanes_kept": len(final)}), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lane3d", description="3D lane geometry, anchors, losses, metrics and fixtures")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add_config(sp):
        sp.add_argument("--config", help="flat key = value config file")

    e = sub.add_parser("eval", help="match predictions against ground truth and report AP/F-score")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--dump-matches", dest="dump_matches")
    add_config(e)
    e.add_argument("--d-max", dest="d_max", type=float)
    e.add_argument("--match-fraction", dest="match_fraction", type=float)
    e.add_argument("--near-far-split", dest="near_far_split", type=float)
    e.add_argument("--range-end", dest="range_end", type=float)
    e.add_argument("--thresholds", help="comma-separated probability thresholds")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("transform", help="convert points between top-view and ego frames")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--to-ego", action="store_true")
    g.add_argument("--to-topview", action="store_true")
    t.add_argument("--height", type=float, required=True)
    t.add_argument("--z", type=float)
    t.add_argument("coords", type=float, nargs="+")
    t.set_defaults(func=cmd_transform)

    a = sub.add_parser("anchors", help="encode lanes to anchor tensors or decode them back")
    a.add_argument("action", choices=["encode", "decode"])
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out", required=True)
    add_config(a)
    a.add_argument("--prob-threshold", dest="prob_threshold", type=float)
    a.add_argument("--vis-threshold", dest="vis_threshold", type=float)
    a.add_argument("--y-ref", dest="y_ref", type=float)
    a.set_defaults(func=cmd_anchors)

    lo = sub.add_parser("loss", help="evaluate the anchor loss between two tensor files")
    lo.add_argument("--pred", required=True)
    lo.add_argument("--gt", required=True)
    lo.add_argument("--out")
    add_config(lo)
    lo.set_defaults(func=cmd_loss)

    f = sub.add_parser("fixtures", help="generate synthetic scenes or pseudo-predictions")
    f.add_argument("action", choices=["gen", "perturb"])
    f.add_argument("--spec")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out-dir", dest="out_dir")
    f.add_argument("--frames", type=int, default=1)
    f.add_argument("--lanes-only", dest="lanes_only", action="store_true")
    f.add_argument("--gt")
    f.add_argument("--out")
    f.add_argument("--sigma-x", dest="sigma_x", type=float, default=0.0)
    f.add_argument("--sigma-z", dest="sigma_z", type=float, default=0.0)
    f.add_argument("--drop-rate", dest="drop_rate", type=float, default=0.0)
    f.add_argument("--spurious-rate", dest="spurious_rate", type=float, default=0.0)
    f.set_defaults(func=cmd_fixtures)

    o = sub.add_parser("occlusion", help="label lane-point occlusion in a generated scene")
    o.add_argument("action", choices=["label"])
    o.add_argument("--scene", required=True)
    o.add_argument("--eps", type=float, default=0.5)
    o.add_argument("--out")
    o.set_defaults(func=cmd_occlusion)
    return p


def _check_required(args):
    if args.command == "fixtures":
        need = ("spec", "out_dir") if args.action == "gen" else ("gt", "out")
        missing = [n for n in need if getattr(args, n) is None]
        if missing:
            raise UsageError(f"fixtures {args.action} requires --{missing[0].replace('_', '-')}")
        if args.frames < 1:
            raise UsageError("--frames must be at least 1")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_required(args)
        return args.func(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    except (Lane3DError, OSError, KeyError, ValueError) as e:
        print(f"lane3d: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
