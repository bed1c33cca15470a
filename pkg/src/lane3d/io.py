"""File formats: JSON Lines frames, binary rasters, flat config files, scene folders."""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .anchors import AnchorConfig, AnchorTensor
from .errors import InvalidLane, ParseError, SchemaError, ShapeMismatch
from .geometry import CameraModel, TopViewGrid
from .lanes import CATEGORIES, Lane3D
from .matching import MatchConfig
from .metrics import DEFAULT_THRESHOLDS

RASTER_MAGIC = b"L3DR"
_RASTER_HEADER = struct.Struct("<4s4sII")
_DTYPE_TAGS = {b"f32\x00": np.dtype("<f4"), b"u8\x00\x00": np.dtype("u1")}


@dataclass
class FrameRecord:
    frame_id: str
    camera: CameraModel | None = None
    lanes: list[Lane3D] = field(default_factory=list)
    anchors: AnchorTensor | None = None


def _pitch_to_degrees(rad: float) -> float:
    # Pick the degree value whose conversion back reproduces ``rad`` bit for bit.
    deg = math.degrees(rad)
    for direction in (math.inf, -math.inf):
        cand = deg
        for _ in range(8):
            if math.radians(cand) == rad:
                return cand
            cand = math.nextafter(cand, direction)
    return deg


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "height_m": cam.height_m,
        "pitch_deg": _pitch_to_degrees(cam.pitch_rad),
        "K": [float(v) for v in cam.intrinsics.ravel()],
        "width": cam.image_size[0],
        "height": cam.image_size[1],
    }


def camera_from_dict(d: dict, line=None) -> CameraModel:
    try:
        K = np.asarray(d["K"], dtype=np.float64)
        if K.shape != (9,):
            raise SchemaError("K must hold 9 reals", field="camera.K", line=line)
        return CameraModel(
            float(d["height_m"]), math.radians(float(d["pitch_deg"])), K.reshape(3, 3),
            (int(d["width"]), int(d["height"])),
        )
    except KeyError as e:
        raise SchemaError("missing camera field", field=f"camera.{e.args[0]}", line=line) from None
    except (TypeError, ValueError) as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(str(e), field="camera", line=line) from None


def lane_to_dict(lane: Lane3D) -> dict:
    return {
        "category": lane.category,
        "points": lane.points.tolist(),
        "visibility": [int(v) for v in lane.visibility],
        "prob": lane.prob,
    }


def lane_from_dict(d: dict, line=None, where="lanes") -> Lane3D:
    for key in ("category", "points"):
        if key not in d:
            raise SchemaError("missing lane field", field=f"{where}.{key}", line=line)
    if d["category"] not in CATEGORIES:
        raise SchemaError(f"unknown lane category {d['category']!r}", field=f"{where}.category", line=line)
    pts = d["points"]
    try:
        pts = np.asarray(pts, dtype=np.float64) if isinstance(pts, list) else None
    except (TypeError, ValueError):
        pts = None
    if pts is None or pts.ndim != 2 or pts.shape[1] != 3:
        raise SchemaError("points must be a list of [x, y, z]", field=f"{where}.points", line=line)
    vis = d.get("visibility")
    if vis is not None and (not isinstance(vis, list) or len(vis) != len(pts)):
        raise SchemaError(
            "visibility length must equal the number of points", field=f"{where}.visibility", line=line
        )
    if vis is not None and any(v not in (0, 1) for v in vis):
        raise SchemaError("visibility entries must be 0 or 1", field=f"{where}.visibility", line=line)
    try:
        return Lane3D(d["category"], pts, vis, d.get("prob", 1.0))
    except (InvalidLane, TypeError, ValueError) as e:
        raise SchemaError(str(e), field=f"{where}.points", line=line) from None


def anchors_to_dict(t: AnchorTensor) -> dict:
    return {
        "x_offsets": t.x_offsets.tolist(),
        "heights": t.heights.tolist(),
        "visibility": t.visibility.tolist(),
        "prob": t.prob.tolist(),
    }


def anchors_from_dict(d: dict, line=None) -> AnchorTensor:
    for key in ("x_offsets", "heights", "visibility", "prob"):
        if key not in d:
            raise SchemaError("missing anchor field", field=f"anchors.{key}", line=line)
    try:
        return AnchorTensor(d["x_offsets"], d["heights"], d["visibility"], d["prob"])
    except (ShapeMismatch, TypeError, ValueError) as e:
        raise SchemaError(str(e), field="anchors", line=line) from None


def frame_to_dict(fr: FrameRecord) -> dict:
    out = {"frame_id": fr.frame_id}
    if fr.camera is not None:
        out["camera"] = camera_to_dict(fr.camera)
    out["lanes"] = [lane_to_dict(l) for l in fr.lanes]
    if fr.anchors is not None:
        out["anchors"] = anchors_to_dict(fr.anchors)
    return out


def frame_from_dict(d, line=None) -> FrameRecord:
    if not isinstance(d, dict):
        raise SchemaError("frame must be a JSON object", line=line)
    if "frame_id" not in d:
        raise SchemaError("missing frame id", field="frame_id", line=line)
    cam = camera_from_dict(d["camera"], line) if d.get("camera") is not None else None
    lanes_raw = d.get("lanes", [])
    if not isinstance(lanes_raw, list):
        raise SchemaError("lanes must be a list", field="lanes", line=line)
    lanes = [lane_from_dict(l, line, f"lanes[{i}]") for i, l in enumerate(lanes_raw)]
    anchors = anchors_from_dict(d["anchors"], line) if d.get("anchors") is not None else None
    return FrameRecord(str(d["frame_id"]), cam, lanes, anchors)


def dumps_frame(fr: FrameRecord) -> str:
    # repr-based float formatting is the shortest string that round-trips exactly.
    return json.dumps(frame_to_dict(fr), separators=(",", ":"), allow_nan=False)


def write_jsonl(path, frames) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(dumps_frame(fr))
            fh.write("\n")


def read_jsonl(path) -> list[FrameRecord]:
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(e.msg, line=lineno) from None
            frames.append(frame_from_dict(obj, lineno))
    return frames


def write_raster(path, array) -> None:
    a = np.asarray(array)
    if a.ndim != 2:
        raise ValueError("rasters must be 2D")
    if a.dtype == np.uint8:
        tag, payload = b"u8\x00\x00", a.astype("u1")
    elif np.issubdtype(a.dtype, np.floating):
        tag, payload = b"f32\x00", a.astype("<f4")
    else:
        raise ValueError(f"unsupported raster dtype {a.dtype}")
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(RASTER_MAGIC, tag, w, h))
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RASTER_HEADER.size:
        raise ParseError("raster file shorter than its header")
    magic, tag, w, h = _RASTER_HEADER.unpack_from(data)
    if magic != RASTER_MAGIC:
        raise ParseError(f"bad raster magic {magic!r}")
    if tag not in _DTYPE_TAGS:
        raise SchemaError(f"unknown raster dtype tag {tag!r}", field="dtype")
    dtype = _DTYPE_TAGS[tag]
    payload = data[_RASTER_HEADER.size:]
    if len(payload) != w * h * dtype.itemsize:
        raise SchemaError(
            f"payload has {len(payload)} bytes, expected {w * h * dtype.itemsize}", field="payload"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(h, w).copy()


# -- flat key/value configuration -------------------------------------------

_LIST_KEYS = {"dense_y_positions", "anchor_x_positions", "y_positions", "thresholds"}
_PAIR_KEYS = {"top_view_x_range", "top_view_y_range"}
_INT_PAIR_KEYS = {"top_view_resolution"}
_FLOAT_KEYS = {
    "d_max", "match_fraction", "near_far_split", "range_end", "edit_cost",
    "y_ref", "prob_threshold", "vis_threshold",
}
CONFIG_KEYS = _LIST_KEYS | _PAIR_KEYS | _INT_PAIR_KEYS | _FLOAT_KEYS


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run depends on besides its input files."""

    match: MatchConfig = field(default_factory=MatchConfig)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    prob_threshold: float = 0.5
    vis_threshold: float = 0.5

    def to_dict(self) -> dict:
        m, a = self.match, self.anchors
        g = a.top_view_grid
        return {
            "dense_y_positions": list(m.dense_y_positions),
            "d_max": m.d_max,
            "match_fraction": m.match_fraction,
            "near_far_split": m.near_far_split,
            "range_end": m.range_end,
            "edit_cost": m.edit_cost,
            "anchor_x_positions": list(a.anchor_x_positions),
            "y_positions": list(a.y_positions),
            "y_ref": a.y_ref,
            "top_view_x_range": list(g.x_range),
            "top_view_y_range": list(g.y_range),
            "top_view_resolution": list(g.resolution),
            "thresholds": list(self.thresholds),
            "prob_threshold": self.prob_threshold,
            "vis_threshold": self.vis_threshold,
        }


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments, comma-separated lists)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=lineno)
        key, value = (s.strip() for s in line.split(sep, 1))
        out[key] = _parse_value(key, value, lineno)
    return out


def _parse_value(key: str, value: str, lineno: int):
    if key not in CONFIG_KEYS:
        raise SchemaError("unknown config key", field=key, line=lineno)
    try:
        if key in _FLOAT_KEYS:
            if key == "edit_cost" and value.lower() in ("", "none", "d_max"):
                return None
            return float(value)
        items = [s.strip() for s in value.strip("[]()").split(",") if s.strip()]
        if key in _INT_PAIR_KEYS:
            vals = tuple(int(s) for s in items)
        else:
            vals = tuple(float(s) for s in items)
        if (key in _PAIR_KEYS or key in _INT_PAIR_KEYS) and len(vals) != 2:
            raise SchemaError("expected two values", field=key, line=lineno)
        return vals
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"cannot parse {value!r}", field=key, line=lineno) from None


def build_run_config(overrides: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply flat ``overrides`` on top of ``base`` (defaults when omitted)."""
    base = base or RunConfig()
    unknown = set(overrides) - CONFIG_KEYS
    if unknown:
        raise SchemaError("unknown config key", field=sorted(unknown)[0])
    match_names = {f.name for f in fields(MatchConfig)}
    anchor_names = {"anchor_x_positions", "y_positions", "y_ref"}
    m_kw = {k: v for k, v in overrides.items() if k in match_names}
    a_kw = {k: v for k, v in overrides.items() if k in anchor_names}
    grid = base.anchors.top_view_grid
    g_kw = {}
    if "top_view_x_range" in overrides:
        g_kw["x_range"] = tuple(overrides["top_view_x_range"])
    if "top_view_y_range" in overrides:
        g_kw["y_range"] = tuple(overrides["top_view_y_range"])
    if "top_view_resolution" in overrides:
        g_kw["resolution"] = tuple(overrides["top_view_resolution"])
    try:
        if g_kw:
            a_kw["top_view_grid"] = replace(grid, **g_kw)
        r_kw = {}
        if "thresholds" in overrides:
            r_kw["thresholds"] = tuple(overrides["thresholds"])
        for k in ("prob_threshold", "vis_threshold"):
            if k in overrides:
                r_kw[k] = overrides[k]
        return replace(
            base,
            match=replace(base.match, **m_kw),
            anchors=replace(base.anchors, **a_kw),
            **r_kw,
        )
    except ValueError as e:
        raise SchemaError(str(e)) from None


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# -- scene folders -------------------------------------------------------------


def _spec_to_dict(spec) -> dict:
    return {
        "centerline_coeffs": list(spec.centerline_coeffs),
        "height_profile": [list(k) for k in spec.height_profile],
        "lane_offsets": list(spec.lane_offsets),
        "y_span": list(spec.y_span),
        "shoulder": spec.shoulder,
    }


def spec_from_dict(d: dict):
    from .scene import RoadSpec

    known = {"centerline_coeffs", "height_profile", "lane_offsets", "y_span", "shoulder"}
    extra = set(d) - known - {"occluders", "n_vehicles", "camera_ranges"}
    if extra:
        raise SchemaError("unknown road spec field", field=sorted(extra)[0])
    kw = {k: d[k] for k in known if k in d}
    if "height_profile" in kw:
        kw["height_profile"] = tuple(tuple(k) for k in kw["height_profile"])
    return RoadSpec(**kw)


def _box_to_dict(b) -> dict:
    return {k: getattr(b, k) for k in ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")}


def box_from_dict(d: dict):
    from .scene import Box

    try:
        return Box(**{k: float(d[k]) for k in ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")})
    except KeyError as e:
        raise SchemaError("missing box field", field=f"occluders.{e.args[0]}") from None


def save_scene(fixture, out_dir, frame_id: str = "scene") -> None:
    """Write ``scene.json``, ``lanes.jsonl``, ``depth.l3dr`` and ``semantic.l3dr``."""
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "frame_id": frame_id,
        "camera": camera_to_dict(fixture.camera),
        "spec": _spec_to_dict(fixture.spec),
        "occluders": [_box_to_dict(b) for b in fixture.occluders],
    }
    with open(os.path.join(out_dir, "scene.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_jsonl(os.path.join(out_dir, "lanes.jsonl"), [FrameRecord(frame_id, fixture.camera, fixture.lanes_gt)])
    write_raster(os.path.join(out_dir, "depth.l3dr"), fixture.depth_map)
    write_raster(os.path.join(out_dir, "semantic.l3dr"), fixture.semantic_map)


def load_scene(scene_dir):
    from .scene import SceneFixture

    try:
        with open(os.path.join(scene_dir, "scene.json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from None
    cam = camera_from_dict(meta["camera"])
    spec = spec_from_dict(meta["spec"])
    boxes = [box_from_dict(b) for b in meta.get("occluders", [])]
    frames = read_jsonl(os.path.join(scene_dir, "lanes.jsonl"))
    lanes = frames[0].lanes if frames else []
    depth = read_raster(os.path.join(scene_dir, "depth.l3dr")).astype(np.float64)
    sem = read_raster(os.path.join(scene_dir, "semantic.l3dr"))
    w, h = cam.image_size
    if depth.shape != (h, w) or sem.shape != (h, w):
        raise SchemaError("raster size does not match the camera image size", field="rasters")
    return SceneFixture(cam, spec, lanes, depth, sem, boxes), meta.get("frame_id", "scene")
