"""Synthetic road scenes and ground-truth post-processing.

A scene is a parametric road (lateral polynomial, piecewise-linear height
profile, parallel lanes) seen by a randomly placed camera, with box-shaped
vehicles. Depth and semantic rasters are produced by casting one ray per
pixel center against the ground height field and the boxes, keeping the
nearest hit. Depth stores the ego-frame forward distance ``y`` of the hit.

Lane points are then labeled by comparing their ``y`` with the depth seen at
their image location, and the label decides what survives as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidSpec
from .geometry import CameraModel, ego_to_camera, rotation_translation
from .lanes import CENTERLINE, LANELINE, Lane3D

#: Lane labels further than this from the camera center are truncated.
MAX_LABEL_DISTANCE = 200.0
DEFAULT_EPS = 0.5


class SemanticClass(IntEnum):
    SKY = 0
    ROAD = 1
    TERRAIN = 2
    VEHICLE = 3


class OcclusionLabel(IntEnum):
    VISIBLE = 0
    FOREGROUND_OCCLUDED = 1
    BACKGROUND_OCCLUDED = 2
    OUT_OF_IMAGE = 3
    BEYOND_RANGE = 4


@dataclass(frozen=True)
class RoadSpec:
    """Parametric road.

    Args:
        centerline_coeffs: coefficients of the lateral curve
            ``x(y) = c0 + c1 y + c2 y^2 + ...``.
        height_profile: ``(y, z)`` knots of the piecewise-linear ground
            height; the height is held flat beyond the first and last knot.
        lane_offsets: lateral offsets of the lane lines from the curve.
            Center lines run midway between neighbouring lane lines.
        y_span: ``(y_start, y_end)`` covered by the lane polylines.
        shoulder: road surface width beyond the outermost lane lines; the rest
            of the ground is terrain.
    """

    centerline_coeffs: tuple[float, ...] = (0.0,)
    height_profile: tuple[tuple[float, float], ...] = ((0.0, 0.0), (100.0, 0.0))
    lane_offsets: tuple[float, ...] = (-5.25, -1.75, 1.75, 5.25)
    y_span: tuple[float, float] = (1.0, 100.0)
    shoulder: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "centerline_coeffs", tuple(float(c) for c in self.centerline_coeffs))
        object.__setattr__(
            self, "height_profile", tuple((float(y), float(z)) for y, z in self.height_profile)
        )
        object.__setattr__(self, "lane_offsets", tuple(sorted(float(o) for o in self.lane_offsets)))
        object.__setattr__(self, "y_span", (float(self.y_span[0]), float(self.y_span[1])))
        if not self.centerline_coeffs:
            raise InvalidSpec("centerline_coeffs must not be empty")
        if not self.y_span[0] < self.y_span[1]:
            raise InvalidSpec(f"y_span must be increasing, got {self.y_span}")
        if len(self.height_profile) < 1:
            raise InvalidSpec("height_profile needs at least one knot")
        knots_y = [y for y, _ in self.height_profile]
        if any(b <= a for a, b in zip(knots_y, knots_y[1:])):
            raise InvalidSpec("height profile knots must have strictly increasing y")
        if not self.lane_offsets:
            raise InvalidSpec("at least one lane offset is required")
        if self.shoulder < 0:
            raise InvalidSpec("shoulder must be non-negative")

    def center_x(self, y) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(y, dtype=np.float64), self.centerline_coeffs)

    def height(self, y) -> np.ndarray:
        ky = [k[0] for k in self.height_profile]
        kz = [k[1] for k in self.height_profile]
        return np.interp(np.asarray(y, dtype=np.float64), ky, kz)

    def road_bounds(self) -> tuple[float, float]:
        return self.lane_offsets[0] - self.shoulder, self.lane_offsets[-1] + self.shoulder


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in the ego frame."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise InvalidSpec(f"degenerate box {self}")

    @classmethod
    def on_ground(cls, spec: RoadSpec, x: float, y: float, width: float, length: float, height: float):
        """Box centered at ground point ``(x, y)``, resting on the road surface."""
        z0 = float(spec.height(y))
        return cls(x - width / 2, x + width / 2, y - length / 2, y + length / 2, z0, z0 + height)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])


@dataclass(frozen=True)
class CameraRanges:
    """Sampling ranges for the random camera pose and its fixed intrinsics."""

    height_m: tuple[float, float] = (1.4, 1.8)
    pitch_deg: tuple[float, float] = (0.0, 10.0)
    focal_px: float = 400.0
    image_size: tuple[int, int] = (480, 360)


@dataclass(frozen=True, eq=False)
class SceneFixture:
    camera: CameraModel
    spec: RoadSpec
    lanes_gt: list[Lane3D]
    depth_map: np.ndarray
    semantic_map: np.ndarray
    occluders: list[Box] = field(default_factory=list)


def road_lanes(spec: RoadSpec, step: float = 1.0) -> list[Lane3D]:
    """Lane lines at every offset and center lines between neighbours."""
    y0, y1 = spec.y_span
    n = int(math.floor((y1 - y0) / step + 1e-9)) + 1
    ys = y0 + step * np.arange(n)
    cx = spec.center_x(ys)
    zs = spec.height(ys)
    lanes = []
    for off in spec.lane_offsets:
        lanes.append(Lane3D(LANELINE, np.column_stack([cx + off, ys, zs])))
    for a, b in zip(spec.lane_offsets, spec.lane_offsets[1:]):
        lanes.append(Lane3D(CENTERLINE, np.column_stack([cx + 0.5 * (a + b), ys, zs])))
    return lanes


def sample_camera(rng: np.random.Generator, ranges: CameraRanges = CameraRanges()) -> CameraModel:
    h = rng.uniform(*ranges.height_m)
    pitch = math.radians(rng.uniform(*ranges.pitch_deg))
    return CameraModel.from_focal(h, pitch, ranges.focal_px, ranges.image_size)


def _validate_heights(spec: RoadSpec, boxes, camera: CameraModel):
    zs = [z for _, z in spec.height_profile]
    if max(abs(z) for z in zs) >= camera.height_m:
        raise InvalidSpec("road height must stay below the camera height everywhere")


def pixel_rays(camera: CameraModel) -> np.ndarray:
    """Ego-frame ray directions through every pixel center, shape ``(H, W, 3)``."""
    w, h = camera.image_size
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    a = (u - camera.cx) / camera.fx
    b = (v - camera.cy) / camera.fy
    R, _ = rotation_translation(camera)
    cam_dirs = np.stack([a, b, np.ones_like(a)], axis=-1)
    return cam_dirs @ R  # R^T applied to row vectors


def _ground_hits(spec: RoadSpec, cam_h: float, d: np.ndarray) -> np.ndarray:
    """Ray parameter of the first ground hit per ray (inf when none)."""
    dy, dz = d[..., 1], d[..., 2]
    knots = spec.height_profile
    pieces = []  # (y_lo, y_hi, z at y_lo, slope)
    pieces.append((-math.inf, knots[0][0], knots[0][1], 0.0))
    for (ya, za), (yb, zb) in zip(knots, knots[1:]):
        pieces.append((ya, yb, za, (zb - za) / (yb - ya)))
    pieces.append((knots[-1][0], math.inf, knots[-1][1], 0.0))

    best = np.full(dy.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for y_lo, y_hi, z_lo, slope in pieces:
            y_ref = y_lo if math.isfinite(y_lo) else 0.0
            z_ref = z_lo
            # h + t dz = z_ref + slope (t dy - y_ref)
            denom = dz - slope * dy
            t = (z_ref - slope * y_ref - cam_h) / denom
            y_hit = t * dy
            ok = (denom != 0) & (t > 0) & (y_hit >= y_lo - 1e-9) & (y_hit <= y_hi + 1e-9)
            best = np.where(ok & (t < best), t, best)
    return best


def _box_hits(box: Box, origin: np.ndarray, d: np.ndarray) -> np.ndarray:
    lo, hi = box.lower, box.upper
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    # Axis-parallel rays outside the slab never hit; inside they span all t.
    parallel = d == 0
    inside = (origin >= lo) & (origin <= hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    t_near = t_lo.max(axis=-1)
    t_far = t_hi.min(axis=-1)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def render_maps(camera: CameraModel, spec: RoadSpec, boxes=()) -> tuple[np.ndarray, np.ndarray]:
    """Depth (ego forward distance, ``inf`` for sky) and semantic rasters."""
    d = pixel_rays(camera)
    origin = np.array([0.0, 0.0, camera.height_m])
    t_ground = _ground_hits(spec, camera.height_m, d)
    t_best = t_ground
    cls = np.full(t_ground.shape, SemanticClass.SKY, dtype=np.uint8)

    hit = np.isfinite(t_ground)
    x_hit = t_ground * d[..., 0]
    y_hit = t_ground * d[..., 1]
    lo, hi = spec.road_bounds()
    with np.errstate(invalid="ignore"):
        lateral = x_hit - spec.center_x(np.where(hit, y_hit, 0.0))
        on_road = hit & (lateral >= lo) & (lateral <= hi)
    cls[hit] = SemanticClass.TERRAIN
    cls[on_road] = SemanticClass.ROAD

    for box in boxes:
        t_box = _box_hits(box, origin, d)
        closer = t_box < t_best
        t_best = np.where(closer, t_box, t_best)
        cls[closer] = SemanticClass.VEHICLE

    with np.errstate(invalid="ignore"):
        depth = np.where(np.isfinite(t_best), t_best * d[..., 1], np.inf)
    return depth, cls


def _random_vehicles(rng: np.random.Generator, spec: RoadSpec, n: int) -> list[Box]:
    offs = spec.lane_offsets
    slots = [0.5 * (a + b) for a, b in zip(offs, offs[1:])] or [offs[0]]
    boxes = []
    y0, y1 = spec.y_span
    for _ in range(n):
        lane = slots[int(rng.integers(len(slots)))]
        y = rng.uniform(max(y0, 8.0), max(y0 + 1.0, min(y1, 70.0)))
        x = float(spec.center_x(y)) + lane
        boxes.append(Box.on_ground(spec, x, y, 1.8, rng.uniform(4.0, 5.0), rng.uniform(1.4, 1.6)))
    return boxes


def generate_scene(
    spec: RoadSpec,
    seed: int,
    ranges: CameraRanges = CameraRanges(),
    n_vehicles: int = 0,
    occluders=(),
    camera: CameraModel | None = None,
    step: float = 1.0,
) -> SceneFixture:
    """Build a deterministic scene from ``(spec, seed)``.

    The camera is drawn from ``ranges`` unless given explicitly. ``n_vehicles``
    random boxes are placed on the lanes in addition to ``occluders``.
    """
    rng = np.random.default_rng(seed)
    cam = camera if camera is not None else sample_camera(rng, ranges)
    boxes = list(occluders) + _random_vehicles(rng, spec, n_vehicles)
    _validate_heights(spec, boxes, cam)
    depth, sem = render_maps(cam, spec, boxes)
    return SceneFixture(cam, spec, road_lanes(spec, step), depth, sem, boxes)


def sample_depth(depth: np.ndarray, u, v) -> np.ndarray:
    """Depth at sub-pixel locations, bilinear in inverse depth.

    Interpolating inverse depth keeps ground-plane samples accurate far from
    the camera, where one pixel spans many meters of depth.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h, w = depth.shape
    inv = np.where(np.isfinite(depth), 1.0 / depth, 0.0)
    u0 = np.clip(np.floor(u).astype(np.intp), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.intp), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = np.clip(u - u0, 0.0, 1.0)
    fv = np.clip(v - v0, 0.0, 1.0)
    val = (
        inv[v0, u0] * (1 - fu) * (1 - fv)
        + inv[v0, u1] * fu * (1 - fv)
        + inv[v1, u0] * (1 - fu) * fv
        + inv[v1, u1] * fu * fv
    )
    with np.errstate(divide="ignore"):
        return np.where(val > 0, 1.0 / val, np.inf)


def _occluder_class(depth: np.ndarray, sem: np.ndarray, u, v) -> np.ndarray:
    # Class of the nearest surface among the four pixels around (u, v).
    h, w = depth.shape
    u0 = np.clip(np.floor(u).astype(np.intp), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(v).astype(np.intp), 0, max(h - 2, 0))
    cand_u = np.stack([u0, u0 + 1, u0, u0 + 1], axis=-1).clip(0, w - 1)
    cand_v = np.stack([v0, v0, v0 + 1, v0 + 1], axis=-1).clip(0, h - 1)
    k = np.argmin(depth[cand_v, cand_u], axis=-1)
    pick_u = np.take_along_axis(cand_u, k[..., None], axis=-1)[..., 0]
    pick_v = np.take_along_axis(cand_v, k[..., None], axis=-1)[..., 0]
    return sem[pick_v, pick_u]


def label_points(fixture: SceneFixture, points, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Occlusion label for each ego point in ``points`` ``(n, 3)``."""
    cam = fixture.camera
    pts = np.asarray(points, dtype=np.float64)
    labels = np.full(len(pts), OcclusionLabel.VISIBLE, dtype=np.int8)
    w, h = cam.image_size

    pc = ego_to_camera(cam, pts)
    front = pc[:, 2] > 1e-9
    uvw = pc @ cam.intrinsics.T
    safe = np.where(front, uvw[:, 2], 1.0)
    u = uvw[:, 0] / safe
    v = uvw[:, 1] / safe
    inside = front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    labels[~inside] = OcclusionLabel.OUT_OF_IMAGE

    center = np.array([0.0, 0.0, cam.height_m])
    far = inside & (np.linalg.norm(pts - center, axis=1) > MAX_LABEL_DISTANCE)
    labels[far] = OcclusionLabel.BEYOND_RANGE

    test = inside & ~far
    if np.any(test):
        uu, vv = u[test], v[test]
        seen = sample_depth(fixture.depth_map, uu, vv)
        occluded = pts[test, 1] - seen > eps
        cls = _occluder_class(fixture.depth_map, fixture.semantic_map, uu, vv)
        sub = np.where(
            occluded,
            np.where(cls == SemanticClass.VEHICLE, OcclusionLabel.FOREGROUND_OCCLUDED, OcclusionLabel.BACKGROUND_OCCLUDED),
            OcclusionLabel.VISIBLE,
        )
        labels[test] = sub
    return labels


def label_occlusion(fixture: SceneFixture, eps: float = DEFAULT_EPS) -> list[np.ndarray]:
    """Per-lane arrays of :class:`OcclusionLabel` codes for ``fixture.lanes_gt``."""
    return [label_points(fixture, lane.points, eps) for lane in fixture.lanes_gt]


_KEPT = (OcclusionLabel.VISIBLE, OcclusionLabel.FOREGROUND_OCCLUDED)


def finalize_ground_truth(lanes: list[Lane3D], labels: list[np.ndarray]) -> list[Lane3D]:
    """Keep visible and foreground-occluded points as ground truth.

    Leading and trailing runs of discarded points are cut off. Discarded
    points between kept ones stay in the polyline with visibility 0 so the
    gap is preserved. Lanes left with fewer than two kept points are removed.
    """
    if len(lanes) != len(labels):
        raise ValueError("labels must align with lanes")
    out = []
    for lane, lab in zip(lanes, labels):
        lab = np.asarray(lab)
        if lab.shape != (len(lane.points),):
            raise ValueError("label count does not match lane points")
        keep = np.isin(lab, _KEPT)
        if keep.sum() < 2:
            continue
        idx = np.flatnonzero(keep)
        sl = slice(idx[0], idx[-1] + 1)
        out.append(Lane3D(lane.category, lane.points[sl], keep[sl], lane.prob))
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Perturbations turning ground truth into pseudo-predictions.

    ``drop_rate`` and ``spurious_rate`` are fractions of the ground-truth lane
    count, rounded to whole lanes. Spurious lanes are copies of random
    ground-truth lanes shifted sideways by at least ``spurious_min_offset``.
    """

    sigma_x: float = 0.0
    sigma_z: float = 0.0
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    true_prob: tuple[float, float] = (1.0, 1.0)
    spurious_prob: tuple[float, float] = (0.05, 0.6)
    spurious_min_offset: float = 3.0


def perturb_predictions(gt: list[Lane3D], seed: int, noise: NoiseModel = NoiseModel()) -> list[Lane3D]:
    rng = np.random.default_rng(seed)
    n = len(gt)
    n_drop = min(n, int(round(noise.drop_rate * n)))
    dropped = set(int(i) for i in rng.choice(n, size=n_drop, replace=False)) if n_drop else set()

    out = []
    for i, lane in enumerate(gt):
        if i in dropped:
            continue
        m = len(lane.points)
        dx = rng.normal(0.0, noise.sigma_x, m) if noise.sigma_x > 0 else np.zeros(m)
        dz = rng.normal(0.0, noise.sigma_z, m) if noise.sigma_z > 0 else np.zeros(m)
        pts = lane.points + np.column_stack([dx, np.zeros(m), dz])
        lo, hi = noise.true_prob
        prob = lo if lo == hi else float(rng.uniform(lo, hi))
        out.append(Lane3D(lane.category, pts, lane.visibility, prob))

    n_spur = int(round(noise.spurious_rate * n)) if n else 0
    for _ in range(n_spur):
        base = gt[int(rng.integers(n))]
        shift = (noise.spurious_min_offset + rng.uniform(0.0, 2.0)) * (1 if rng.random() < 0.5 else -1)
        pts = base.points + np.array([shift, 0.0, 0.0])
        lo, hi = noise.spurious_prob
        prob = lo if lo == hi else float(rng.uniform(lo, hi))
        out.append(Lane3D(base.category, pts, base.visibility, prob))
    return out


def random_road_spec(rng: np.random.Generator, n_lanelines: int = 4) -> RoadSpec:
    """A road with random curvature, lane count and rolling height profile."""
    width = rng.uniform(3.2, 3.8)
    first = -width * (n_lanelines - 1) / 2 + rng.uniform(-1.0, 1.0)
    offsets = tuple(first + width * k for k in range(n_lanelines))
    coeffs = (0.0, rng.uniform(-0.02, 0.02), rng.uniform(-6e-4, 6e-4))
    knot_y = np.linspace(0.0, 120.0, 5)
    knot_z = np.concatenate([[0.0], np.cumsum(rng.uniform(-0.6, 0.6, 4))])
    knot_z = np.clip(knot_z, -1.0, 1.0)
    return RoadSpec(coeffs, tuple(zip(knot_y, knot_z)), offsets, (1.0, 100.0))
