"""Anchor representation of 3D lanes in the virtual top-view.

Lanes are encoded against ``N`` vertical anchor lines at fixed lateral
positions. Every anchor carries, per category and per fixed y-position, a
lateral offset (top-view x relative to the anchor), a height and a
visibility, plus one existence probability. Decoding lifts the top-view
points back to the ego frame with :func:`lane3d.geometry.topview_to_ego`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLane, LaneDoesNotCoverYref, ShapeMismatch
from .geometry import TopViewGrid, ego_to_topview, topview_to_ego
from .lanes import CATEGORIES, Lane3D, coverage_mask

logger = logging.getLogger(__name__)

DEFAULT_ANCHOR_X = tuple(float(x) for x in np.linspace(-10.0, 10.0, 26))
DEFAULT_Y_POSITIONS = (3.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 65.0, 80.0, 100.0)
DEFAULT_Y_REF = 5.0
#: Slack when testing whether a y-position falls inside a lane's coverage.
COVERAGE_TOL = 1e-6


@dataclass(frozen=True)
class AnchorConfig:
    anchor_x_positions: tuple[float, ...] = DEFAULT_ANCHOR_X
    y_positions: tuple[float, ...] = DEFAULT_Y_POSITIONS
    y_ref: float = DEFAULT_Y_REF
    top_view_grid: TopViewGrid = field(default_factory=TopViewGrid)

    def __post_init__(self):
        xs = tuple(float(x) for x in self.anchor_x_positions)
        ys = tuple(float(y) for y in self.y_positions)
        object.__setattr__(self, "anchor_x_positions", xs)
        object.__setattr__(self, "y_positions", ys)
        object.__setattr__(self, "y_ref", float(self.y_ref))
        if len(xs) < 1:
            raise ValueError("at least one anchor is required")
        if len(ys) < 2:
            raise ValueError("at least two y-positions are required")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise ValueError("anchor x-positions and y-positions must be strictly increasing")
        if not ys[0] <= self.y_ref <= ys[-1]:
            raise ValueError(f"y_ref {self.y_ref} outside the y-position span")

    @property
    def n_anchors(self) -> int:
        return len(self.anchor_x_positions)

    @property
    def n_y(self) -> int:
        return len(self.y_positions)


@dataclass(frozen=True, eq=False)
class AnchorTensor:
    """Per-category anchor attributes.

    Arrays are indexed ``[category, anchor, y-position]`` (``prob`` drops the
    last axis); the category axis follows :data:`lane3d.lanes.CATEGORIES`.
    """

    x_offsets: np.ndarray
    heights: np.ndarray
    visibility: np.ndarray
    prob: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("x_offsets", "heights", "visibility", "prob"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        shape = arrays["x_offsets"].shape
        if len(shape) != 3 or shape[0] != len(CATEGORIES):
            raise ShapeMismatch(f"x_offsets must have shape ({len(CATEGORIES)}, N, K), got {shape}")
        for name in ("heights", "visibility"):
            if arrays[name].shape != shape:
                raise ShapeMismatch(f"{name} shape {arrays[name].shape} differs from {shape}")
        if arrays["prob"].shape != shape[:2]:
            raise ShapeMismatch(f"prob shape {arrays['prob'].shape} differs from {shape[:2]}")
        for name in ("visibility", "prob"):
            a = arrays[name]
            if a.size and (a.min() < 0.0 or a.max() > 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def zeros(cls, n_anchors: int, n_y: int) -> "AnchorTensor":
        shape = (len(CATEGORIES), n_anchors, n_y)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape[:2]))

    @property
    def shape(self) -> tuple[int, int]:
        """``(N, K)``."""
        return self.x_offsets.shape[1], self.x_offsets.shape[2]

    def replace(self, **changes) -> "AnchorTensor":
        fields = {
            "x_offsets": self.x_offsets,
            "heights": self.heights,
            "visibility": self.visibility,
            "prob": self.prob,
        }
        fields.update(changes)
        return AnchorTensor(**fields)


@dataclass(frozen=True)
class AnchorCollision:
    """A lane dropped because a closer lane of its category took its anchor."""

    category: str
    anchor: int
    kept_lane: int
    dropped_lane: int


@dataclass
class EncodeReport:
    collisions: list[AnchorCollision] = field(default_factory=list)
    #: Indices of lanes skipped because their top-view span misses ``y_ref``.
    uncovered: list[int] = field(default_factory=list)


def _topview_polyline(lane: Lane3D, cam_height: float) -> np.ndarray:
    tv = ego_to_topview(lane.points, cam_height)
    if np.any(np.diff(tv[:, 1]) <= 0):
        raise InvalidLane("lane is not monotonic in top-view y")
    return tv


def _x_at_yref(tv: np.ndarray, y_ref: float) -> float:
    ys = tv[:, 1]
    if not ys[0] - COVERAGE_TOL <= y_ref <= ys[-1] + COVERAGE_TOL:
        raise LaneDoesNotCoverYref(
            f"lane top-view span [{ys[0]:.3f}, {ys[-1]:.3f}] does not cover y_ref={y_ref}"
        )
    return float(np.interp(y_ref, ys, tv[:, 0]))


def associate_anchor(lane: Lane3D, cfg: AnchorConfig, cam_height: float) -> int:
    """Index of the anchor closest to the lane's top-view x at ``y_ref``.

    Ties go to the smaller index.
    """
    x_ref = _x_at_yref(_topview_polyline(lane, cam_height), cfg.y_ref)
    return int(np.argmin(np.abs(x_ref - np.asarray(cfg.anchor_x_positions))))


def _fill_outside(values: np.ndarray, in_span: np.ndarray, covered: np.ndarray) -> np.ndarray:
    # Positions beyond the polyline take the value at the nearest covered y-position.
    source = covered if covered.any() else in_span
    if not source.any():
        return values
    idx = np.flatnonzero(source)
    out = values.copy()
    for j in np.flatnonzero(~in_span):
        out[j] = values[idx[np.argmin(np.abs(idx - j))]]
    return out


def encode_with_report(
    lanes: list[Lane3D], cfg: AnchorConfig, cam_height: float
) -> tuple[AnchorTensor, EncodeReport]:
    """Encode ground-truth lanes; also return collisions and skipped lanes."""
    N, K = cfg.n_anchors, cfg.n_y
    anchors_x = np.asarray(cfg.anchor_x_positions)
    y_pos = np.asarray(cfg.y_positions)
    grid = cfg.top_view_grid
    report = EncodeReport()

    # (category index, anchor) -> (distance at y_ref, lane index, offsets, heights, vis)
    claims: dict[tuple[int, int], tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = {}
    for li, lane in enumerate(lanes):
        tv = _topview_polyline(lane, cam_height)
        try:
            x_ref = _x_at_yref(tv, cfg.y_ref)
        except LaneDoesNotCoverYref:
            report.uncovered.append(li)
            continue
        dist = np.abs(x_ref - anchors_x)
        a = int(np.argmin(dist))

        ys_tv = tv[:, 1]
        in_span = (y_pos >= ys_tv[0] - COVERAGE_TOL) & (y_pos <= ys_tv[-1] + COVERAGE_TOL)
        x_bar = np.interp(y_pos, ys_tv, tv[:, 0])
        z = np.interp(y_pos, ys_tv, lane.zs)
        covered = coverage_mask(y_pos, ys_tv, lane.visibility, tol=COVERAGE_TOL)
        tol = COVERAGE_TOL
        covered &= (y_pos >= grid.y_range[0] - tol) & (y_pos <= grid.y_range[1] + tol)
        covered &= (x_bar >= grid.x_range[0] - tol) & (x_bar <= grid.x_range[1] + tol)
        offsets = _fill_outside(x_bar - anchors_x[a], in_span, covered)
        heights = _fill_outside(z, in_span, covered)

        key = (CATEGORIES.index(lane.category), a)
        entry = (float(dist[a]), li, offsets, heights, covered.astype(np.float64))
        if key in claims:
            prev = claims[key]
            winner, loser = (prev, entry) if prev[0] <= entry[0] else (entry, prev)
            claims[key] = winner
            report.collisions.append(AnchorCollision(lane.category, a, winner[1], loser[1]))
        else:
            claims[key] = entry

    x_off = np.zeros((len(CATEGORIES), N, K))
    heights = np.zeros_like(x_off)
    vis = np.zeros_like(x_off)
    prob = np.zeros((len(CATEGORIES), N))
    for (t, a), (_, _, off, hgt, v) in claims.items():
        x_off[t, a] = off
        heights[t, a] = hgt
        vis[t, a] = v
        prob[t, a] = 1.0
    return AnchorTensor(x_off, heights, vis, prob), report


def encode(lanes: list[Lane3D], cfg: AnchorConfig, cam_height: float) -> AnchorTensor:
    """Encode ground-truth lanes into an anchor tensor.

    Collisions and lanes that miss ``y_ref`` are logged; use
    :func:`encode_with_report` to inspect them.
    """
    tensor, report = encode_with_report(lanes, cfg, cam_height)
    for c in report.collisions:
        logger.warning(
            "anchor %d (%s): lane %d dropped in favour of lane %d",
            c.anchor, c.category, c.dropped_lane, c.kept_lane,
        )
    if report.uncovered:
        logger.warning("lanes %s do not cover y_ref=%g and were skipped", report.uncovered, cfg.y_ref)
    return tensor


def decode(
    t: AnchorTensor,
    cfg: AnchorConfig,
    cam_height: float,
    prob_threshold: float = 0.5,
    vis_threshold: float = 0.5,
) -> list[Lane3D]:
    """Turn an anchor tensor into ego-frame lanes.

    Anchors below ``prob_threshold`` are skipped, points below
    ``vis_threshold`` are dropped, and anchors left with fewer than two points
    produce nothing. Points whose lifted ego y would not increase are dropped
    so that every output is a valid polyline.
    """
    if t.shape != (cfg.n_anchors, cfg.n_y):
        raise ShapeMismatch(f"tensor shape {t.shape} does not match config {(cfg.n_anchors, cfg.n_y)}")
    anchors_x = np.asarray(cfg.anchor_x_positions)
    y_pos = np.asarray(cfg.y_positions)
    lanes = []
    for ti, category in enumerate(CATEGORIES):
        for a in range(cfg.n_anchors):
            p = float(t.prob[ti, a])
            if p < prob_threshold:
                continue
            keep = t.visibility[ti, a] >= vis_threshold
            if keep.sum() < 2:
                continue
            z = t.heights[ti, a, keep]
            keep_z = z < cam_height - 1e-6
            tv = np.column_stack([anchors_x[a] + t.x_offsets[ti, a, keep], y_pos[keep]])[keep_z]
            if len(tv) < 2:
                continue
            pts = topview_to_ego(tv, z[keep_z], cam_height)
            mono = np.concatenate([[True], pts[1:, 1] > np.maximum.accumulate(pts[:, 1])[:-1]])
            pts = pts[mono]
            if len(pts) < 2:
                continue
            lanes.append(Lane3D(category, pts, np.ones(len(pts), dtype=bool), p))
    return lanes
