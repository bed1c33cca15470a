"""3D lane polylines and visibility-coverage helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidLane

LANELINE = "laneline"
CENTERLINE = "centerline"
#: Category order used for the leading axis of anchor tensors.
CATEGORIES = (LANELINE, CENTERLINE)


@dataclass(frozen=True, eq=False)
class Lane3D:
    """A lane as an ego-frame polyline with per-point visibility.

    ``points`` is an ``(n, 3)`` array of ``(x, y, z)`` with strictly
    increasing ``y``. ``visibility`` holds one boolean per point. ``prob`` is
    the existence probability (1.0 for ground truth).
    """

    category: str
    points: np.ndarray
    visibility: np.ndarray | None = None
    prob: float = 1.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InvalidLane(f"unknown lane category {self.category!r}")
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidLane(f"points must have shape (n, 3), got {pts.shape}")
        if len(pts) < 2:
            raise InvalidLane("a lane needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise InvalidLane("lane points must be finite")
        if np.any(np.diff(pts[:, 1]) <= 0):
            raise InvalidLane("lane y coordinates must be strictly increasing")
        if self.visibility is None:
            vis = np.ones(len(pts), dtype=bool)
        else:
            vis = np.array(self.visibility).astype(bool)
        if vis.shape != (len(pts),):
            raise InvalidLane(f"visibility length {vis.shape} does not match {len(pts)} points")
        prob = float(self.prob)
        if not 0.0 <= prob <= 1.0:
            raise InvalidLane(f"prob must lie in [0, 1], got {prob}")
        pts.setflags(write=False)
        vis.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "visibility", vis)
        object.__setattr__(self, "prob", prob)

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def zs(self) -> np.ndarray:
        return self.points[:, 2]

    def with_prob(self, prob: float) -> "Lane3D":
        return Lane3D(self.category, self.points, self.visibility, prob)

    def same_as(self, other: "Lane3D", atol: float = 0.0) -> bool:
        return (
            self.category == other.category
            and self.points.shape == other.points.shape
            and np.allclose(self.points, other.points, rtol=0.0, atol=atol)
            and np.array_equal(self.visibility, other.visibility)
            and self.prob == other.prob
        )


def visible_segments(ys, visibility) -> list[tuple[float, float]]:
    """Closed ``[y_a, y_b]`` intervals spanned by runs of visible points.

    A run of a single visible point yields a degenerate interval.
    """
    ys = np.asarray(ys, dtype=np.float64)
    vis = np.asarray(visibility, dtype=bool)
    segments = []
    i, n = 0, len(ys)
    while i < n:
        if not vis[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and vis[j + 1]:
            j += 1
        segments.append((float(ys[i]), float(ys[j])))
        i = j + 1
    return segments


def coverage_mask(sample_ys, ys, visibility, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of ``sample_ys`` lying inside a visible segment (``tol`` slack)."""
    sample_ys = np.asarray(sample_ys, dtype=np.float64)
    covered = np.zeros(sample_ys.shape, dtype=bool)
    for a, b in visible_segments(ys, visibility):
        covered |= (sample_ys >= a - tol) & (sample_ys <= b + tol)
    return covered
