"""Camera model and coordinate transforms.

Frames used throughout the package:

* ego frame: origin at the ground point below the camera center, x lateral
  (right), y forward, z up. The camera center sits at ``(0, 0, h)``.
* virtual top-view: the flat ``z = 0`` plane onto which the image is warped
  by the ground homography. A 3D point and its top-view image are co-linear
  with the camera center, which gives the closed-form relation implemented by
  :func:`topview_to_ego` / :func:`ego_to_topview`.
* image: pixel coordinates ``(u, v)``, u to the right, v downwards, pixel
  centers at integer coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateHomography, HeightAtCameraCenter, InvalidCamera, PointBehindCamera

#: Minimum clearance between a point and the camera height.
HEIGHT_EPS = 1e-6
#: Smallest homogeneous scale accepted when dehomogenizing.
W_EPS = 1e-12
#: Smallest positive depth along the optical axis for a projectable point.
DEPTH_EPS = 1e-9
#: Condition number above which the ground homography is rejected.
HOMOGRAPHY_COND_MAX = 1e12

DEFAULT_TOPVIEW_X_RANGE = (-10.0, 10.0)
DEFAULT_TOPVIEW_Y_RANGE = (1.0, 101.0)
DEFAULT_TOPVIEW_RESOLUTION = (208, 108)


class EgoPoint(NamedTuple):
    x: float
    y: float
    z: float


class TopViewPoint(NamedTuple):
    x_bar: float
    y_bar: float


class ImagePoint(NamedTuple):
    u: float
    v: float


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with a pitch-only orientation.

    Args:
        height_m: camera height above the ground origin.
        pitch_rad: downward pitch in ``[0, pi/2]``. The homography helpers
            additionally require ``pitch < pi/2``.
        intrinsics: 3x3 matrix ``[[fx, 0, cx], [0, fy, cy], [0, 0, 1]]``.
        image_size: ``(width, height)`` in pixels.
    """

    height_m: float
    pitch_rad: float
    intrinsics: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        K = _readonly(self.intrinsics)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "height_m", float(self.height_m))
        object.__setattr__(self, "pitch_rad", float(self.pitch_rad))
        w, h = self.image_size
        object.__setattr__(self, "image_size", (int(w), int(h)))

        if not (math.isfinite(self.height_m) and self.height_m > 0):
            raise InvalidCamera(f"camera height must be positive, got {self.height_m}")
        if not (0.0 <= self.pitch_rad <= math.pi / 2):
            raise InvalidCamera(f"pitch must lie in [0, pi/2], got {self.pitch_rad}")
        if K.shape != (3, 3) or not np.all(np.isfinite(K)):
            raise InvalidCamera("intrinsics must be a finite 3x3 matrix")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise InvalidCamera("focal lengths must be positive")
        if K[0, 1] != 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise InvalidCamera("intrinsics must be upper triangular with zero skew and K[2,2] = 1")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise InvalidCamera(f"image size must be positive, got {self.image_size}")

    @classmethod
    def from_focal(cls, height_m, pitch_rad, focal_px, image_size):
        """Camera with square pixels and the principal point at the image center."""
        w, h = image_size
        K = [[focal_px, 0.0, (w - 1) / 2.0], [0.0, focal_px, (h - 1) / 2.0], [0.0, 0.0, 1.0]]
        return cls(height_m, pitch_rad, K, (w, h))

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])

    @property
    def pitch_deg(self) -> float:
        return math.degrees(self.pitch_rad)


@dataclass(frozen=True)
class TopViewGrid:
    """Rectangular region of the flat ground plane sampled as a raster.

    Row 0 of the raster is the far edge (``y_max``); column 0 is ``x_min``.
    """

    x_range: tuple[float, float] = DEFAULT_TOPVIEW_X_RANGE
    y_range: tuple[float, float] = DEFAULT_TOPVIEW_Y_RANGE
    resolution: tuple[int, int] = DEFAULT_TOPVIEW_RESOLUTION  # (cols, rows)

    def __post_init__(self):
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        cols, rows = self.resolution
        if not x0 < x1:
            raise ValueError(f"x_range must be increasing, got {self.x_range}")
        if not y0 < y1:
            raise ValueError(f"y_range must be increasing, got {self.y_range}")
        if cols <= 0 or rows <= 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")

    @property
    def cell_size(self) -> tuple[float, float]:
        cols, rows = self.resolution
        return (
            (self.x_range[1] - self.x_range[0]) / cols,
            (self.y_range[1] - self.y_range[0]) / rows,
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(xs, ys)``: x of each column and y of each row."""
        cols, rows = self.resolution
        dx, dy = self.cell_size
        xs = self.x_range[0] + (np.arange(cols) + 0.5) * dx
        ys = self.y_range[1] - (np.arange(rows) + 0.5) * dy
        return xs, ys

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """``(row, col)`` of the cell containing ground point ``(x, y)``."""
        dx, dy = self.cell_size
        col = int(math.floor((x - self.x_range[0]) / dx))
        row = int(math.floor((self.y_range[1] - y) / dy))
        cols, rows = self.resolution
        if 0 <= col < cols and 0 <= row < rows:
            return row, col
        return None


def pitch_extrinsics(height_m: float, pitch_rad: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation taking ego coordinates to camera coordinates."""
    s, c = math.sin(pitch_rad), math.cos(pitch_rad)
    R = np.array([[1.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])
    T = np.array([0.0, c * height_m, s * height_m])
    return R, T


def rotation_translation(cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    return pitch_extrinsics(cam.height_m, cam.pitch_rad)


def projection_matrix(cam: CameraModel) -> np.ndarray:
    """The 3x4 matrix ``K [R | T]``."""
    R, T = rotation_translation(cam)
    return cam.intrinsics @ np.column_stack([R, T])


def ego_to_camera(cam: CameraModel, points) -> np.ndarray:
    """Ego-frame points ``(..., 3)`` expressed in the camera frame."""
    R, T = rotation_translation(cam)
    p = np.asarray(points, dtype=np.float64)
    return p @ R.T + T


def _dehomogenize(q: np.ndarray) -> np.ndarray:
    w = q[..., 2:3]
    if np.any(np.abs(w) < W_EPS):
        raise PointBehindCamera("homogeneous scale is (numerically) zero")
    return q[..., :2] / w


def project_to_image(cam: CameraModel, points) -> np.ndarray:
    """Project ego points ``(..., 3)`` to pixel coordinates ``(..., 2)``.

    Raises:
        PointBehindCamera: if any point has depth along the optical axis at or
            below ``DEPTH_EPS``.
    """
    pc = ego_to_camera(cam, points)
    if np.any(pc[..., 2] <= DEPTH_EPS):
        raise PointBehindCamera("point has non-positive depth along the optical axis")
    return _dehomogenize(pc @ cam.intrinsics.T)


def ground_to_image_matrix(cam: CameraModel) -> np.ndarray:
    """The 3x3 matrix ``K [R_12 | T]`` mapping ground ``(x, y, 1)`` to pixels."""
    R, T = rotation_translation(cam)
    return cam.intrinsics @ np.column_stack([R[:, 0], R[:, 1], T])


def homography_img_to_ground(cam: CameraModel) -> np.ndarray:
    """Homography taking homogeneous pixels to homogeneous ``z = 0`` ground points.

    The pitch-only ground-to-image matrix has determinant ``-h det(K)``, so it
    is never exactly singular for a valid camera; the condition number check
    guards against pathological intrinsics. A camera pitched straight down
    (``pitch = pi/2``) is rejected as outside the supported range.
    """
    if cam.pitch_rad >= math.pi / 2 - 1e-12:
        raise DegenerateHomography("pitch must be strictly below pi/2")
    M = ground_to_image_matrix(cam)
    if np.linalg.cond(M) > HOMOGRAPHY_COND_MAX:
        raise DegenerateHomography("ground-to-image matrix is ill-conditioned")
    H = np.linalg.inv(M)
    return H / H[2, 2] if abs(H[2, 2]) > W_EPS else H


def image_to_ground(cam: CameraModel, pixels) -> np.ndarray:
    """Map pixels ``(..., 2)`` to flat-ground points ``(..., 2)``."""
    H = homography_img_to_ground(cam)
    uv = np.asarray(pixels, dtype=np.float64)
    q = np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1) @ H.T
    return _dehomogenize(q)


def _check_height(z, cam_height):
    if not cam_height > 0:
        raise ValueError(f"camera height must be positive, got {cam_height}")
    if np.any(np.asarray(z) >= cam_height - HEIGHT_EPS):
        raise HeightAtCameraCenter(
            f"point height must stay below the camera height {cam_height} by at least {HEIGHT_EPS}"
        )


def topview_to_ego(p, z, cam_height: float) -> np.ndarray:
    """Lift top-view points ``(..., 2)`` with heights ``z`` to ego points ``(..., 3)``.

    ``x = x_bar (1 - z/h)``, ``y = y_bar (1 - z/h)``; no camera angle enters.
    """
    p = np.asarray(p, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    _check_height(z, cam_height)
    scale = 1.0 - z / cam_height
    x = p[..., 0] * scale
    y = p[..., 1] * scale
    return np.stack(np.broadcast_arrays(x, y, z + np.zeros_like(x)), axis=-1)


def ego_to_topview(p, cam_height: float) -> np.ndarray:
    """Project ego points ``(..., 3)`` to their top-view images ``(..., 2)``."""
    p = np.asarray(p, dtype=np.float64)
    _check_height(p[..., 2], cam_height)
    scale = cam_height / (cam_height - p[..., 2])
    return np.stack([p[..., 0] * scale, p[..., 1] * scale], axis=-1)


def warp_to_topview(cam: CameraModel, mask, grid: TopViewGrid | None = None) -> np.ndarray:
    """Resample an image-space raster onto a top-view grid.

    Each grid cell takes the value of the pixel nearest to the projection of
    its ground-plane center; cells that fall outside the image (or behind the
    camera) are 0. Output shape is ``(rows, cols)`` with the mask's dtype.
    """
    grid = grid or TopViewGrid()
    mask = np.asarray(mask)
    width, height = cam.image_size
    if mask.shape != (height, width):
        raise ValueError(f"mask shape {mask.shape} does not match image size {(height, width)}")
    homography_img_to_ground(cam)  # propagate degeneracy

    xs, ys = grid.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    q = np.stack([gx, gy, np.ones_like(gx)], axis=-1) @ ground_to_image_matrix(cam).T
    w = q[..., 2]
    ok = w > DEPTH_EPS
    safe_w = np.where(ok, w, 1.0)
    u = np.floor(q[..., 0] / safe_w + 0.5)
    v = np.floor(q[..., 1] / safe_w + 0.5)
    ok &= (u >= 0) & (u < width) & (v >= 0) & (v < height)

    out = np.zeros(gx.shape, dtype=mask.dtype)
    out[ok] = mask[v[ok].astype(np.intp), u[ok].astype(np.intp)]
    return out
