"""Camera models and coordinate transforms.

Conventions used throughout the package:

* World frame is Y-up (gravity along -Y). Grid axis u follows world x, v
  follows world z; the vertical coordinate is dropped by the top-down
  projection.
* A pose is the world->camera rotation ``R`` plus a translation ``t`` such
  that a pixel (i, j) at planar depth d unprojects to

      p_world = d * R^-1 * K^-1 * [i, j, 1]^T - t

  so the camera center sits at ``-t`` in world coordinates and
  ``p_cam = R @ (p_world + t)``.
* Depth is the camera-frame z coordinate (planar depth), not ray length.
  Depth 0 is the "no return" sentinel and is skipped everywhere.
* Camera frame: x right, y down, z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, CellOutOfGrid, NonPositiveDepth, PixelOutOfBounds

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dims must be >= 1")

    @staticmethod
    def from_hfov(width: int, height: int, hfov_deg: float) -> "CameraIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view.

        fx = (width / 2) / tan(hfov / 2); principal point at image center.
        """
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                                width=width, height=height)


# 640x480 with a 90 degree horizontal FOV => fx = fy = 320.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=320.0, fy=320.0, cx=320.0, cy=240.0,
                                      width=640, height=480)


@dataclass(frozen=True)
class Pose:
    """World->camera rotation (3x3) and translation (3,); see module docstring."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3, translation length 3")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_agent_state(x: float, z: float, yaw: float, camera_y: float) -> "Pose":
        """Pose of a level camera at (x, camera_y, z) facing world yaw.

        yaw = 0 faces +z; positive yaw turns toward +x. Camera y axis points
        down (-Y world), giving a proper (det +1) rotation.
        """
        s, c = math.sin(yaw), math.cos(yaw)
        right = np.array([-c, 0.0, s])
        down = np.array([0.0, -1.0, 0.0])
        forward = np.array([s, 0.0, c])
        r = np.stack([right, down, forward])
        t = -np.array([x, camera_y, z])
        return Pose(r, t)

    def camera_center(self) -> np.ndarray:
        return -self.translation

    def compose_rigid(self, rot: np.ndarray, trans: np.ndarray) -> "Pose":
        """Pose observing points moved by p -> rot @ p + trans.

        If this pose unprojects to p, the returned pose unprojects the same
        pixel/depth to rot @ p + trans.
        """
        rot = np.asarray(rot, dtype=np.float64)
        trans = np.asarray(trans, dtype=np.float64)
        r_new = self.rotation @ rot.T
        t_new = rot @ self.translation - trans
        return Pose(r_new, t_new)


@dataclass(frozen=True)
class GridSpec:
    """Top-down grid geometry: cell (0, 0) corner at (origin_x, origin_z)."""

    origin_x: float
    origin_z: float
    resolution: float
    u_size: int
    v_size: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")


DEFAULT_RESOLUTION = 0.02  # meters per cell


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("world point components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def unproject_pixels(k: CameraIntrinsics, pose: Pose,
                     i: np.ndarray, j: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Vectorized inverse pinhole projection; returns (..., 3) world points."""
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    cam = np.stack([(i - k.cx) / k.fx * d, (j - k.cy) / k.fy * d, d], axis=-1)
    return cam @ pose.rotation - pose.translation  # cam @ R == (R^T cam^T)^T


def unproject_pixel(k: CameraIntrinsics, pose: Pose,
                    i: float, j: float, d: float) -> WorldPoint:
    """Shoot a ray through pixel (i, j) out to planar depth d."""
    if d <= 0:
        raise NonPositiveDepth(f"depth must be positive, got {d}")
    if not (0 <= i < k.width and 0 <= j < k.height):
        raise PixelOutOfBounds(f"pixel ({i}, {j}) outside {k.width}x{k.height}")
    p = unproject_pixels(k, pose, i, j, d)
    return WorldPoint(float(p[0]), float(p[1]), float(p[2]))


def project_points(k: CameraIntrinsics, pose: Pose, pts: np.ndarray):
    """Vectorized forward projection; returns (i, j, d) arrays.

    Callers must check d > 0 themselves.
    """
    pts = np.asarray(pts, dtype=np.float64)
    cam = (pts + pose.translation) @ pose.rotation.T
    d = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        i = cam[..., 0] / d * k.fx + k.cx
        j = cam[..., 1] / d * k.fy + k.cy
    return i, j, d


def project_point(k: CameraIntrinsics, pose: Pose, p: WorldPoint):
    """Forward pinhole projection of a world point to (i, j, d)."""
    i, j, d = project_points(k, pose, p.as_array())
    if d <= 0:
        raise BehindCamera(f"camera-frame depth {d} <= 0")
    return float(i), float(j), float(d)


def world_to_cells(g: GridSpec, x: np.ndarray, z: np.ndarray):
    """Vectorized orthographic binning; no bounds check."""
    u = np.floor((np.asarray(x) - g.origin_x) / g.resolution).astype(np.int64)
    v = np.floor((np.asarray(z) - g.origin_z) / g.resolution).astype(np.int64)
    return u, v


def world_to_cell(g: GridSpec, p: WorldPoint):
    """Map a world point to its grid cell (u, v); y is dropped."""
    u = math.floor((p.x - g.origin_x) / g.resolution)
    v = math.floor((p.z - g.origin_z) / g.resolution)
    if not (0 <= u < g.u_size and 0 <= v < g.v_size):
        raise CellOutOfGrid(f"cell ({u}, {v}) outside {g.u_size}x{g.v_size}")
    return u, v


# Depth readings sit a rounding error short of the surface they hit; pushing
# the hit point this far along the ray makes a point lying exactly on an
# axis-aligned face bin into the occupied cell instead of the empty neighbor.
SURFACE_NUDGE = 1.0e-5  # meters of extra depth applied before cell binning


def frame_footprint(k: CameraIntrinsics, pose: Pose, depth_frame: np.ndarray,
                    grid: GridSpec, camera_y: float,
                    ceiling_margin: float = 0.50) -> np.ndarray:
    """Observed-cell mask (v_size, u_size) for one depth frame.

    A cell counts as observed if at least one pixel with d > 0 projects into
    it, excluding pixels whose world height exceeds camera_y + ceiling_margin
    (the ceiling rule).
    """
    depth = np.asarray(depth_frame, dtype=np.float64)
    if depth.shape != (k.height, k.width):
        raise ValueError("depth frame dims do not match intrinsics")
    mask = np.zeros((grid.v_size, grid.u_size), dtype=np.uint8)
    valid = depth > 0
    if not valid.any():
        return mask
    jj, ii = np.nonzero(valid)
    pts = unproject_pixels(k, pose, ii, jj, depth[jj, ii] + SURFACE_NUDGE)
    keep = pts[:, 1] <= camera_y + ceiling_margin
    pts = pts[keep]
    u, v = world_to_cells(grid, pts[:, 0], pts[:, 2])
    ok = (u >= 0) & (u < grid.u_size) & (v >= 0) & (v < grid.v_size)
    mask[v[ok], u[ok]] = 1
    return mask
