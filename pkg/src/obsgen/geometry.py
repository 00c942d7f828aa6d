"""Pinhole camera geometry, point-cloud transforms, and depth-map utilities.

Conventions used throughout the package:

* right-handed camera frame, camera looks down +z, image u to the right and
  v downward; a pixel (u, v) with metric depth d unprojects to
  ``((u - cx) / fx * d, (v - cy) / fy * d, d)``,
* invalid depth is stored as NaN in memory (serialized as 0 on disk, since
  valid depth is strictly positive),
* surface normals estimated from depth are oriented toward the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INVALID_DEPTH = np.nan
MIN_NORM_SCALE = 1e-6
_ROT_TOL = 1e-9


class GeometryError(ValueError):
    """Raised when a geometric precondition is violated."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )

    def scale_focal(self, factor: float) -> "CameraIntrinsics":
        """Return a copy with fx, fy multiplied by `factor` (FoV change)."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor, self.cx, self.cy, self.width, self.height)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]))


class DepthMap:
    """Per-pixel metric depth. Invalid/background pixels hold NaN."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 2:
            raise GeometryError(f"depth must be a 2D array, got shape {values.shape}")
        finite = np.isfinite(values)
        if np.any(values[finite] <= 0):
            raise GeometryError("valid depth entries must be strictly positive")
        # normalize every non-finite entry to the NaN sentinel
        values = values.copy()
        values[~finite] = INVALID_DEPTH
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy())

    @classmethod
    def full_invalid(cls, height: int, width: int) -> "DepthMap":
        return cls(np.full((height, width), INVALID_DEPTH, dtype=np.float32))


@dataclass(frozen=True)
class RigidTransform:
    """Rigid motion p' = R p + t with orthonormal right-handed rotation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ROT_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ROT_TOL:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]], dtype=np.float64
        )
        r = np.eye(3) + np.sin(angle_rad) * k + (1 - np.cos(angle_rad)) * (k @ k)
        # re-orthonormalize so the constructor tolerance is met exactly
        u, _, vt = np.linalg.svd(r)
        return cls(u @ vt, np.asarray(translation, dtype=np.float64))

    @classmethod
    def random(cls, rng: np.random.Generator, max_translation: float = 1.0) -> "RigidTransform":
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        u, _, vt = np.linalg.svd(r)
        t = rng.uniform(-max_translation, max_translation, size=3)
        return cls(u @ vt, t)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def apply_normals(self, normals: np.ndarray) -> np.ndarray:
        return np.asarray(normals, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return the transform equivalent to applying `other` first, then self."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


class OrientedPointCloud:
    """3D points with unit normals; a zero normal marks a degenerate estimate."""

    def __init__(self, points: np.ndarray, normals: np.ndarray):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        if points.shape[0] != normals.shape[0]:
            raise GeometryError("points and normals must have the same count")
        lengths = np.linalg.norm(normals, axis=1)
        bad = (np.abs(lengths - 1.0) > 1e-6) & (lengths != 0.0)
        if np.any(bad):
            raise GeometryError(f"{int(bad.sum())} normals are neither unit length nor exactly zero")
        self.points = points
        self.normals = normals

    def __len__(self) -> int:
        return self.points.shape[0]

    def copy(self) -> "OrientedPointCloud":
        return OrientedPointCloud(self.points.copy(), self.normals.copy())


class TriangleMesh:
    """Explicit triangle mesh: V x 3 vertices and F x 3 vertex indices."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise GeometryError("face index out of range")
            degenerate = (
                (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
            )
            if np.any(degenerate):
                raise GeometryError(f"{int(degenerate.sum())} degenerate faces (repeated vertex index)")
        self.vertices = vertices
        self.faces = faces

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0 or len(self.faces) == 0

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_empty:
            raise GeometryError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class NormalizationConstants:
    """Affine map p -> (p - center) / scale and its exact inverse."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.scale <= 0:
            raise GeometryError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "center", center)

    def normalize_points(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def denormalize_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def with_margin(self, margin: float) -> "NormalizationConstants":
        return NormalizationConstants(self.center, self.scale * margin)

    def to_dict(self) -> dict:
        return {"center": [float(c) for c in self.center], "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationConstants":
        return cls(np.asarray(d["center"], dtype=np.float64), float(d["scale"]))


def unproject_depth(depth: DepthMap, k: CameraIntrinsics) -> OrientedPointCloud:
    """Lift every valid depth pixel into a 3D point in the camera frame.

    Points are emitted in row-major pixel order (v, then u). Normals come
    from `compute_normals_from_depth`; pixels with no stable normal get an
    exact zero vector.
    """
    _check_dims(depth, k)
    mask = depth.valid_mask
    v, u = np.nonzero(mask)
    d = depth.values[v, u].astype(np.float64)
    x = (u - k.cx) / k.fx * d
    y = (v - k.cy) / k.fy * d
    points = np.stack([x, y, d], axis=1)
    normal_map = compute_normals_from_depth(depth, k)
    return OrientedPointCloud(points, normal_map[v, u])


def compute_normals_from_depth(depth: DepthMap, k: CameraIntrinsics) -> np.ndarray:
    """Estimate a unit normal per pixel from the unprojected point map.

    Tangents are central differences of the 3D point map along the image u
    and v axes; the normal is their normalized cross product, flipped to
    face the camera. Pixels that are invalid, on the image border, adjacent
    to an invalid pixel, or whose cross product has near-zero magnitude get
    an exact zero normal. Returns an (H, W, 3) array.
    """
    _check_dims(depth, k)
    h, w = depth.height, depth.width
    d = depth.values.astype(np.float64)
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    pts = np.stack([(uu - k.cx) / k.fx * d, (vv - k.cy) / k.fy * d, d], axis=2)

    normals = np.zeros((h, w, 3), dtype=np.float64)
    if h < 3 or w < 3:
        return normals

    valid = depth.valid_mask
    ok = (
        valid[1:-1, 1:-1]
        & valid[1:-1, 2:] & valid[1:-1, :-2]
        & valid[2:, 1:-1] & valid[:-2, 1:-1]
    )
    tan_u = pts[1:-1, 2:] - pts[1:-1, :-2]
    tan_v = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = np.cross(tan_u, tan_v)
    n[~np.isfinite(n)] = 0.0
    mag = np.linalg.norm(n, axis=2)
    ok &= mag > 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(ok[..., None], n / np.where(mag[..., None] > 0, mag[..., None], 1.0), 0.0)
    # orient toward the camera: flip when pointing away from the origin ray
    dots = np.sum(n * pts[1:-1, 1:-1], axis=2)
    n = np.where((dots > 0)[..., None], -n, n)
    normals[1:-1, 1:-1] = n
    return normals


def apply_rigid_transform(obj, t: RigidTransform):
    """Apply `t` to an OrientedPointCloud or TriangleMesh, returning the same type."""
    if isinstance(obj, OrientedPointCloud):
        return OrientedPointCloud(t.apply_points(obj.points), t.apply_normals(obj.normals))
    if isinstance(obj, TriangleMesh):
        return TriangleMesh(t.apply_points(obj.vertices), obj.faces.copy())
    raise GeometryError(f"unsupported type for rigid transform: {type(obj).__name__}")


def normalize_to_unit_box(
    cloud: OrientedPointCloud, min_scale: float = MIN_NORM_SCALE
) -> tuple[OrientedPointCloud, NormalizationConstants]:
    """Center on the bounding-box center and scale isotropically into [-1, 1]^3.

    The scale is half the largest bounding-box extent, clamped to `min_scale`
    so degenerate (single-point / zero-extent) clouds map to the origin.
    """
    if len(cloud) == 0:
        raise GeometryError("cannot normalize an empty point cloud")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    center = (lo + hi) / 2.0
    scale = max(float((hi - lo).max()) / 2.0, min_scale)
    constants = NormalizationConstants(center, scale)
    return OrientedPointCloud(constants.normalize_points(cloud.points), cloud.normals.copy()), constants


def resample_to_fixed_size(cloud: OrientedPointCloud, n_target: int, seed: int) -> OrientedPointCloud:
    """Downsample to or duplicate up to exactly `n_target` points, seeded.

    With more points than the target a uniform random subset is kept; with
    fewer, all originals are kept and random duplicates fill the remainder.
    """
    if len(cloud) == 0:
        raise GeometryError("cannot resample an empty point cloud")
    if n_target < 1:
        raise GeometryError(f"n_target must be >= 1, got {n_target}")
    n = len(cloud)
    rng = np.random.default_rng(seed)
    if n > n_target:
        idx = rng.choice(n, size=n_target, replace=False)
    elif n < n_target:
        extra = rng.choice(n, size=n_target - n, replace=True)
        idx = np.concatenate([np.arange(n), extra])
    else:
        idx = np.arange(n)
    return OrientedPointCloud(cloud.points[idx], cloud.normals[idx])


def look_at_pose(position, target, up=(0.0, 1.0, 0.0)) -> RigidTransform:
    """Camera-to-world pose for a camera at `position` looking at `target`.

    The camera frame is x-right / y-down / z-forward; `up` fixes the roll.
    """
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise GeometryError("camera position and target coincide")
    forward = forward / norm
    down = -np.asarray(up, dtype=np.float64)
    down = down - np.dot(down, forward) * forward
    dn = np.linalg.norm(down)
    if dn < 1e-9:
        raise GeometryError("up vector is parallel to the viewing direction")
    down = down / dn
    right = np.cross(down, forward)
    r = np.stack([right, down, forward], axis=1)
    u, _, vt = np.linalg.svd(r)
    return RigidTransform(u @ vt, position)


def orbit_pose(azimuth_deg: float, elevation_deg: float, radius: float, target=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Camera-to-world pose on an orbit around `target`.

    Azimuth 0 / elevation 0 places the camera at target + (0, 0, -radius)
    looking toward +z; positive elevation raises the camera.
    """
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    target = np.asarray(target, dtype=np.float64)
    offset = radius * np.array([np.sin(az) * np.cos(el), np.sin(el), -np.cos(az) * np.cos(el)])
    return look_at_pose(target + offset, target)


def _check_dims(depth: DepthMap, k: CameraIntrinsics) -> None:
    if depth.width != k.width or depth.height != k.height:
        raise GeometryError(
            f"depth map is {depth.width}x{depth.height} but intrinsics expect {k.width}x{k.height}"
        )
