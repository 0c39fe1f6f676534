"""Pinhole camera model and 3D geometry primitives.

Coordinate conventions (fixed once, asserted in tests):
  World frame:  right-handed, +z up.
  Camera frame: right-handed, +x right in image, +y down in image,
                +z forward into the scene (standard computer vision).
  Image frame:  pixel origin at the top-left corner, u right, v down.

Extrinsics map world points into the camera frame: ``Xc = R @ Xw + t``.
Points and directions are plain numpy arrays of shape (3,) or (2,);
unit directions are expected to satisfy ``abs(norm(v) - 1) < 1e-9``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

# Below half a pixel the projected direction of a 3D vector is numerically
# meaningless; callers treat this as the degenerate case.
DEGENERATE_PIXEL_EPS = 0.5

# Default projection step for direction projection, as a fraction of the
# camera-to-point distance. Large enough to avoid sub-pixel cancellation,
# small enough to stay inside the frustum.
DIRECTION_STEP_FRACTION = 0.05

DEPTH_MAGIC = b"CBDEPTH1"


class GeometryError(ValueError):
    """Base class for geometry failures."""


class PointBehindCameraError(GeometryError):
    """Raised when a point to be projected has non-positive camera depth."""


class DegenerateProjectionError(GeometryError):
    """Raised when a 3D direction projects to less than half a pixel.

    Callers remedy this by adding slight angular noise to the 3D direction
    (see ``prompts.derive_2d_prompts``).
    """


class InvalidDepthError(GeometryError):
    """Raised for non-positive, masked, or out-of-image depth lookups."""


def unit(v: np.ndarray) -> np.ndarray:
    """Return v normalized to unit length. Raises on near-zero input."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise GeometryError("cannot normalize a near-zero vector")
    return v / n


def is_unit(v: np.ndarray, tol: float = 1e-9) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) < tol


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    a = unit(axis)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_from_zy(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Build the gripper rotation matrix from its z and y axes.

    Gram-Schmidt: z is normalized, y is orthogonalized against z, and
    x = y cross z completes a right-handed frame. Columns are (x, y, z).

    Raises:
        GeometryError: on near-zero inputs or when |z_hat . y_hat| >= 0.99
            (the pair no longer determines a rotation).
    """
    z_hat = unit(z)
    y_in = unit(y)
    if abs(float(np.dot(z_hat, y_in))) >= 0.99:
        raise GeometryError("z and y axes are near-parallel")
    y_hat = unit(y_in - np.dot(y_in, z_hat) * z_hat)
    x_hat = np.cross(y_hat, z_hat)
    return np.column_stack([x_hat, y_hat, z_hat])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.focal_x <= 0 or self.focal_y <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.principal_x < self.width and 0 <= self.principal_y < self.height):
            raise GeometryError("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "focal_x": self.focal_x,
            "focal_y": self.focal_y,
            "principal_x": self.principal_x,
            "principal_y": self.principal_y,
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(
            focal_x=float(d["focal_x"]),
            focal_y=float(d["focal_y"]),
            principal_x=float(d["principal_x"]),
            principal_y=float(d["principal_y"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class CameraExtrinsics:
    """World-to-camera transform: Xc = rotation @ Xw + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise GeometryError("rotation must be 3x3")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or np.linalg.det(r) < 0:
            raise GeometryError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraExtrinsics":
        return CameraExtrinsics(
            rotation=np.array(d["rotation"], dtype=float),
            translation=np.array(d["translation"], dtype=float),
        )


IDENTITY_EXTRINSICS = CameraExtrinsics(rotation=np.eye(3), translation=np.zeros(3))


@dataclass
class DepthImage:
    """Per-pixel camera-frame z depth in world units, with a validity mask."""

    width: int
    height: int
    values: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        if self.valid is None:
            self.valid = self.values > 0.0
        else:
            self.valid = np.asarray(self.valid, dtype=bool).reshape(self.height, self.width)
        if np.any(self.values[self.valid] <= 0.0):
            raise InvalidDepthError("valid depths must be positive")

    def at(self, pixel: np.ndarray) -> float:
        """Depth at the nearest integer pixel. Raises on invalid/masked lookups."""
        u, v = float(pixel[0]), float(pixel[1])
        col = int(round(u))
        row = int(round(v))
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise InvalidDepthError(f"pixel ({u:.1f}, {v:.1f}) outside image bounds")
        if not self.valid[row, col]:
            raise InvalidDepthError(f"no valid depth at pixel ({col}, {row})")
        return float(self.values[row, col])

    def to_bytes(self) -> bytes:
        """Serialize as magic + uint32 width/height + float32 LE row-major.

        Invalid pixels are stored as 0.0.
        """
        data = np.where(self.valid, self.values, 0.0).astype("<f4")
        header = DEPTH_MAGIC + struct.pack("<II", self.width, self.height)
        return header + data.tobytes(order="C")

    @staticmethod
    def from_bytes(blob: bytes) -> "DepthImage":
        if blob[: len(DEPTH_MAGIC)] != DEPTH_MAGIC:
            raise InvalidDepthError("bad depth raster magic")
        off = len(DEPTH_MAGIC)
        width, height = struct.unpack_from("<II", blob, off)
        off += 8
        values = np.frombuffer(blob, dtype="<f4", count=width * height, offset=off)
        values = values.reshape(height, width).astype(np.float64)
        return DepthImage(width=width, height=height, values=values, valid=values > 0.0)


@dataclass(frozen=True)
class CameraSamplingConfig:
    """Spherical camera placement ranges around the observed object.

    Distances in world units, angles in degrees. Azimuth is measured from
    the world +x axis in the horizontal plane, altitude above that plane.
    """

    distance_range: tuple[float, float] = (4.5, 5.5)
    azimuth_range_deg: tuple[float, float] = (-45.0, 45.0)
    altitude_range_deg: tuple[float, float] = (30.0, 60.0)

    def __post_init__(self) -> None:
        for lo, hi in (self.distance_range, self.azimuth_range_deg, self.altitude_range_deg):
            if lo > hi:
                raise GeometryError("sampling ranges must satisfy min <= max")


def project(point: np.ndarray, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> np.ndarray:
    """Project a 3D world point to continuous pixel coordinates.

    The result may fall outside image bounds; the caller checks.

    Raises:
        PointBehindCameraError: if the point has non-positive camera depth.
    """
    p = np.asarray(point, dtype=float).reshape(3)
    xc = extrinsics.rotation @ p + extrinsics.translation
    if xc[2] <= 1e-12:
        raise PointBehindCameraError(f"point has camera depth {xc[2]:.3g}")
    u = intrinsics.focal_x * xc[0] / xc[2] + intrinsics.principal_x
    v = intrinsics.focal_y * xc[1] / xc[2] + intrinsics.principal_y
    return np.array([u, v])


def lift(
    pixel: np.ndarray,
    depth_value: float,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
) -> np.ndarray:
    """Lift a pixel with known camera-frame depth to a 3D world point.

    Exact inverse of :func:`project` given the true depth.

    Raises:
        InvalidDepthError: if depth_value is not positive and finite.
    """
    if not np.isfinite(depth_value) or depth_value <= 0.0:
        raise InvalidDepthError(f"depth must be positive, got {depth_value!r}")
    u, v = float(pixel[0]), float(pixel[1])
    x = (u - intrinsics.principal_x) / intrinsics.focal_x * depth_value
    y = (v - intrinsics.principal_y) / intrinsics.focal_y * depth_value
    xc = np.array([x, y, depth_value])
    return extrinsics.rotation.T @ (xc - extrinsics.translation)


def pixel_ray(pixel: np.ndarray, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> np.ndarray:
    """Unit world direction of the viewing ray through a pixel (camera to scene)."""
    u, v = float(pixel[0]), float(pixel[1])
    d_cam = np.array(
        [
            (u - intrinsics.principal_x) / intrinsics.focal_x,
            (v - intrinsics.principal_y) / intrinsics.focal_y,
            1.0,
        ]
    )
    return unit(extrinsics.rotation.T @ d_cam)


def projection_jacobian(
    point: np.ndarray, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics
) -> np.ndarray:
    """2x3 Jacobian of project() with respect to the world point."""
    p = np.asarray(point, dtype=float).reshape(3)
    xc = extrinsics.rotation @ p + extrinsics.translation
    if xc[2] <= 1e-12:
        raise PointBehindCameraError("jacobian requested behind the camera")
    x, y, z = xc
    j_pix = np.array(
        [
            [intrinsics.focal_x / z, 0.0, -intrinsics.focal_x * x / (z * z)],
            [0.0, intrinsics.focal_y / z, -intrinsics.focal_y * y / (z * z)],
        ]
    )
    return j_pix @ extrinsics.rotation


def project_direction(
    origin: np.ndarray,
    direction: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    step: float | None = None,
) -> np.ndarray:
    """Project a 3D direction at a world point into a unit 2D image direction.

    Walks ``step`` along the direction from the origin, projects both points,
    and normalizes the pixel difference. ``step`` defaults to 5% of the
    camera-to-origin distance.

    Raises:
        DegenerateProjectionError: when the projected segment is shorter than
            half a pixel (direction near-parallel to the viewing ray).
        PointBehindCameraError: if either endpoint falls behind the camera.
    """
    o = np.asarray(origin, dtype=float).reshape(3)
    d = unit(direction)
    if step is None:
        step = DIRECTION_STEP_FRACTION * float(np.linalg.norm(o - extrinsics.camera_center))
    if step <= 0:
        raise GeometryError("projection step must be positive")
    p0 = project(o, intrinsics, extrinsics)
    p1 = project(o + step * d, intrinsics, extrinsics)
    delta = p1 - p0
    n = float(np.linalg.norm(delta))
    if n < DEGENERATE_PIXEL_EPS:
        raise DegenerateProjectionError(
            f"direction projects to {n:.3f} px, below {DEGENERATE_PIXEL_EPS} px"
        )
    return delta / n


def estimate_normal(
    depth: DepthImage,
    pixel: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    window: int = 7,
) -> np.ndarray:
    """Estimate the world-frame surface normal at a pixel from the depth raster.

    Lifts every valid pixel inside the window to 3D and fits a plane by
    least squares (smallest singular vector of the centered point cloud).
    The normal is oriented toward the camera.

    Raises:
        GeometryError: if window is not odd and >= 3.
        InvalidDepthError: with fewer than 3 valid pixels in the window.
    """
    if window < 3 or window % 2 == 0:
        raise GeometryError("window must be odd and >= 3")
    u0 = int(round(float(pixel[0])))
    v0 = int(round(float(pixel[1])))
    half = window // 2
    pts = []
    for row in range(max(0, v0 - half), min(depth.height, v0 + half + 1)):
        for col in range(max(0, u0 - half), min(depth.width, u0 + half + 1)):
            if depth.valid[row, col]:
                pts.append(lift((col, row), float(depth.values[row, col]), intrinsics, extrinsics))
    if len(pts) < 3:
        raise InvalidDepthError("not enough valid depth neighbors for a plane fit")
    cloud = np.array(pts)
    centered = cloud - cloud.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = unit(vt[-1])
    ray = pixel_ray((u0, v0), intrinsics, extrinsics)
    if float(np.dot(normal, ray)) > 0:
        normal = -normal
    return normal


def look_at_extrinsics(position: np.ndarray, target: np.ndarray) -> CameraExtrinsics:
    """Extrinsics for a camera at ``position`` facing ``target``, world +z as up."""
    position = np.asarray(position, dtype=float).reshape(3)
    target = np.asarray(target, dtype=float).reshape(3)
    forward = unit(target - position)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(forward, up))) > 1.0 - 1e-9:
        raise GeometryError("camera forward axis parallel to world up")
    # Camera y points "down" in the image: the component of -up orthogonal to forward.
    down = unit(-up + np.dot(up, forward) * forward)
    right = np.cross(down, forward)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ position
    return CameraExtrinsics(rotation=rotation, translation=translation)


def spherical_camera_position(
    target: np.ndarray, distance: float, azimuth_deg: float, altitude_deg: float
) -> np.ndarray:
    az = np.radians(azimuth_deg)
    alt = np.radians(altitude_deg)
    offset = distance * np.array([np.cos(alt) * np.cos(az), np.cos(alt) * np.sin(az), np.sin(alt)])
    return np.asarray(target, dtype=float).reshape(3) + offset


def sample_camera_pose(
    rng: np.random.Generator,
    config: CameraSamplingConfig,
    target: np.ndarray,
) -> CameraExtrinsics:
    """Sample a camera pose on the upper hemisphere around ``target``.

    Distance, azimuth, and altitude are drawn uniformly from the configured
    ranges; the camera faces the target center. Deterministic given the rng.
    """
    distance = rng.uniform(*config.distance_range)
    azimuth = rng.uniform(*config.azimuth_range_deg)
    altitude = rng.uniform(*config.altitude_range_deg)
    position = spherical_camera_position(target, distance, azimuth, altitude)
    return look_at_extrinsics(position, target)
