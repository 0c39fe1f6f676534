"""Procedural articulated-object simulator with a flying parallel gripper.

Five scene families (drawer, door, lid, button, lever), each one static box
geometry plus a single rigid movable part on a prismatic or revolute joint.
Rendering is exact ray casting against oriented boxes with flat shading;
execution is quasi-static: commanded gripper displacement is projected onto
the joint's instantaneous free direction with slip rejection, and success is
judged by the fraction of the joint range moved.

World frame: right-handed, +z up, object "front" toward +x. Part geometry is
authored at joint state zero (rest) and posed by the joint transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DepthImage,
    GeometryError,
    project,
    rotation_about_axis,
    rotation_from_zy,
    unit,
)

SCENE_KINDS = ("drawer", "door", "lid", "button", "lever")

BACKGROUND_COLOR = np.array([44, 48, 56], dtype=np.uint8)
_LIGHT_DIR = unit(np.array([0.45, -0.30, 0.84]))
_AMBIENT = 0.35

_RAY_EPS = 1e-9


class SceneError(RuntimeError):
    pass


class MalformedActionError(ValueError):
    """Structurally invalid action (zero axes), distinct from a failed execution."""


@dataclass
class Joint:
    kind: str  # "prismatic" | "revolute"
    axis: np.ndarray
    pivot: np.ndarray | None
    limits: tuple[float, float]
    state: float

    def __post_init__(self) -> None:
        if self.kind not in ("prismatic", "revolute"):
            raise SceneError(f"unknown joint kind {self.kind!r}")
        self.axis = unit(np.asarray(self.axis, dtype=float))
        if self.kind == "revolute":
            if self.pivot is None:
                raise SceneError("revolute joints need a pivot")
            self.pivot = np.asarray(self.pivot, dtype=float).reshape(3)
        lo, hi = self.limits
        if not lo < hi:
            raise SceneError("joint limits must satisfy lo < hi")
        if not (lo - 1e-12 <= self.state <= hi + 1e-12):
            raise SceneError("joint state outside limits")

    @property
    def range(self) -> float:
        return self.limits[1] - self.limits[0]

    def clamp(self, q: float) -> float:
        return float(min(max(q, self.limits[0]), self.limits[1]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axis": self.axis.tolist(),
            "pivot": None if self.pivot is None else self.pivot.tolist(),
            "limits": [self.limits[0], self.limits[1]],
            "state": self.state,
        }


@dataclass
class Box:
    """Axis-aligned box in its rest frame, with corners lo/hi."""

    name: str
    lo: np.ndarray
    hi: np.ndarray
    color: tuple[int, int, int]
    movable: bool = False

    def __post_init__(self) -> None:
        self.lo = np.asarray(self.lo, dtype=float).reshape(3)
        self.hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(self.hi <= self.lo):
            raise SceneError(f"box {self.name!r} has non-positive extent")


@dataclass
class GraspRegion:
    """Sub-rectangle of a movable-part face where ground-truth contacts live.

    All vectors are in the part rest frame. ``tangent_long`` spans the long
    edge and is the designated ground-truth y-axis tangent.
    """

    center: np.ndarray
    normal: np.ndarray
    tangent_long: np.ndarray
    tangent_short: np.ndarray
    half_long: float
    half_short: float


@dataclass
class GripperState:
    rotation: np.ndarray
    position: np.ndarray
    aperture: str  # "open" | "closed"
    attached: np.ndarray | None = None  # contact anchor in part rest frame


@dataclass
class GroundTruthAction:
    """Successful contact pose recorded by rule-based interaction."""

    contact_point_3d: np.ndarray
    z_axis: np.ndarray
    y_axis: np.ndarray
    move_dir: np.ndarray | None
    part_id: str

    def __post_init__(self) -> None:
        self.contact_point_3d = np.asarray(self.contact_point_3d, dtype=float).reshape(3)
        self.z_axis = unit(self.z_axis)
        self.y_axis = unit(self.y_axis)
        if self.move_dir is not None:
            self.move_dir = unit(self.move_dir)
        if abs(float(np.dot(self.z_axis, self.y_axis))) >= 1e-6:
            raise SceneError("ground-truth z and y axes must be orthogonal")

    def to_dict(self) -> dict:
        return {
            "contact_point_3d": self.contact_point_3d.tolist(),
            "z_axis": self.z_axis.tolist(),
            "y_axis": self.y_axis.tolist(),
            "move_dir": None if self.move_dir is None else self.move_dir.tolist(),
            "part_id": self.part_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "GroundTruthAction":
        return GroundTruthAction(
            contact_point_3d=np.asarray(d["contact_point_3d"], dtype=float),
            z_axis=np.asarray(d["z_axis"], dtype=float),
            y_axis=np.asarray(d["y_axis"], dtype=float),
            move_dir=None if d["move_dir"] is None else np.asarray(d["move_dir"], dtype=float),
            part_id=d["part_id"],
        )


@dataclass
class ExecutionResult:
    success: bool
    part_displacement: float
    trajectory: list[GripperState]
    failure_reason: str | None  # no_contact | slip | collision | no_motion
    steps_rejected: int = 0


@dataclass
class ExecParams:
    pre_move_distance: float = 0.15
    move_distance: float | None = None  # default: half the joint range at the anchor
    n_steps: int = 10
    grasp_distance_tol: float = 0.05
    grasp_angle_tol_deg: float = 60.0
    slip_lateral_fraction: float = 0.5
    success_threshold: float = 0.10
    approach_slack: float = 0.40


@dataclass
class Scene:
    kind: str
    seed: int
    boxes: list[Box]
    part: Box
    joint: Joint
    grasp_regions: list[GraspRegion]
    target: np.ndarray  # camera look-at point
    primitive: str  # default task primitive for this family ("pull" | "push")
    part_id: str = ""

    def __post_init__(self) -> None:
        self.target = np.asarray(self.target, dtype=float).reshape(3)
        if not self.part_id:
            self.part_id = f"{self.kind}:part"

    # -- joint pose -------------------------------------------------------

    def part_rotation(self) -> np.ndarray:
        if self.joint.kind == "revolute":
            return rotation_about_axis(self.joint.axis, self.joint.state)
        return np.eye(3)

    def part_point_to_world(self, p_rest: np.ndarray) -> np.ndarray:
        p = np.asarray(p_rest, dtype=float)
        if self.joint.kind == "prismatic":
            return p + self.joint.state * self.joint.axis
        r = self.part_rotation()
        return self.joint.pivot + r @ (p - self.joint.pivot)

    def part_dir_to_world(self, d_rest: np.ndarray) -> np.ndarray:
        if self.joint.kind == "prismatic":
            return np.asarray(d_rest, dtype=float)
        return self.part_rotation() @ np.asarray(d_rest, dtype=float)

    def world_to_part(self, p_world: np.ndarray) -> np.ndarray:
        p = np.asarray(p_world, dtype=float)
        if self.joint.kind == "prismatic":
            return p - self.joint.state * self.joint.axis
        r = self.part_rotation()
        return self.joint.pivot + r.T @ (p - self.joint.pivot)

    def free_direction(self, anchor_world: np.ndarray) -> np.ndarray | None:
        """Unit direction the anchor moves under positive joint velocity."""
        if self.joint.kind == "prismatic":
            return self.joint.axis
        r = np.asarray(anchor_world, dtype=float) - self.joint.pivot
        v = np.cross(self.joint.axis, r)
        n = float(np.linalg.norm(v))
        if n < 1e-9:
            return None
        return v / n

    def anchor_radius(self, anchor_world: np.ndarray) -> float:
        """Perpendicular distance of a world point from the revolute axis."""
        r = np.asarray(anchor_world, dtype=float) - self.joint.pivot
        return float(np.linalg.norm(np.cross(self.joint.axis, r)))

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "joint": self.joint.to_dict(),
            "primitive": self.primitive,
        }


def scene_from_record(rec: dict) -> Scene:
    scene = build_scene(rec["kind"], rec["seed"])
    stored = rec["joint"]
    if stored["kind"] != scene.joint.kind:
        raise SceneError("scene record joint kind does not match the rebuilt scene")
    scene.joint.state = scene.joint.clamp(float(stored["state"]))
    return scene


# -- procedural construction ------------------------------------------------


def _init_state(rng: np.random.Generator, limits: tuple[float, float]) -> float:
    lo, hi = limits
    return float(rng.uniform(lo, lo + 0.5 * (hi - lo)))


def _ground() -> Box:
    return Box("ground", (-2.6, -2.6, -0.1), (2.6, 2.6, 0.0), (118, 118, 110))


def _build_drawer(rng: np.random.Generator) -> tuple[list[Box], Box, Joint, list[GraspRegion], str]:
    width = rng.uniform(1.1, 1.5)
    depth = rng.uniform(0.9, 1.2)
    height = rng.uniform(0.9, 1.3)
    wall = 0.06
    gap = 0.02
    cab = (120, 88, 60)
    boxes = [
        _ground(),
        Box("back", (-depth / 2, -width / 2, 0), (-depth / 2 + wall, width / 2, height), cab),
        Box("left", (-depth / 2, -width / 2, 0), (depth / 2, -width / 2 + wall, height), cab),
        Box("right", (-depth / 2, width / 2 - wall, 0), (depth / 2, width / 2, height), cab),
        Box("top", (-depth / 2, -width / 2, height - wall), (depth / 2, width / 2, height), cab),
        Box("bottom", (-depth / 2, -width / 2, 0), (depth / 2, width / 2, wall), cab),
    ]
    inner_w = width - 2 * (wall + gap)
    drawer_h = 0.45 * height
    lo = np.array([-depth / 2 + wall + gap, -inner_w / 2, wall + gap])
    hi = np.array([depth / 2 + 0.03, inner_w / 2, wall + gap + drawer_h])
    part = Box("drawer", lo, hi, (168, 136, 96), movable=True)
    joint = Joint("prismatic", np.array([1.0, 0.0, 0.0]), None, (0.0, 0.6 * depth), 0.0)
    region = GraspRegion(
        center=np.array([hi[0], 0.0, (lo[2] + hi[2]) / 2]),
        normal=np.array([1.0, 0.0, 0.0]),
        tangent_long=np.array([0.0, 1.0, 0.0]),
        tangent_short=np.array([0.0, 0.0, 1.0]),
        half_long=0.30 * inner_w,
        half_short=0.18 * drawer_h,
    )
    return boxes, part, joint, [region], "pull"


def _build_door(rng: np.random.Generator) -> tuple[list[Box], Box, Joint, list[GraspRegion], str]:
    width = rng.uniform(0.8, 1.1)
    height = rng.uniform(1.2, 1.6)
    thick = 0.07
    closet_depth = 0.5
    frame = (105, 105, 112)
    z0 = 0.05
    boxes = [
        _ground(),
        Box("back", (-closet_depth, -width / 2 - 0.08, 0), (-closet_depth + 0.06, width / 2 + 0.08, z0 + height + 0.08), frame),
        Box("left", (-closet_depth, -width / 2 - 0.08, 0), (0.0, -width / 2, z0 + height + 0.08), frame),
        Box("right", (-closet_depth, width / 2, 0), (0.0, width / 2 + 0.08, z0 + height + 0.08), frame),
        Box("lintel", (-closet_depth, -width / 2, z0 + height), (0.0, width / 2, z0 + height + 0.08), frame),
        Box("sill", (-closet_depth, -width / 2, 0), (0.0, width / 2, z0), frame),
    ]
    lo = np.array([0.0, -width / 2 + 0.01, z0])
    hi = np.array([thick, width / 2 - 0.01, z0 + height])
    part = Box("door", lo, hi, (150, 112, 72), movable=True)
    pivot = np.array([thick / 2, width / 2 - 0.01, 0.0])
    joint = Joint("revolute", np.array([0.0, 0.0, 1.0]), pivot, (0.0, np.radians(115.0)), 0.0)
    # Both door faces are graspable near the free edge: a widely opened door is
    # pushed shut from its back side.
    regions = [
        GraspRegion(
            center=np.array([thick, -width / 2 + 0.16, z0 + height / 2]),
            normal=np.array([1.0, 0.0, 0.0]),
            tangent_long=np.array([0.0, 0.0, 1.0]),
            tangent_short=np.array([0.0, 1.0, 0.0]),
            half_long=0.22 * height,
            half_short=0.09,
        ),
        GraspRegion(
            center=np.array([0.0, -width / 2 + 0.16, z0 + height / 2]),
            normal=np.array([-1.0, 0.0, 0.0]),
            tangent_long=np.array([0.0, 0.0, 1.0]),
            tangent_short=np.array([0.0, 1.0, 0.0]),
            half_long=0.22 * height,
            half_short=0.09,
        ),
    ]
    return boxes, part, joint, regions, "pull"


def _build_lid(rng: np.random.Generator) -> tuple[list[Box], Box, Joint, list[GraspRegion], str]:
    lx = rng.uniform(0.9, 1.2)
    ly = rng.uniform(0.9, 1.3)
    body_h = rng.uniform(0.5, 0.7)
    wall = 0.06
    body = (98, 108, 122)
    boxes = [
        _ground(),
        Box("front", (lx / 2 - wall, -ly / 2, 0), (lx / 2, ly / 2, body_h), body),
        Box("backw", (-lx / 2, -ly / 2, 0), (-lx / 2 + wall, ly / 2, body_h), body),
        Box("left", (-lx / 2, -ly / 2, 0), (lx / 2, -ly / 2 + wall, body_h), body),
        Box("right", (-lx / 2, ly / 2 - wall, 0), (lx / 2, ly / 2, body_h), body),
        Box("base", (-lx / 2, -ly / 2, 0), (lx / 2, ly / 2, wall), body),
    ]
    lo = np.array([-lx / 2 - 0.02, -ly / 2 - 0.02, body_h])
    hi = np.array([lx / 2 + 0.05, ly / 2 + 0.02, body_h + 0.06])
    part = Box("lid", lo, hi, (152, 152, 158), movable=True)
    # Range capped at 60 degrees: half-open stays below the minimum camera
    # altitude, keeping the lid's top face visible from every sampled view.
    pivot = np.array([-lx / 2 - 0.02, 0.0, body_h])
    joint = Joint("revolute", np.array([0.0, -1.0, 0.0]), pivot, (0.0, np.radians(60.0)), 0.0)
    region = GraspRegion(
        center=np.array([lx / 2 - 0.12, 0.0, body_h + 0.06]),
        normal=np.array([0.0, 0.0, 1.0]),
        tangent_long=np.array([0.0, 1.0, 0.0]),
        tangent_short=np.array([1.0, 0.0, 0.0]),
        half_long=0.30 * ly,
        half_short=0.08,
    )
    return boxes, part, joint, [region], "pull"


def _build_button(rng: np.random.Generator) -> tuple[list[Box], Box, Joint, list[GraspRegion], str]:
    bx = rng.uniform(0.55, 0.75)
    by = rng.uniform(0.55, 0.75)
    bh = rng.uniform(0.5, 0.7)
    side = rng.uniform(0.26, 0.34)
    cx = rng.uniform(-0.08, 0.08)
    cy = rng.uniform(-0.08, 0.08)
    boxes = [
        _ground(),
        Box("base", (-bx / 2, -by / 2, 0), (bx / 2, by / 2, bh), (125, 125, 130)),
    ]
    lo = np.array([cx - side / 2, cy - side / 2, bh])
    hi = np.array([cx + side / 2, cy + side / 2, bh + 0.12])
    part = Box("button", lo, hi, (178, 92, 92), movable=True)
    joint = Joint("prismatic", np.array([0.0, 0.0, -1.0]), None, (0.0, 0.07), 0.0)
    region = GraspRegion(
        center=np.array([cx, cy, bh + 0.12]),
        normal=np.array([0.0, 0.0, 1.0]),
        tangent_long=np.array([1.0, 0.0, 0.0]),
        tangent_short=np.array([0.0, 1.0, 0.0]),
        half_long=0.35 * side,
        half_short=0.35 * side,
    )
    return boxes, part, joint, [region], "push"


def _build_lever(rng: np.random.Generator) -> tuple[list[Box], Box, Joint, list[GraspRegion], str]:
    base_h = rng.uniform(0.8, 1.0)
    pw = rng.uniform(0.32, 0.42)
    ph = rng.uniform(0.30, 0.38)
    zc = rng.uniform(0.45, 0.62) * base_h
    boxes = [
        _ground(),
        Box("base", (-0.35, -0.30, 0), (0.25, 0.30, base_h), (118, 112, 128)),
    ]
    lo = np.array([0.25, -pw / 2, zc])
    hi = np.array([0.31, pw / 2, zc + ph])
    part = Box("paddle", lo, hi, (160, 140, 92), movable=True)
    # Hinged at the top edge so the paddle swings outward and up; its front
    # face then stays visible from every sampled camera altitude.
    pivot = np.array([0.28, 0.0, zc + ph])
    joint = Joint("revolute", np.array([0.0, -1.0, 0.0]), pivot, (0.0, np.radians(75.0)), 0.0)
    region = GraspRegion(
        center=np.array([0.31, 0.0, zc + 0.32 * ph]),
        normal=np.array([1.0, 0.0, 0.0]),
        tangent_long=np.array([0.0, 1.0, 0.0]),
        tangent_short=np.array([0.0, 0.0, 1.0]),
        half_long=0.32 * pw,
        half_short=0.17 * ph,
    )
    return boxes, part, joint, [region], "pull"


_BUILDERS = {
    "drawer": _build_drawer,
    "door": _build_door,
    "lid": _build_lid,
    "button": _build_button,
    "lever": _build_lever,
}


def build_scene(kind: str, seed: int) -> Scene:
    """Deterministically build a scene of the given family from a seed.

    The initial joint state is sampled uniformly between rest and half of the
    joint range (half-opened).
    """
    if kind not in _BUILDERS:
        raise SceneError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    rng = np.random.default_rng(int(seed))
    boxes, part, joint, regions, primitive = _BUILDERS[kind](rng)
    joint.state = _init_state(rng, joint.limits)
    zs = [b.hi[2] for b in boxes if b.name != "ground"] + [part.hi[2]]
    target = np.array([0.0, 0.0, 0.55 * max(zs)])
    return Scene(
        kind=kind,
        seed=int(seed),
        boxes=boxes,
        part=part,
        joint=joint,
        grasp_regions=regions,
        target=target,
        primitive=primitive,
    )


# -- ray casting and rendering ----------------------------------------------


def _slab_hits(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Entry parameters and entry-face info for rays against one AABB.

    Returns (t_entry, axis, sign, hit_mask). Rays are o + t * d with the
    camera assumed outside the box (t_entry > 0 on hits).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t_lo = (lo[None, :] - origin[None, :]) * inv
    t_hi = (hi[None, :] - origin[None, :]) * inv
    t_near = np.minimum(t_lo, t_hi)
    t_far = np.maximum(t_lo, t_hi)
    # Rays parallel to a slab: inside -> (-inf, +inf); outside -> no hit.
    parallel = np.abs(dirs) < _RAY_EPS
    inside = (origin[None, :] >= lo[None, :]) & (origin[None, :] <= hi[None, :])
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    axis = np.argmax(t_near, axis=1)
    t_entry = t_near[np.arange(len(dirs)), axis]
    t_exit = t_far.min(axis=1)
    hit = (t_entry <= t_exit) & (t_entry > _RAY_EPS)
    sign = -np.sign(dirs[np.arange(len(dirs)), axis])
    return t_entry, axis, sign, hit


def ray_cast(
    scene: Scene, origins: np.ndarray, dirs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cast rays against all scene geometry at the current joint state.

    Origins may be a single point (shared) or one per ray. Returns
    (t, box_index, normal, part_mask); misses have t = inf and box_index -1.
    Ray parameters are in units of the direction vectors' length.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    n = len(dirs)
    origins = np.asarray(origins, dtype=float)
    shared_origin = origins.ndim == 1
    best_t = np.full(n, np.inf)
    best_idx = np.full(n, -1, dtype=int)
    best_normal = np.zeros((n, 3))
    part_rot = scene.part_rotation()
    all_boxes = scene.boxes + [scene.part]
    for idx, box in enumerate(all_boxes):
        if box.movable:
            if scene.joint.kind == "prismatic":
                shift = scene.joint.state * scene.joint.axis
                o_local = origins - shift
                d_local = dirs
            else:
                pivot = scene.joint.pivot
                o_local = pivot + (origins - pivot) @ part_rot
                d_local = dirs @ part_rot
        else:
            o_local = origins
            d_local = dirs
        if shared_origin:
            o_for_slab = np.asarray(o_local, dtype=float)
            t, axis, sign, hit = _slab_hits(o_for_slab, d_local, box.lo, box.hi)
        else:
            # Per-ray origins: run the slab test row-wise via broadcasting.
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / d_local
            t_lo = (box.lo[None, :] - o_local) * inv
            t_hi = (box.hi[None, :] - o_local) * inv
            t_near = np.minimum(t_lo, t_hi)
            t_far = np.maximum(t_lo, t_hi)
            parallel = np.abs(d_local) < _RAY_EPS
            inside = (o_local >= box.lo[None, :]) & (o_local <= box.hi[None, :])
            t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
            t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
            axis = np.argmax(t_near, axis=1)
            t = t_near[np.arange(n), axis]
            t_exit = t_far.min(axis=1)
            hit = (t <= t_exit) & (t > _RAY_EPS)
            sign = -np.sign(d_local[np.arange(n), axis])
        closer = hit & (t < best_t)
        if not np.any(closer):
            continue
        normals_local = np.zeros((int(closer.sum()), 3))
        normals_local[np.arange(len(normals_local)), axis[closer]] = sign[closer]
        if box.movable and scene.joint.kind == "revolute":
            normals_world = normals_local @ part_rot.T
        else:
            normals_world = normals_local
        best_t[closer] = t[closer]
        best_idx[closer] = idx
        best_normal[closer] = normals_world
    part_mask = best_idx == len(scene.boxes)
    return best_t, best_idx, best_normal, part_mask


@dataclass
class RenderResult:
    rgb: np.ndarray
    depth: DepthImage
    part_mask: np.ndarray


def render_full(scene: Scene, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> RenderResult:
    """Flat-shaded rasterization with exact per-pixel depth and a part mask."""
    w, h = intrinsics.width, intrinsics.height
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    # Camera-frame directions scaled so the ray parameter equals camera z depth.
    d_cam = np.stack(
        [
            (cols - intrinsics.principal_x) / intrinsics.focal_x,
            (rows - intrinsics.principal_y) / intrinsics.focal_y,
            np.ones_like(cols),
        ],
        axis=-1,
    ).reshape(-1, 3)
    dirs = d_cam @ extrinsics.rotation  # R.T applied row-wise
    origin = extrinsics.camera_center
    t, idx, normal, part_mask = ray_cast(scene, origin, dirs)
    hit = np.isfinite(t)
    depth_vals = np.where(hit, t, 0.0).reshape(h, w)
    depth = DepthImage(width=w, height=h, values=depth_vals, valid=depth_vals > 0)

    all_boxes = scene.boxes + [scene.part]
    palette = np.array([b.color for b in all_boxes] + [BACKGROUND_COLOR.tolist()], dtype=float)
    base = palette[np.where(idx >= 0, idx, len(all_boxes))]
    lambert = np.clip(normal @ _LIGHT_DIR, 0.0, 1.0)
    shade = np.where(hit, _AMBIENT + (1.0 - _AMBIENT) * lambert, 1.0)
    rgb = np.clip(base * shade[:, None], 0, 255).astype(np.uint8).reshape(h, w, 3)
    return RenderResult(rgb=rgb, depth=depth, part_mask=part_mask.reshape(h, w))


def render(scene: Scene, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics):
    """Render the scene; returns (rgb image, depth image)."""
    result = render_full(scene, intrinsics, extrinsics)
    return result.rgb, result.depth


# -- ground-truth collection --------------------------------------------------


def _gt_tangent_sign(tangent: np.ndarray, z_axis: np.ndarray) -> float:
    """Sign convention for the ground-truth y tangent.

    Chosen so x = y cross z tilts upward (non-negative world z); ties fall
    back to non-negative world y, then +1.
    """
    x_axis = np.cross(tangent, z_axis)
    if abs(x_axis[2]) > 1e-9:
        return 1.0 if x_axis[2] > 0 else -1.0
    if abs(x_axis[1]) > 1e-9:
        return 1.0 if x_axis[1] > 0 else -1.0
    return 1.0


def collect_ground_truth(
    scene: Scene,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    rng: np.random.Generator,
    sign: float = 1.0,
    max_attempts: int = 100,
    min_visible_px: int = 30,
    margin: float = 0.55,
    params: ExecParams | None = None,
) -> GroundTruthAction:
    """Sample a verified successful contact pose on the movable part.

    Contacts are drawn on the graspable region, the gripper z-axis is the
    inward surface normal, y follows the region's long edge, and the moving
    direction is the instantaneous motion of the contact under positive joint
    velocity (times ``sign``). Every candidate is verified by simulated
    execution; failures are rejection-sampled.
    """
    result = render_full(scene, intrinsics, extrinsics)
    if int(result.part_mask.sum()) < min_visible_px:
        raise SceneError(f"movable part not visible (< {min_visible_px} px)")
    params = params or ExecParams()
    cam = extrinsics.camera_center
    for attempt in range(max_attempts):
        region = scene.grasp_regions[attempt % len(scene.grasp_regions)]
        a = rng.uniform(-margin, margin)
        b = rng.uniform(-margin, margin)
        p_rest = (
            region.center
            + a * region.half_long * region.tangent_long
            + b * region.half_short * region.tangent_short
        )
        p_world = scene.part_point_to_world(p_rest)
        normal_world = scene.part_dir_to_world(region.normal)
        if float(np.dot(normal_world, p_world - cam)) >= 0:
            continue  # face turned away from the camera
        try:
            px = project(p_world, intrinsics, extrinsics)
        except GeometryError:
            continue
        col, row = int(round(px[0])), int(round(px[1]))
        if not (0 <= col < intrinsics.width and 0 <= row < intrinsics.height):
            continue
        if not result.part_mask[row, col]:
            continue
        z_axis = -normal_world
        tangent = scene.part_dir_to_world(region.tangent_long)
        y_axis = _gt_tangent_sign(tangent, z_axis) * tangent
        free = scene.free_direction(p_world)
        if free is None:
            continue
        move = float(sign) * free
        gt = GroundTruthAction(
            contact_point_3d=p_world,
            z_axis=z_axis,
            y_axis=y_axis,
            move_dir=move,
            part_id=scene.part_id,
        )
        q0 = scene.joint.state
        outcome = execute(scene, gt, params)
        scene.joint.state = q0
        if outcome.success:
            return gt
    raise SceneError(f"no successful ground-truth pose found in {max_attempts} attempts")


# -- quasi-static execution ---------------------------------------------------


def _action_fields(action) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    contact = getattr(action, "contact_3d", None)
    if contact is None:
        contact = getattr(action, "contact_point_3d", None)
    if contact is None:
        raise MalformedActionError("action carries no 3D contact point")
    z = np.asarray(action.z_axis, dtype=float)
    y = np.asarray(action.y_axis, dtype=float)
    if np.linalg.norm(z) < 1e-9 or np.linalg.norm(y) < 1e-9:
        raise MalformedActionError("action has zero-length axes")
    move = getattr(action, "move_dir", None)
    if move is not None:
        move = np.asarray(move, dtype=float)
        if np.linalg.norm(move) < 1e-9:
            raise MalformedActionError("action has a zero-length moving direction")
    return np.asarray(contact, dtype=float), z, y, move


def default_move_distance(scene: Scene, anchor_world: np.ndarray) -> float:
    """Half the joint range expressed as Cartesian travel at the anchor."""
    if scene.joint.kind == "prismatic":
        return 0.5 * scene.joint.range
    return 0.5 * scene.joint.range * max(scene.anchor_radius(anchor_world), 1e-6)


def execute(scene: Scene, action, params: ExecParams | None = None) -> ExecutionResult:
    """Quasi-static execution of a contact-and-move action.

    The gripper starts at a pre-move waypoint offset along its -z axis,
    advances to contact along +z, attaches within the grasp tolerance, and
    translates along the moving direction in small steps. Each step moves the
    joint by the projection of the commanded displacement onto the joint's
    instantaneous free direction; steps with excessive lateral deviation are
    rejected as slip. Success is judged by the fraction of joint range moved.
    """
    params = params or ExecParams()
    contact_cmd, z_raw, y_raw, move = _action_fields(action)
    try:
        rot = rotation_from_zy(z_raw, y_raw)
    except GeometryError as exc:
        raise MalformedActionError(f"action axes do not define a rotation: {exc}") from exc
    z_hat = rot[:, 2]
    pre_pos = contact_cmd - params.pre_move_distance * z_hat
    trajectory = [GripperState(rotation=rot, position=pre_pos, aperture="open")]
    q_start = scene.joint.state

    def result(reason: str | None, rejected: int = 0) -> ExecutionResult:
        displacement = float(abs(scene.joint.state - q_start) / scene.joint.range)
        ok = displacement >= params.success_threshold - 1e-12
        return ExecutionResult(
            success=bool(ok),
            part_displacement=displacement,
            trajectory=trajectory,
            failure_reason=None if ok else reason,
            steps_rejected=rejected,
        )

    max_travel = params.pre_move_distance + params.grasp_distance_tol + params.approach_slack
    t, _, hit_normal, part_hit = ray_cast(scene, pre_pos, z_hat[None, :])
    t0, normal0, on_part = float(t[0]), hit_normal[0], bool(part_hit[0])
    if not np.isfinite(t0) or t0 > max_travel:
        return result("no_contact")
    hit_point = pre_pos + t0 * z_hat
    if float(np.linalg.norm(hit_point - contact_cmd)) > params.grasp_distance_tol:
        return result("collision")
    cos_align = float(np.dot(z_hat, -normal0))
    if cos_align < np.cos(np.radians(params.grasp_angle_tol_deg)):
        return result("slip")

    anchor_rest = scene.world_to_part(hit_point) if on_part else None
    trajectory.append(
        GripperState(rotation=rot, position=hit_point, aperture="closed", attached=anchor_rest)
    )
    if not on_part:
        return result("no_motion")
    if move is None or params.n_steps <= 0:
        return result("no_motion")

    move_hat = move / np.linalg.norm(move)
    anchor_world = hit_point
    d_move = params.move_distance
    if d_move is None:
        d_move = default_move_distance(scene, anchor_world)
    step_len = d_move / params.n_steps
    rejected = 0
    for _ in range(params.n_steps):
        free = scene.free_direction(anchor_world)
        if free is None:
            rejected += 1
            continue
        along = step_len * float(np.dot(move_hat, free))
        lateral = float(np.linalg.norm(step_len * move_hat - along * free))
        if lateral > params.slip_lateral_fraction * step_len:
            rejected += 1
            continue
        if scene.joint.kind == "prismatic":
            dq = along
        else:
            radius = max(scene.anchor_radius(anchor_world), 1e-9)
            dq = along / radius
        scene.joint.state = scene.joint.clamp(scene.joint.state + dq)
        anchor_world = scene.part_point_to_world(anchor_rest)
        trajectory.append(
            GripperState(rotation=rot, position=anchor_world, aperture="closed", attached=anchor_rest)
        )
    return result("slip" if rejected else "no_motion", rejected)
