"""Automatic crayon-prompt generation.

Pipeline: the contact pixel comes from the center of the movable part's 2D
bounding box in the rendered mask, 32 uniformly spaced candidate directions
are sampled around the full circle, and a selector picks the z / y / moving
lines. Selection modes: oracle (nearest candidate to the ground-truth 2D
directions), heuristic (depth normals plus a two-frame joint-motion
estimate), or external (a pluggable client honoring a strict schema).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DegenerateProjectionError,
    DepthImage,
    estimate_normal,
    lift,
    project_direction,
    unit,
)
from .predictor import _depth_near, feasible_family
from .prompts import CrayonPrompt, remedy_degenerate_direction
from .scene import Scene, render_full

N_CANDIDATES = 32


class AutoPromptError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateSet:
    """32 unit 2D directions at exact multiples of 360/32 degrees from +x."""

    center: np.ndarray
    directions: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        d = np.asarray(self.directions, dtype=float)
        if d.shape != (N_CANDIDATES, 2):
            raise AutoPromptError(f"candidate set must hold {N_CANDIDATES} directions")
        object.__setattr__(self, "directions", d)

    def angles_deg(self) -> np.ndarray:
        return np.degrees(np.arctan2(self.directions[:, 1], self.directions[:, 0])) % 360.0


@dataclass(frozen=True)
class SelectorChoice:
    z: int
    y: int
    m: int | None

    def __post_init__(self) -> None:
        for name, idx in (("z", self.z), ("y", self.y), ("m", self.m)):
            if idx is None:
                continue
            if not (0 <= int(idx) < N_CANDIDATES):
                raise AutoPromptError(f"selector index {name}={idx} outside [0, {N_CANDIDATES})")
        if self.z == self.y:
            raise AutoPromptError("selector must pick distinct z and y candidates")


@dataclass
class SelectorContext:
    """Inputs the selector modes may need; populate what the mode uses."""

    gt_prompt: CrayonPrompt | None = None
    scene: Scene | None = None
    intrinsics: CameraIntrinsics | None = None
    extrinsics: CameraExtrinsics | None = None
    depth: DepthImage | None = None
    client: object | None = None  # callable(dict) -> dict for external mode
    image_ref: str = ""
    task: str = ""
    want_move: bool = True


def detect_contact(scene: Scene, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> np.ndarray:
    """Center of the movable part's 2D bounding box in the rendered mask.

    This stands in for an external open-vocabulary detector; per the usual
    caveat the box center may sit off the graspable region, and downstream
    consumers must tolerate that offset.
    """
    mask = render_full(scene, intrinsics, extrinsics).part_mask
    if not np.any(mask):
        raise AutoPromptError("movable part is not visible from this camera")
    rows, cols = np.nonzero(mask)
    return np.array([(cols.min() + cols.max()) / 2.0, (rows.min() + rows.max()) / 2.0])


def sample_candidates(center: np.ndarray) -> CandidateSet:
    """Uniform 2D candidate directions, k-th at angle 2*pi*k/32 from the +x axis."""
    k = np.arange(N_CANDIDATES)
    ang = 2.0 * np.pi * k / N_CANDIDATES
    return CandidateSet(center=center, directions=np.stack([np.cos(ang), np.sin(ang)], axis=-1))


def _nearest(candidates: CandidateSet, target: np.ndarray, exclude: set[int] | None = None) -> int:
    dots = candidates.directions @ unit(np.asarray(target, dtype=float))
    order = np.argsort(-dots)
    for idx in order:
        if exclude is None or int(idx) not in exclude:
            return int(idx)
    raise AutoPromptError("no candidate available")


def _oracle_choice(candidates: CandidateSet, ctx: SelectorContext) -> SelectorChoice:
    gt = ctx.gt_prompt
    if gt is None or gt.z_dir is None or gt.y_dir is None:
        raise AutoPromptError("oracle mode needs a ground-truth prompt with z and y directions")
    z = _nearest(candidates, gt.z_dir)
    y = _nearest(candidates, gt.y_dir, exclude={z})
    m = None
    if ctx.want_move:
        if gt.move_dir is None:
            raise AutoPromptError("oracle mode asked for a moving line but ground truth has none")
        m = _nearest(candidates, gt.move_dir)
    return SelectorChoice(z=z, y=y, m=m)


def _estimate_motion_2d(scene: Scene, intrinsics, extrinsics) -> np.ndarray:
    """2D part-motion estimate from two rendered frames with a joint nudge."""
    q0 = scene.joint.state
    delta = 0.04 * scene.joint.range
    forward = 1.0
    if q0 + delta > scene.joint.limits[1]:
        forward = -1.0
    mask0 = render_full(scene, intrinsics, extrinsics).part_mask
    scene.joint.state = scene.joint.clamp(q0 + forward * delta)
    mask1 = render_full(scene, intrinsics, extrinsics).part_mask
    scene.joint.state = q0
    if not np.any(mask0) or not np.any(mask1):
        raise AutoPromptError("part mask vanished while estimating joint motion")

    def centroid(mask):
        rows, cols = np.nonzero(mask)
        return np.array([cols.mean(), rows.mean()])

    motion = forward * (centroid(mask1) - centroid(mask0))
    n = float(np.linalg.norm(motion))
    if n < 1e-6:
        raise AutoPromptError("joint nudge produced no visible motion")
    return motion / n


def _heuristic_choice(candidates: CandidateSet, ctx: SelectorContext) -> SelectorChoice:
    if ctx.scene is None or ctx.depth is None or ctx.intrinsics is None or ctx.extrinsics is None:
        raise AutoPromptError("heuristic mode needs scene, depth, and camera context")
    center = candidates.center
    contact = lift(center, _depth_near(ctx.depth, center, 3), ctx.intrinsics, ctx.extrinsics)
    normal = estimate_normal(ctx.depth, center, ctx.intrinsics, ctx.extrinsics, window=5)
    try:
        z2d = project_direction(contact, -normal, ctx.intrinsics, ctx.extrinsics)
    except DegenerateProjectionError:
        z2d, _ = remedy_degenerate_direction(contact, -normal, ctx.intrinsics, ctx.extrinsics)
    z = _nearest(candidates, z2d)

    z3d = feasible_family(candidates.directions[z], center, ctx.intrinsics, ctx.extrinsics).project_onto(-normal)
    scores = []
    for idx in range(N_CANDIDATES):
        if idx == z:
            scores.append(np.inf)
            continue
        fam = feasible_family(candidates.directions[idx], center, ctx.intrinsics, ctx.extrinsics)
        scores.append(abs(float(np.dot(z3d, fam.basis_inplane))))
    y = int(np.argmin(scores))

    m = None
    if ctx.want_move:
        motion = _estimate_motion_2d(ctx.scene, ctx.intrinsics, ctx.extrinsics)
        m = _nearest(candidates, motion)
    return SelectorChoice(z=z, y=y, m=m)


def _external_choice(candidates: CandidateSet, ctx: SelectorContext) -> SelectorChoice:
    if ctx.client is None:
        raise AutoPromptError("external mode needs a selector client")
    request = {
        "record": "selector_request",
        "image_ref": ctx.image_ref,
        "task": ctx.task,
        "candidate_angles_deg": [float(a) for a in candidates.angles_deg()],
        "want_move": bool(ctx.want_move),
    }
    try:
        response = ctx.client(request)
    except Exception as exc:
        raise AutoPromptError(f"external selector failed: {exc}") from exc
    if not isinstance(response, dict):
        raise AutoPromptError("external selector reply is not a record")

    def index(key, required):
        value = response.get(key)
        if value is None:
            if required:
                raise AutoPromptError(f"external selector reply missing {key!r}")
            return None
        if not isinstance(value, int) or isinstance(value, bool):
            raise AutoPromptError(f"external selector field {key!r} must be an integer")
        return int(np.clip(value, 0, N_CANDIDATES - 1))

    z = index("z", required=True)
    y = index("y", required=True)
    m = index("m", required=ctx.want_move)
    return SelectorChoice(z=z, y=y, m=m)


def select(candidates: CandidateSet, mode: str, context: SelectorContext) -> SelectorChoice:
    """Pick z / y / moving lines from the candidate set."""
    if mode == "oracle":
        return _oracle_choice(candidates, context)
    if mode == "heuristic":
        return _heuristic_choice(candidates, context)
    if mode == "external":
        return _external_choice(candidates, context)
    raise AutoPromptError(f"unknown selector mode {mode!r}")


def auto_prompt(
    scene: Scene,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    mode: str,
    context: SelectorContext,
) -> CrayonPrompt:
    """Full automatic pipeline: detect, sample candidates, select, build prompt."""
    center = detect_contact(scene, intrinsics, extrinsics)
    candidates = sample_candidates(center)
    choice = select(candidates, mode, context)
    dirs = candidates.directions
    return CrayonPrompt(
        contact_px=center,
        pattern="PZYM" if choice.m is not None else "PZY",
        z_dir=dirs[choice.z],
        y_dir=dirs[choice.y],
        move_dir=None if choice.m is None else dirs[choice.m],
    )
