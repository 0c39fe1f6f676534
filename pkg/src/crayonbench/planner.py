"""Key-frame planning: waypoints, primitives, wrist rotation, and sequencing.

Predicted actions become executable waypoint plans: a pre-move approach
offset along the gripper -z axis, the contact pose built from the z/y pair,
and post-contact translation along the moving direction for the primitives
that need one. Rotate tasks use two key-frames differing only by a wrist
angle. Long-horizon tasks execute key-frame steps sequentially; overall
success is the exact conjunction of step successes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import rotation_from_zy, unit  # rotation_from_zy is this module's public op
from .prompts import CrayonPrompt
from .scene import ExecParams, ExecutionResult, Scene, execute

PRIMITIVES = ("pick", "place", "push", "pull", "move", "rotate")

_REQUIRES_MOVE = {"pick": True, "push": True, "pull": True, "place": False, "move": False, "rotate": False}

PHASES = ("pre_move", "contact", "post_move")

__all__ = [
    "PRIMITIVES",
    "PHASES",
    "PlanError",
    "Waypoint",
    "PlanStep",
    "KeyFramePlan",
    "PlanParams",
    "PlanExecution",
    "requires_move_prompt",
    "rotation_from_zy",
    "plan_step",
    "plan_rotate",
    "execute_plan",
]


class PlanError(ValueError):
    pass


def requires_move_prompt(primitive: str) -> bool:
    if primitive not in _REQUIRES_MOVE:
        raise PlanError(f"unknown primitive {primitive!r}")
    return _REQUIRES_MOVE[primitive]


@dataclass
class Waypoint:
    rotation: np.ndarray
    position: np.ndarray
    aperture: str  # open | closed
    phase: str  # pre_move | contact | post_move


@dataclass
class PlanStep:
    prompt: object  # CrayonPrompt, or callable(scene, intrinsics, extrinsics) -> CrayonPrompt
    primitive: str
    aperture: str = "closed"  # gripper directive at contact

    def __post_init__(self) -> None:
        if self.primitive not in PRIMITIVES:
            raise PlanError(f"unknown primitive {self.primitive!r}")


@dataclass
class KeyFramePlan:
    steps: list[PlanStep]

    def __post_init__(self) -> None:
        if not self.steps:
            raise PlanError("a key-frame plan needs at least one step")

    def to_record(self) -> dict:
        rows = []
        for step in self.steps:
            if not isinstance(step.prompt, CrayonPrompt):
                raise PlanError("only resolved plans (static prompts) serialize")
            rows.append(
                {
                    "prompt": step.prompt.to_record(),
                    "primitive": step.primitive,
                    "aperture": step.aperture,
                }
            )
        return {"steps": rows}

    @staticmethod
    def from_record(rec: dict) -> "KeyFramePlan":
        return KeyFramePlan(
            steps=[
                PlanStep(
                    prompt=CrayonPrompt.from_record(r["prompt"]),
                    primitive=r["primitive"],
                    aperture=r.get("aperture", "closed"),
                )
                for r in rec["steps"]
            ]
        )


@dataclass
class PlanParams:
    pre_move_distance: float = 0.15
    move_distance: float = 0.5
    n_post: int = 10
    rotate_steps: int = 10
    rotate_contact_tol: float = 0.02
    rotate_axis_tol_deg: float = 5.0


def _contact_of(action) -> np.ndarray:
    contact = getattr(action, "contact_3d", None)
    if contact is None:
        contact = getattr(action, "contact_point_3d", None)
    if contact is None:
        raise PlanError("action carries no 3D contact")
    return np.asarray(contact, dtype=float)


_APERTURES = {
    "pick": ("open", "closed"),
    "pull": ("open", "closed"),
    "push": ("open", "closed"),
    "place": ("closed", "open"),
    "move": ("closed", "closed"),
}


def plan_step(action, primitive: str, params: PlanParams | None = None) -> list[Waypoint]:
    """Waypoints for one key-frame: pre-move, contact, then post-contact motion.

    Move-requiring primitives (pick, push, pull) append ``n_post`` waypoints
    along the moving direction; place and move end at the contact pose.
    """
    params = params or PlanParams()
    if primitive == "rotate":
        raise PlanError("rotate plans come from plan_rotate with two key-frames")
    needs_move = requires_move_prompt(primitive)
    move = getattr(action, "move_dir", None)
    if needs_move and move is None:
        raise PlanError(f"primitive {primitive!r} requires a moving direction")
    rot = rotation_from_zy(action.z_axis, action.y_axis)
    z_hat = rot[:, 2]
    contact = _contact_of(action)
    pre_aperture, contact_aperture = _APERTURES[primitive]
    waypoints = [
        Waypoint(rotation=rot, position=contact - params.pre_move_distance * z_hat, aperture=pre_aperture, phase="pre_move"),
        Waypoint(rotation=rot, position=contact.copy(), aperture=contact_aperture, phase="contact"),
    ]
    if needs_move:
        m_hat = unit(move)
        for k in range(1, params.n_post + 1):
            pos = contact + (k / params.n_post) * params.move_distance * m_hat
            waypoints.append(Waypoint(rotation=rot, position=pos, aperture=contact_aperture, phase="post_move"))
    return waypoints


def rotation_angle_about_axis(r_rel: np.ndarray, axis: np.ndarray) -> float:
    """Signed rotation angle of r_rel about a unit axis (rotation-log based)."""
    cos_a = (float(np.trace(r_rel)) - 1.0) / 2.0
    angle = float(np.arccos(np.clip(cos_a, -1.0, 1.0)))
    if angle < 1e-12:
        return 0.0
    vec = np.array(
        [r_rel[2, 1] - r_rel[1, 2], r_rel[0, 2] - r_rel[2, 0], r_rel[1, 0] - r_rel[0, 1]]
    ) / (2.0 * np.sin(angle))
    return angle * float(np.sign(np.dot(vec, axis)) or 1.0)


def plan_rotate(action_a, action_b, params: PlanParams | None = None) -> list[Waypoint]:
    """Two-key-frame wrist rotation: approach with pose a, spin in place to pose b.

    The two actions must share the contact point and differ by a rotation
    about the common gripper z-axis; translation beyond tolerance is an error.
    """
    params = params or PlanParams()
    rot_a = rotation_from_zy(action_a.z_axis, action_a.y_axis)
    rot_b = rotation_from_zy(action_b.z_axis, action_b.y_axis)
    contact_a = _contact_of(action_a)
    contact_b = _contact_of(action_b)
    if float(np.linalg.norm(contact_a - contact_b)) > params.rotate_contact_tol:
        raise PlanError("rotate key-frames imply a translation beyond tolerance")
    z_a = rot_a[:, 2]
    r_rel = rot_b @ rot_a.T
    angle = rotation_angle_about_axis(r_rel, z_a)
    # Verify r_rel really is a rotation about the shared z axis.
    check = _axis_angle_matrix(z_a, angle)
    residual = np.degrees(_rotation_distance(check, r_rel))
    if residual > params.rotate_axis_tol_deg:
        raise PlanError(
            f"key-frame rotation is {residual:.2f} degrees away from a pure wrist rotation"
        )
    waypoints = [
        Waypoint(rotation=rot_a, position=contact_a - params.pre_move_distance * z_a, aperture="open", phase="pre_move"),
        Waypoint(rotation=rot_a, position=contact_a.copy(), aperture="closed", phase="contact"),
    ]
    for k in range(1, params.rotate_steps + 1):
        partial = _axis_angle_matrix(z_a, angle * k / params.rotate_steps) @ rot_a
        waypoints.append(Waypoint(rotation=partial, position=contact_a.copy(), aperture="closed", phase="post_move"))
    return waypoints


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    a = unit(axis)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _rotation_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    cos_a = (float(np.trace(r1.T @ r2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos_a, -1.0, 1.0)))


@dataclass
class PlanExecution:
    step_results: list[ExecutionResult]
    resolved_prompts: list[CrayonPrompt]
    actions: list
    overall_success: bool
    aborted_at: int | None = None


def execute_plan(
    scene: Scene,
    plan: KeyFramePlan,
    predictor,
    intrinsics,
    extrinsics,
    exec_params: ExecParams | None = None,
) -> PlanExecution:
    """Run the key-frame steps sequentially on one scene.

    ``predictor`` maps (prompt, scene, intrinsics, extrinsics) to a predicted
    action. Plan prompts may be callables resolved against the current scene
    state, which is how observe-then-draw workflows feed the next key-frame.
    Execution aborts at the first failed step; overall success is the exact
    conjunction of step successes.
    """
    results: list[ExecutionResult] = []
    resolved: list[CrayonPrompt] = []
    actions = []
    aborted = None
    for index, step in enumerate(plan.steps):
        prompt = step.prompt
        if callable(prompt):
            prompt = prompt(scene, intrinsics, extrinsics)
        if not isinstance(prompt, CrayonPrompt):
            raise PlanError(f"step {index} did not resolve to a crayon prompt")
        resolved.append(prompt)
        try:
            action = predictor(prompt, scene, intrinsics, extrinsics)
        except Exception as exc:
            raise PlanError(f"prediction failed at step {index}: {exc}") from exc
        actions.append(action)
        if requires_move_prompt(step.primitive) and getattr(action, "move_dir", None) is None:
            raise PlanError(f"step {index} ({step.primitive}) needs a moving direction")
        outcome = execute(scene, action, exec_params)
        results.append(outcome)
        if not outcome.success:
            aborted = index
            break
    overall = len(results) == len(plan.steps) and all(r.success for r in results)
    return PlanExecution(
        step_results=results,
        resolved_prompts=resolved,
        actions=actions,
        overall_success=overall,
        aborted_at=aborted,
    )
