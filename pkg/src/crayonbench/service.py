"""Session-oriented HTTP service driving the workbench.

Turn-based workflow: create a session (deterministic scene plus camera from
the seed), fetch the frame, submit a crayon prompt for a preview, execute,
observe the new frame, repeat. Sessions are independent; requests within a
session serialize on a per-session lock. Every response carries the
session's config fingerprint, and histories replay exactly through the CLI.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response

from .autoprompt import AutoPromptError, SelectorContext, auto_prompt
from .geometry import CameraExtrinsics, CameraIntrinsics, CameraSamplingConfig, sample_camera_pose
from .harness import make_plan_predictor
from .planner import PRIMITIVES, PlanParams, plan_step, requires_move_prompt
from .predictor import ToyModelParams
from .prompts import CrayonPrompt, derive_2d_prompts
from .records import fingerprint, png_bytes, ppm_bytes
from .scene import (
    SCENE_KINDS,
    ExecParams,
    build_scene,
    collect_ground_truth,
    default_move_distance,
    execute,
    render_full,
)

# Stream tag for the session camera draw; replay derives the same pose.
SESSION_CAMERA_STREAM = 101
_SESSION_GT_STREAM = 113


@dataclass
class SessionState:
    session_id: str
    kind: str
    seed: int
    scene: object
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    predictor: str
    config_fingerprint: str
    frame: object = None
    pending: dict | None = None
    history: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def key_frame_index(self) -> int:
        return len(self.history)


def session_camera(seed: int, scene_target) -> CameraExtrinsics:
    rng = np.random.default_rng([seed, SESSION_CAMERA_STREAM])
    return sample_camera_pose(rng, CameraSamplingConfig(), scene_target)


def _error(status: int, code: str, detail: str, fields: dict | None = None) -> JSONResponse:
    body = {"code": code, "detail": detail}
    if fields:
        body["fields"] = fields
    return JSONResponse(status_code=status, content=body)


def _validate_prompt_record(record, width: int, height: int) -> tuple[CrayonPrompt | None, dict]:
    """Field-by-field validation so clients get actionable errors."""
    fields: dict[str, str] = {}
    if not isinstance(record, dict):
        return None, {"prompt": "must be a structured record"}
    contact = record.get("contact")
    if not (isinstance(contact, (list, tuple)) and len(contact) == 2):
        fields["contact"] = "must be a pair of pixel coordinates"
    else:
        u, v = float(contact[0]), float(contact[1])
        if not (0 <= u < width and 0 <= v < height):
            fields["contact"] = f"({u:.1f}, {v:.1f}) outside the {width}x{height} frame"
    pattern = record.get("pattern")
    if pattern not in ("P", "PZ", "PZY", "PZYM"):
        fields["pattern"] = "must be one of P, PZ, PZY, PZYM"
    for name in ("z", "y", "m"):
        value = record.get(name)
        if value is None:
            continue
        if not (isinstance(value, (list, tuple)) and len(value) == 2):
            fields[name] = "must be a 2D vector"
            continue
        norm = float(np.hypot(float(value[0]), float(value[1])))
        if abs(norm - 1.0) > 1e-6:
            fields[name] = f"must be unit norm (got {norm:.6f})"
    if fields:
        return None, fields
    try:
        return CrayonPrompt.from_record(record), {}
    except Exception as exc:
        return None, {"prompt": str(exc)}


def _action_dict(action) -> dict:
    move = getattr(action, "move_dir", None)
    return {
        "contact_px": [float(v) for v in action.contact_px_pred],
        "contact_3d": [float(v) for v in action.contact_3d],
        "z_axis": [float(v) for v in action.z_axis],
        "y_axis": [float(v) for v in action.y_axis],
        "move_dir": None if move is None else [float(v) for v in move],
        "provenance": action.provenance,
    }


def _waypoint_dicts(waypoints) -> list[dict]:
    return [
        {
            "rotation": [[float(v) for v in row] for row in w.rotation],
            "position": [float(v) for v in w.position],
            "aperture": w.aperture,
            "phase": w.phase,
        }
        for w in waypoints
    ]


def _result_dict(result) -> dict:
    return {
        "success": bool(result.success),
        "part_displacement": float(result.part_displacement),
        "failure_reason": result.failure_reason,
        "steps_rejected": int(result.steps_rejected),
        "n_waypoints": len(result.trajectory),
    }


def create_app(
    predictor: str = "solver",
    toy_params: ToyModelParams | None = None,
    selector_client=None,
    image_size: int = 336,
    focal: float = 450.0,
) -> FastAPI:
    """Build the service app. Sessions live for the process lifetime."""
    app = FastAPI(title="crayonbench service")
    sessions: dict[str, SessionState] = {}
    half = image_size / 2.0
    intrinsics = CameraIntrinsics(focal, focal, half, half, image_size, image_size)
    predict = make_plan_predictor(predictor, intrinsics, toy_params)
    base_config = {
        "predictor": predictor,
        "image_size": image_size,
        "focal": focal,
    }

    def get_session(session_id: str) -> SessionState | None:
        return sessions.get(session_id)

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/session")
    def create_session(body: dict):
        kind = body.get("kind")
        if kind not in SCENE_KINDS:
            return _error(400, "unknown_kind", f"kind must be one of {list(SCENE_KINDS)}")
        try:
            seed = int(body.get("seed", 0))
        except (TypeError, ValueError):
            return _error(400, "invalid_seed", "seed must be an integer")
        scene = build_scene(kind, seed)
        extrinsics = session_camera(seed, scene.target)
        state = SessionState(
            session_id=uuid.uuid4().hex[:12],
            kind=kind,
            seed=seed,
            scene=scene,
            intrinsics=intrinsics,
            extrinsics=extrinsics,
            predictor=predictor,
            config_fingerprint=fingerprint({**base_config, "kind": kind, "seed": seed}),
        )
        state.frame = render_full(scene, intrinsics, extrinsics)
        sessions[state.session_id] = state
        return {
            "session_id": state.session_id,
            "fingerprint": state.config_fingerprint,
            "kind": kind,
            "seed": seed,
            "width": image_size,
            "height": image_size,
            "camera": {
                "intrinsics": intrinsics.to_dict(),
                "extrinsics": extrinsics.to_dict(),
            },
            "frame_ref": f"/session/{state.session_id}/frame",
            "depth_ref": f"/session/{state.session_id}/depth",
            "key_frame_index": 0,
        }

    @app.get("/session/{session_id}/frame")
    def get_frame(session_id: str, format: str = "png"):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        with state.lock:
            rgb = state.frame.rgb
            if format == "ppm":
                return Response(content=ppm_bytes(rgb), media_type="image/x-portable-pixmap")
            if format == "png":
                return Response(content=png_bytes(rgb), media_type="image/png")
        return _error(400, "unknown_format", "format must be png or ppm")

    @app.get("/session/{session_id}/depth")
    def get_depth(session_id: str):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        with state.lock:
            return Response(content=state.frame.depth.to_bytes(), media_type="application/octet-stream")

    @app.post("/session/{session_id}/prompt")
    def submit_prompt(session_id: str, body: dict):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        primitive = body.get("primitive", "pull")
        if primitive not in PRIMITIVES:
            return _error(400, "unknown_primitive", f"primitive must be one of {list(PRIMITIVES)}")
        prompt, fields = _validate_prompt_record(body.get("prompt"), state.intrinsics.width, state.intrinsics.height)
        if prompt is None:
            return _error(400, "invalid_prompt", "prompt record failed validation", fields)
        if requires_move_prompt(primitive) and prompt.move_dir is None:
            return _error(
                400,
                "invalid_prompt",
                "this primitive needs a moving direction",
                {"m": f"primitive {primitive!r} requires the yellow moving line"},
            )
        with state.lock:
            try:
                action = predict(prompt, state.scene, state.intrinsics, state.extrinsics)
            except Exception as exc:
                return _error(422, "prediction_failed", str(exc))
            move_distance = default_move_distance(state.scene, action.contact_3d)
            try:
                waypoints = plan_step(
                    action,
                    primitive if primitive != "rotate" else "move",
                    PlanParams(move_distance=move_distance),
                )
            except Exception as exc:
                return _error(422, "planning_failed", str(exc))
            state.pending = {
                "prompt": prompt,
                "prompt_record": prompt.to_record(),
                "primitive": primitive,
                "action": action,
            }
            return {
                "fingerprint": state.config_fingerprint,
                "key_frame_index": state.key_frame_index,
                "action": _action_dict(action),
                "waypoints": _waypoint_dicts(waypoints),
            }

    @app.post("/session/{session_id}/execute")
    def execute_step(session_id: str):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        with state.lock:
            if state.pending is None:
                return _error(409, "no_pending_action", "submit a prompt before executing")
            pending = state.pending
            state.pending = None
            result = execute(state.scene, pending["action"], ExecParams())
            state.frame = render_full(state.scene, state.intrinsics, state.extrinsics)
            state.history.append(
                {
                    "prompt": pending["prompt_record"],
                    "primitive": pending["primitive"],
                    "action": _action_dict(pending["action"]),
                    "result": _result_dict(result),
                    "joint_state_after": float(state.scene.joint.state),
                }
            )
            return {
                "fingerprint": state.config_fingerprint,
                "key_frame_index": state.key_frame_index,
                "result": _result_dict(result),
                "frame_ref": f"/session/{session_id}/frame",
                "depth_ref": f"/session/{session_id}/depth",
            }

    @app.post("/session/{session_id}/autoprompt")
    def autoprompt_step(session_id: str, body: dict | None = None):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        body = body or {}
        mode = body.get("mode", "heuristic")
        with state.lock:
            ctx = SelectorContext(
                scene=state.scene,
                intrinsics=state.intrinsics,
                extrinsics=state.extrinsics,
                depth=state.frame.depth,
                client=selector_client,
                image_ref=f"/session/{session_id}/frame",
                task=f"{state.kind}:{state.scene.primitive}",
                want_move=True,
            )
            if mode == "oracle":
                rng = np.random.default_rng([state.seed, _SESSION_GT_STREAM, state.key_frame_index])
                try:
                    gt = collect_ground_truth(state.scene, state.intrinsics, state.extrinsics, rng)
                    ctx.gt_prompt = derive_2d_prompts(gt, state.intrinsics, state.extrinsics)
                except Exception as exc:
                    return _error(422, "autoprompt_failed", str(exc))
            try:
                prompt = auto_prompt(state.scene, state.intrinsics, state.extrinsics, mode, ctx)
            except AutoPromptError as exc:
                return _error(422, "autoprompt_failed", str(exc))
            return {"fingerprint": state.config_fingerprint, "prompt": prompt.to_record()}

    @app.get("/session/{session_id}/history")
    def get_history(session_id: str):
        state = get_session(session_id)
        if state is None:
            return _error(404, "unknown_session", session_id)
        with state.lock:
            return {
                "record": "session_history",
                "fingerprint": state.config_fingerprint,
                "kind": state.kind,
                "seed": state.seed,
                "predictor": state.predictor,
                "camera": {
                    "intrinsics": state.intrinsics.to_dict(),
                    "extrinsics": state.extrinsics.to_dict(),
                },
                "steps": list(state.history),
                "final_joint_state": float(state.scene.joint.state),
            }

    return app


def replay_history(history: dict, toy_params: ToyModelParams | None = None) -> dict:
    """Re-run a session history from its seed and compare final scene state.

    Rebuilds the scene, replays every stored prompt through the same
    predictor, and reports whether the final joint state matches exactly.
    """
    if history.get("record") != "session_history":
        raise ValueError("not a session history record")
    scene = build_scene(history["kind"], int(history["seed"]))
    intr = CameraIntrinsics.from_dict(history["camera"]["intrinsics"])
    extr = CameraExtrinsics.from_dict(history["camera"]["extrinsics"])
    predict = make_plan_predictor(history.get("predictor", "solver"), intr, toy_params)
    steps = []
    for step in history["steps"]:
        prompt = CrayonPrompt.from_record(step["prompt"])
        action = predict(prompt, scene, intr, extr)
        result = execute(scene, action, ExecParams())
        steps.append(
            {
                "success": bool(result.success),
                "joint_state_after": float(scene.joint.state),
                "recorded_joint_state": float(step["joint_state_after"]),
                "match": abs(float(scene.joint.state) - float(step["joint_state_after"])) < 1e-12,
            }
        )
    final = float(scene.joint.state)
    recorded = float(history.get("final_joint_state", final))
    return {
        "record": "replay_result",
        "steps": steps,
        "final_joint_state": final,
        "recorded_final_joint_state": recorded,
        "match": bool(abs(final - recorded) < 1e-12 and all(s["match"] for s in steps)),
    }
