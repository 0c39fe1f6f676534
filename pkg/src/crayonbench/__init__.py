"""Desk-scale workbench for crayon visual-prompt manipulation.

2D visual prompts (blue contact dot, red/green gripper-axis lines, yellow
moving line) are generated, rasterized, parsed, lifted to SE(3) contact
poses, and executed as key-frame plans in a procedural articulated-object
simulator.
"""

__version__ = "0.1.0"

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    CameraSamplingConfig,
    DepthImage,
    estimate_normal,
    lift,
    project,
    project_direction,
    rotation_from_zy,
    sample_camera_pose,
)
from .objective import LossWeights, discretize, orthogonal_loss, projection_loss, text_loss, total_loss, undiscretize
from .planner import KeyFramePlan, PlanStep, Waypoint, execute_plan, plan_rotate, plan_step
from .predictor import PredictedAction, feasible_family, lift_pose_geometric, predict_toy, train_toy_model
from .prompts import CrayonPrompt, PromptStyle, derive_2d_prompts, extract, format_language, perturb, rasterize
from .scene import (
    ExecParams,
    ExecutionResult,
    GroundTruthAction,
    Scene,
    build_scene,
    collect_ground_truth,
    execute,
    render,
)

__all__ = [
    "__version__",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "CameraSamplingConfig",
    "DepthImage",
    "estimate_normal",
    "lift",
    "project",
    "project_direction",
    "rotation_from_zy",
    "sample_camera_pose",
    "LossWeights",
    "discretize",
    "undiscretize",
    "text_loss",
    "orthogonal_loss",
    "projection_loss",
    "total_loss",
    "KeyFramePlan",
    "PlanStep",
    "Waypoint",
    "plan_step",
    "plan_rotate",
    "execute_plan",
    "PredictedAction",
    "feasible_family",
    "lift_pose_geometric",
    "train_toy_model",
    "predict_toy",
    "CrayonPrompt",
    "PromptStyle",
    "derive_2d_prompts",
    "rasterize",
    "extract",
    "format_language",
    "perturb",
    "Scene",
    "GroundTruthAction",
    "ExecParams",
    "ExecutionResult",
    "build_scene",
    "render",
    "collect_ground_truth",
    "execute",
]
