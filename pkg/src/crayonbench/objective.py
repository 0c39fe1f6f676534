"""Pose-prediction objective: bin discretization and the three training losses.

The objective combines a classification loss over discretized direction
components, an orthogonality penalty between the gripper z and y axes, and
a reprojection loss tying predicted 3D directions back to their 2D prompt
directions. The weighted total and analytic gradients (with a central
finite-difference checker) drive both the geometric lifting solver and the
toy trainable predictor.

Direction components are ordered (z, y, m) x (x, y, z), giving 9 logit rows
of 101 classes each.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DegenerateProjectionError,
    DIRECTION_STEP_FRACTION,
    GeometryError,
    lift,
    project,
    projection_jacobian,
    unit,
)

BIN_WIDTH = 0.02
BIN_MIN = -50
BIN_MAX = 50
N_BINS = BIN_MAX - BIN_MIN + 1  # 101 integer labels at 0.02 spacing over [-1, 1]

BIN_CENTERS = BIN_WIDTH * np.arange(BIN_MIN, BIN_MAX + 1, dtype=float)

COMPONENT_NAMES = tuple(f"{d}_{c}" for d in ("z", "y", "m") for c in ("x", "y", "z"))

# Guard for reprojection lengths during optimization; below this the term is
# treated as degenerate and flagged rather than silently differentiated.
_MIN_PROJ_NORM = 1e-9


class ObjectiveError(ValueError):
    pass


def discretize(v: float) -> int:
    """Map a normalized component in [-1, 1] to its integer bin label.

    Ties round toward +infinity. Values overshooting [-1, 1] by more than
    1e-9 are rejected; smaller overshoots are clamped.
    """
    v = float(v)
    if abs(v) > 1.0 + 1e-9:
        raise ObjectiveError(f"component {v!r} outside [-1, 1]")
    b = int(math.floor(v / BIN_WIDTH + 0.5))
    return max(BIN_MIN, min(BIN_MAX, b))


def undiscretize(b: int) -> float:
    """Center value of a bin label."""
    if not (BIN_MIN <= b <= BIN_MAX):
        raise ObjectiveError(f"bin {b!r} outside [{BIN_MIN}, {BIN_MAX}]")
    return BIN_WIDTH * b


def quantize(v: float) -> float:
    """Round a component to the bin grid (undiscretize of discretize)."""
    return undiscretize(discretize(v))


@dataclass(frozen=True)
class LossWeights:
    """Weights (lambda_1, lambda_2, lambda_3) for text, orthogonality, projection."""

    l_text: float = 1.0
    l_ortho: float = 1.0
    l_proj: float = 1.0

    def __post_init__(self) -> None:
        if min(self.l_text, self.l_ortho, self.l_proj) < 0:
            raise ObjectiveError("loss weights must be non-negative")
        if self.l_text == self.l_ortho == self.l_proj == 0:
            raise ObjectiveError("at least one loss weight must be positive")

    def to_dict(self) -> dict:
        return {"l_text": self.l_text, "l_ortho": self.l_ortho, "l_proj": self.l_proj}


@dataclass
class LossBreakdown:
    l_text: float
    l_ortho: float
    l_proj: float
    total: float
    active: tuple[str, ...]
    notes: dict = field(default_factory=dict)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def gt_component_values(gt_action) -> np.ndarray:
    """Direction components of a ground-truth action in logit-row order.

    Accepts any object with z_axis, y_axis and optional move_dir attributes.
    Missing move_dir yields NaN rows (masked out by the caller).
    """
    move = getattr(gt_action, "move_dir", None)
    rows = [np.asarray(gt_action.z_axis, dtype=float), np.asarray(gt_action.y_axis, dtype=float)]
    rows.append(np.full(3, np.nan) if move is None else np.asarray(move, dtype=float))
    return np.concatenate(rows)


def default_active_mask(gt_action) -> np.ndarray:
    mask = np.ones(9, dtype=bool)
    if getattr(gt_action, "move_dir", None) is None:
        mask[6:] = False
    return mask


def text_loss(logits: np.ndarray, gt_action, active: np.ndarray | None = None) -> float:
    """Mean cross-entropy between per-component logits and ground-truth bins."""
    logits = np.asarray(logits, dtype=float)
    if logits.shape != (9, N_BINS):
        raise ObjectiveError(f"logits must be (9, {N_BINS}), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ObjectiveError("logits must be finite")
    if active is None:
        active = default_active_mask(gt_action)
    values = gt_component_values(gt_action)
    logp = log_softmax(logits)
    total = 0.0
    count = 0
    for i in range(9):
        if not active[i]:
            continue
        total -= logp[i, discretize(values[i]) - BIN_MIN]
        count += 1
    if count == 0:
        raise ObjectiveError("no active components for the text loss")
    return total / count


def text_loss_grad(logits: np.ndarray, gt_action, active: np.ndarray | None = None) -> np.ndarray:
    """Gradient of text_loss with respect to the logits: (softmax - onehot) / n."""
    logits = np.asarray(logits, dtype=float)
    if active is None:
        active = default_active_mask(gt_action)
    values = gt_component_values(gt_action)
    probs = softmax(logits)
    grad = np.zeros_like(logits)
    count = int(np.sum(active))
    for i in range(9):
        if not active[i]:
            continue
        grad[i] = probs[i]
        grad[i, discretize(values[i]) - BIN_MIN] -= 1.0
    return grad / count


def orthogonal_loss(z: np.ndarray, y: np.ndarray) -> float:
    """Squared normalized dot product between the z and y axes.

    Zero exactly when the pair is orthogonal, one when parallel.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    nz, ny = np.linalg.norm(z), np.linalg.norm(y)
    if nz < 1e-9 or ny < 1e-9:
        raise ObjectiveError("orthogonal loss needs non-zero vectors")
    c = float(np.dot(z, y) / (nz * ny))
    return c * c


def orthogonal_loss_grad(z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of orthogonal_loss with respect to the raw inputs."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    nz, ny = np.linalg.norm(z), np.linalg.norm(y)
    if nz < 1e-9 or ny < 1e-9:
        raise ObjectiveError("orthogonal loss needs non-zero vectors")
    u, w = z / nz, y / ny
    c = float(np.dot(u, w))
    dz = 2.0 * c * (w - c * u) / nz
    dy = 2.0 * c * (u - c * w) / ny
    return dz, dy


def cosine_term(u2: np.ndarray, g2: np.ndarray) -> float:
    """One reprojection term: 1 - cos(angle between a 2D pair)."""
    nu, ng = np.linalg.norm(u2), np.linalg.norm(g2)
    if nu < _MIN_PROJ_NORM or ng < _MIN_PROJ_NORM:
        raise ObjectiveError("cosine term needs non-zero 2D vectors")
    return 1.0 - float(np.dot(u2, g2) / (nu * ng))


def _resolve_contact(action, prompt, depth, intrinsics, extrinsics) -> np.ndarray:
    contact = getattr(action, "contact_3d", None)
    if contact is None:
        contact = getattr(action, "contact_point_3d", None)
    if contact is not None:
        return np.asarray(contact, dtype=float)
    if depth is None:
        raise ObjectiveError("action has no 3D contact and no depth was provided")
    return lift(prompt.contact_px, depth.at(prompt.contact_px), intrinsics, extrinsics)


def projection_loss_terms(
    action,
    prompt,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    depth=None,
    step: float | None = None,
) -> tuple[dict[str, float], list[str]]:
    """Per-direction reprojection terms plus the list of remedied directions.

    Directions absent from the prompt pattern are excluded. A predicted
    direction whose reprojection is degenerate gets the same small-rotation
    remedy the prompt codec applies, and is reported in the second element.
    """
    from .prompts import remedy_degenerate_direction  # local import to avoid a cycle

    origin = _resolve_contact(action, prompt, depth, intrinsics, extrinsics)
    pairs = {
        "z": (action.z_axis, prompt.z_dir),
        "y": (action.y_axis, prompt.y_dir),
        "m": (getattr(action, "move_dir", None), prompt.move_dir),
    }
    terms: dict[str, float] = {}
    remedied: list[str] = []
    for name, (dir3, dir2) in pairs.items():
        if dir2 is None:
            continue
        if dir3 is None:
            raise ObjectiveError(f"prompt includes {name!r} but the action lacks that direction")
        try:
            reproj, _, _ = _project_direction_with_grad(origin, np.asarray(dir3, float), intrinsics, extrinsics, step)
        except DegenerateProjectionError:
            reproj, _ = remedy_degenerate_direction(origin, np.asarray(dir3, float), intrinsics, extrinsics, step=step)
            remedied.append(name)
        terms[name] = cosine_term(reproj, np.asarray(dir2, dtype=float))
    return terms, remedied


def projection_loss(
    action,
    prompt,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    depth=None,
    step: float | None = None,
) -> float:
    """Sum of (1 - cosine similarity) between reprojected and prompted 2D directions."""
    terms, _ = projection_loss_terms(action, prompt, intrinsics, extrinsics, depth, step)
    return float(sum(terms.values()))


def total_loss(
    parts: dict[str, float],
    weights: LossWeights,
    active: tuple[str, ...] = ("text", "ortho", "proj"),
    notes: dict | None = None,
) -> LossBreakdown:
    """Weighted sum of the loss parts over the active-term mask."""
    get = lambda k: float(parts.get(k, 0.0)) if k in active else 0.0
    l_text, l_ortho, l_proj = get("text"), get("ortho"), get("proj")
    total = weights.l_text * l_text + weights.l_ortho * l_ortho + weights.l_proj * l_proj
    return LossBreakdown(
        l_text=l_text,
        l_ortho=l_ortho,
        l_proj=l_proj,
        total=total,
        active=tuple(active),
        notes=dict(notes or {}),
    )


def _project_direction_with_grad(
    origin: np.ndarray,
    raw_dir: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    step: float | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Finite-step direction projection plus the pieces needed for its gradient.

    Returns (unit 2D projection, 2x3 d(raw 2D delta)/d(unit 3D dir), delta norm).
    """
    o = np.asarray(origin, dtype=float)
    d = unit(raw_dir)
    if step is None:
        step = DIRECTION_STEP_FRACTION * float(np.linalg.norm(o - extrinsics.camera_center))
    p0 = project(o, intrinsics, extrinsics)
    p1 = project(o + step * d, intrinsics, extrinsics)
    delta = p1 - p0
    n = float(np.linalg.norm(delta))
    if n < 0.5:  # matches geometry.DEGENERATE_PIXEL_EPS
        raise DegenerateProjectionError(f"reprojection of direction is degenerate ({n:.3f} px)")
    jac = projection_jacobian(o + step * d, intrinsics, extrinsics) * step
    return delta / n, jac, n


def projection_term_grad(
    origin: np.ndarray,
    raw_dir: np.ndarray,
    goal_2d: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    step: float | None = None,
) -> tuple[float, np.ndarray]:
    """Value and analytic gradient of one reprojection term w.r.t. the raw 3D direction.

    The chain runs through direction normalization, the pinhole projection of
    the stepped point, and the 2D normalization.
    """
    r = np.asarray(raw_dir, dtype=float)
    nr = float(np.linalg.norm(r))
    if nr < 1e-9:
        raise ObjectiveError("projection term needs a non-zero direction")
    d = r / nr
    u2, jac, n = _project_direction_with_grad(origin, r, intrinsics, extrinsics, step)
    g = unit(np.asarray(goal_2d, dtype=float))
    value = 1.0 - float(np.dot(u2, g))
    d_loss_d_delta = -(g - np.dot(u2, g) * u2) / n
    grad_unit_dir = jac.T @ d_loss_d_delta
    grad_raw = (grad_unit_dir - np.dot(grad_unit_dir, d) * d) / nr
    return value, grad_raw


def projection_term_grad_soft(
    origin: np.ndarray,
    raw_dir: np.ndarray,
    goal_2d: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    step: float | None = None,
    eps_px: float = 0.25,
) -> tuple[float, np.ndarray]:
    """Regularized reprojection term that stays smooth through degeneracy.

    Uses u = delta / (|delta| + eps) so directions near the viewing ray give
    u -> 0 (loss -> 1) with a well-defined gradient pushing the projection to
    grow toward the goal, instead of raising. Optimizers iterate through the
    degenerate zone with this form; the strict term remains the reference.
    """
    r = np.asarray(raw_dir, dtype=float)
    nr = float(np.linalg.norm(r))
    if nr < 1e-9:
        raise ObjectiveError("projection term needs a non-zero direction")
    d = r / nr
    o = np.asarray(origin, dtype=float)
    if step is None:
        step = DIRECTION_STEP_FRACTION * float(np.linalg.norm(o - extrinsics.camera_center))
    p0 = project(o, intrinsics, extrinsics)
    p1 = project(o + step * d, intrinsics, extrinsics)
    delta = p1 - p0
    n = float(np.linalg.norm(delta))
    g = unit(np.asarray(goal_2d, dtype=float))
    u = delta / (n + eps_px)
    value = 1.0 - float(np.dot(u, g))
    d_loss_d_delta = -g / (n + eps_px)
    if n > 1e-12:
        d_loss_d_delta += delta * float(np.dot(delta, g)) / (n * (n + eps_px) ** 2)
    jac = projection_jacobian(o + step * d, intrinsics, extrinsics) * step
    grad_unit_dir = jac.T @ d_loss_d_delta
    grad_raw = (grad_unit_dir - np.dot(grad_unit_dir, d) * d) / nr
    return value, grad_raw


def normal_prior_grad(raw_dir: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of 1 - cos(dir, target) w.r.t. the raw direction."""
    r = np.asarray(raw_dir, dtype=float)
    nr = float(np.linalg.norm(r))
    if nr < 1e-9:
        raise ObjectiveError("prior term needs a non-zero direction")
    d = r / nr
    t = unit(target)
    value = 1.0 - float(np.dot(d, t))
    grad = -(t - np.dot(d, t) * d) / nr
    return value, grad


def soft_decode(logits: np.ndarray) -> np.ndarray:
    """Softmax-expected bin centers for each of the 9 direction components.

    Differentiable decode used while training; inference uses hard argmax.
    Returns shape (9,).
    """
    probs = softmax(np.asarray(logits, dtype=float))
    return probs @ BIN_CENTERS


def soft_decode_backprop(logits: np.ndarray, grad_values: np.ndarray) -> np.ndarray:
    """Backpropagate a gradient on the decoded values onto the logits."""
    probs = softmax(np.asarray(logits, dtype=float))
    values = probs @ BIN_CENTERS
    # d value_i / d logit_ij = p_ij * (c_j - value_i)
    return probs * (BIN_CENTERS[None, :] - values[:, None]) * np.asarray(grad_values, float)[:, None]


def hard_decode(logits: np.ndarray) -> np.ndarray:
    """Argmax decode of the 9 components to bin-center values."""
    idx = np.argmax(np.asarray(logits, dtype=float), axis=-1)
    return BIN_CENTERS[idx]


def check_gradient(
    func,
    grad,
    x0: np.ndarray,
    step: float = 1e-5,
    mode: str = "coordinates",
    n_directions: int = 8,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare an analytic gradient against central finite differences.

    ``coordinates`` mode perturbs every coordinate; ``directions`` mode checks
    directional derivatives along random unit directions (cheap for large
    parameter vectors). Returns the maximum relative error.
    """
    x0 = np.asarray(x0, dtype=float)
    g = np.asarray(grad(x0), dtype=float)
    if g.shape != x0.shape:
        raise ObjectiveError("gradient shape mismatch")
    worst = 0.0
    if mode == "coordinates":
        for i in range(x0.size):
            e = np.zeros_like(x0)
            e.flat[i] = step
            fd = (func(x0 + e) - func(x0 - e)) / (2.0 * step)
            an = g.flat[i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    elif mode == "directions":
        if rng is None:
            rng = np.random.default_rng(0)
        for _ in range(n_directions):
            v = rng.normal(size=x0.shape)
            v /= np.linalg.norm(v)
            fd = (func(x0 + step * v) - func(x0 - step * v)) / (2.0 * step)
            an = float(np.sum(g * v))
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    else:
        raise ObjectiveError(f"unknown mode {mode!r}")
    return worst
