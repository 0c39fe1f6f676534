"""Prompt-to-action predictors: geometric lifting solver and toy trainable model.

Both consume a 2D crayon prompt plus depth and camera parameters and emit a
full 3D action. The solver optimizes the reprojection/orthogonality objective
over unit vectors with a surface-normal prior; the toy model is a small
feed-forward network trained under the same objective with dynamic prompt
patterns, standing in for a full-scale vision-language backbone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DepthImage,
    GeometryError,
    InvalidDepthError,
    estimate_normal,
    lift,
    pixel_ray,
    projection_jacobian,
    unit,
)
from .objective import (
    LossWeights,
    N_BINS,
    hard_decode,
    normal_prior_grad,
    orthogonal_loss,
    orthogonal_loss_grad,
    projection_term_grad,
    projection_term_grad_soft,
    soft_decode,
    soft_decode_backprop,
    text_loss,
    text_loss_grad,
)
from .prompts import PATTERNS, CrayonPrompt
from .records import canonical_dumps, fingerprint


class PredictorError(RuntimeError):
    pass


class SolverError(PredictorError):
    """Solver non-convergence; carries the best iterate found and its loss."""

    def __init__(self, message: str, best_action=None, loss: float = float("nan")):
        super().__init__(message)
        self.best_action = best_action
        self.loss = loss


@dataclass
class PredictedAction:
    """Predicted SE(3) action: contact plus gripper z/y axes and moving direction."""

    contact_px_pred: np.ndarray
    contact_3d: np.ndarray
    z_axis: np.ndarray
    y_axis: np.ndarray
    move_dir: np.ndarray | None
    provenance: str  # solver | toy_model | ground_truth

    def __post_init__(self) -> None:
        self.contact_px_pred = np.asarray(self.contact_px_pred, dtype=float).reshape(2)
        self.contact_3d = np.asarray(self.contact_3d, dtype=float).reshape(3)
        self.z_axis = unit(self.z_axis)
        self.y_axis = unit(self.y_axis)
        if self.move_dir is not None:
            self.move_dir = unit(self.move_dir)


@dataclass(frozen=True)
class FeasibleFamily:
    """Plane of 3D directions at a pixel consistent with one 2D prompt direction.

    ``basis_ray`` spans the viewing ray (projections vanish along it);
    ``basis_inplane`` is orthogonal to it and projects exactly onto the
    positive target 2D direction. The family is always two-dimensional.
    """

    basis_ray: np.ndarray
    basis_inplane: np.ndarray
    target_2d: np.ndarray

    def member(self, theta: float) -> np.ndarray:
        """Unit family member; theta = 0 is the in-image-plane direction."""
        return np.cos(theta) * self.basis_inplane + np.sin(theta) * self.basis_ray

    def project_onto(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a = float(np.dot(v, self.basis_ray))
        b = float(np.dot(v, self.basis_inplane))
        w = a * self.basis_ray + b * self.basis_inplane
        return unit(w) if np.linalg.norm(w) > 1e-12 else self.basis_inplane


def feasible_family(
    dir2d: np.ndarray,
    pixel: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
) -> FeasibleFamily:
    """Construct the feasible family of a 2D direction at a pixel.

    The linearized projection at any point along the pixel's viewing ray has
    the same direction preimage, so only the pixel is needed.
    """
    g = unit(np.asarray(dir2d, dtype=float))
    ray = pixel_ray(pixel, intrinsics, extrinsics)
    point = lift(pixel, 1.0, intrinsics, extrinsics)
    jac = projection_jacobian(point, intrinsics, extrinsics)
    sol, *_ = np.linalg.lstsq(jac, g, rcond=None)
    inplane = sol - np.dot(sol, ray) * ray
    norm = float(np.linalg.norm(inplane))
    if norm < 1e-12:
        raise PredictorError("feasible family is degenerate at this pixel")
    return FeasibleFamily(basis_ray=ray, basis_inplane=inplane / norm, target_2d=g)


@dataclass
class SolverConfig:
    w_proj: float = 1.0
    w_ortho: float = 1.0
    w_normal: float = 0.3
    max_iters: int = 500
    tol: float = 1e-8
    initial_step: float = 0.2
    normal_window: int = 5
    depth_search_radius: int = 2
    move_hint: np.ndarray | None = None  # articulated free direction at the contact, if a scene is attached
    # Contact correction: when the solved approach axis disagrees with the
    # local surface by more than the trigger angle, the predicted contact
    # pixel may shift (bounded) to a nearby surface consistent with the
    # prompt. Mirrors the contract that the predicted contact can deviate
    # from the prompt pixel under noisy positional prompts.
    contact_fix_trigger_deg: float = 45.0
    contact_fix_radius_px: int = 20
    contact_fix_grid_px: int = 4


def _depth_near(depth: DepthImage, pixel: np.ndarray, radius: int) -> float:
    """Depth at the pixel, falling back to the nearest valid neighbor."""
    try:
        return depth.at(pixel)
    except InvalidDepthError:
        pass
    u0, v0 = int(round(float(pixel[0]))), int(round(float(pixel[1])))
    best, best_d2 = None, None
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            u, v = u0 + du, v0 + dv
            if 0 <= u < depth.width and 0 <= v < depth.height and depth.valid[v, u]:
                d2 = du * du + dv * dv
                if best_d2 is None or d2 < best_d2:
                    best, best_d2 = float(depth.values[v, u]), d2
    if best is None:
        raise InvalidDepthError("no valid depth near the prompt contact")
    return best


def _perp_tiebreak(z: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to z: world axis least aligned with it."""
    axes = np.eye(3)
    idx = int(np.argmin(np.abs(axes @ z)))
    return unit(axes[idx] - np.dot(axes[idx], z) * z)


def _resolve_move_theta(family: FeasibleFamily, hint: np.ndarray | None) -> float:
    if hint is None:
        return 0.0
    h = unit(hint)
    a = float(np.dot(family.basis_inplane, h))
    b = float(np.dot(family.basis_ray, h))
    theta = float(np.arctan2(b, a))
    # Keep the family member projecting onto +target (cos theta > 0).
    if theta > np.pi / 2:
        theta -= np.pi
    elif theta < -np.pi / 2:
        theta += np.pi
    limit = np.pi / 2 - 0.05
    return float(np.clip(theta, -limit, limit))


def lift_pose_geometric(
    prompt: CrayonPrompt,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    config: SolverConfig | None = None,
) -> PredictedAction:
    """Lift a crayon prompt to a 3D action by minimizing the pose objective.

    Minimizes w_proj * L_P + w_ortho * L_O + w_normal * (1 - Z . (-n)) over
    unit vectors by projected gradient descent with step halving, starting
    from the surface-normal prior and prompt-consistent in-plane directions.
    Directions missing from the prompt come from priors: Z = -n, Y = a
    deterministic perpendicular, M omitted. The moving direction's residual
    in-family freedom is resolved toward the articulated-motion hint when one
    is attached, else toward the image plane.
    """
    config = config or SolverConfig()
    px = prompt.contact_px
    depth_value = _depth_near(depth, px, config.depth_search_radius)
    contact = lift(px, depth_value, intrinsics, extrinsics)
    normal = estimate_normal(depth, px, intrinsics, extrinsics, window=config.normal_window)
    prior_z = -normal  # gripper z points into the surface

    families: dict[str, FeasibleFamily] = {}
    for name, d2 in prompt.directions().items():
        families[name] = feasible_family(d2, px, intrinsics, extrinsics)

    # Initialization: prior projected into each family, in-plane fallback.
    state: dict[str, np.ndarray] = {}
    if "z" in families:
        z0 = families["z"].project_onto(prior_z)
        if float(np.dot(z0, families["z"].basis_inplane)) <= 0:
            z0 = families["z"].basis_inplane
        state["z"] = z0
    if "y" in families:
        fam = families["y"]
        z_ref = state.get("z", prior_z)
        a_ray = float(np.dot(fam.basis_ray, z_ref))
        a_inp = float(np.dot(fam.basis_inplane, z_ref))
        if max(abs(a_ray), abs(a_inp)) > 1e-6:
            # Start at the family member orthogonal to z (positive projection root).
            theta = float(np.arctan2(-a_inp, a_ray))
            if np.cos(theta) < 0:
                theta += np.pi if theta < 0 else -np.pi
            state["y"] = fam.member(theta)
        else:
            state["y"] = fam.basis_inplane
    if "m" in families:
        state["m"] = families["m"].basis_inplane

    goals = prompt.directions()

    def objective_and_grad(st: dict[str, np.ndarray]):
        value = 0.0
        grads = {k: np.zeros(3) for k in st}
        for name, d in st.items():
            val, g = projection_term_grad_soft(contact, d, goals[name], intrinsics, extrinsics)
            value += config.w_proj * val
            grads[name] += config.w_proj * g
        if "z" in st and "y" in st:
            val = orthogonal_loss(st["z"], st["y"])
            gz, gy = orthogonal_loss_grad(st["z"], st["y"])
            value += config.w_ortho * val
            grads["z"] += config.w_ortho * gz
            grads["y"] += config.w_ortho * gy
        if "z" in st:
            val, g = normal_prior_grad(st["z"], prior_z)
            value += config.w_normal * val
            grads["z"] += config.w_normal * g
        return value, grads

    if state:

        def tangent_grad_norm(st, grads) -> float:
            worst = 0.0
            for k, d in st.items():
                g = grads[k]
                worst = max(worst, float(np.linalg.norm(g - np.dot(g, d) * d)))
            return worst

        current = {k: v.copy() for k, v in state.items()}
        f_cur, g_cur = objective_and_grad(current)
        step = config.initial_step
        converged = tangent_grad_norm(current, g_cur) < config.tol**0.5
        window_best = f_cur
        window_count = 0
        if not converged:
            for _ in range(config.max_iters):
                trial = {k: unit(current[k] - step * g_cur[k]) for k in current}
                f_trial, g_trial = objective_and_grad(trial)
                if f_trial <= f_cur - 1e-15:
                    improved = f_cur - f_trial
                    current, f_cur, g_cur = trial, f_trial, g_trial
                    step = min(step * 1.2, 1.0)
                    if improved < config.tol or tangent_grad_norm(current, g_cur) < config.tol**0.5:
                        converged = True
                        break
                else:
                    step *= 0.5
                    if step < 1e-12:
                        converged = True
                        break
                # Stagnation over a window counts as convergence (flat valleys).
                window_count += 1
                if window_count >= 50:
                    if window_best - f_cur < 50 * config.tol:
                        converged = True
                        break
                    window_best = f_cur
                    window_count = 0
            if not converged:
                best = _assemble(
                    prompt, contact, state=current, prior_z=prior_z, config=config, families=families
                )
                raise SolverError(
                    f"solver did not converge in {config.max_iters} iterations (loss {f_cur:.3g})",
                    best_action=best,
                    loss=f_cur,
                )
        state = current

    return _assemble(prompt, contact, state=state, prior_z=prior_z, config=config, families=families)


def _assemble(
    prompt: CrayonPrompt,
    contact: np.ndarray,
    state: dict[str, np.ndarray],
    prior_z: np.ndarray,
    config: SolverConfig,
    families: dict[str, FeasibleFamily],
) -> PredictedAction:
    z = state.get("z", prior_z)
    y_raw = state.get("y")
    if y_raw is None:
        y = _perp_tiebreak(z)
    else:
        y = y_raw - np.dot(y_raw, z) * z
        if np.linalg.norm(y) < 1e-6:
            y = _perp_tiebreak(z)
    y = unit(y)
    move = None
    if "m" in families:
        move = families["m"].member(_resolve_move_theta(families["m"], config.move_hint))
    return PredictedAction(
        contact_px_pred=prompt.contact_px.copy(),
        contact_3d=contact,
        z_axis=unit(z),
        y_axis=y,
        move_dir=move,
        provenance="solver",
    )


# -- toy trainable predictor ---------------------------------------------------


@dataclass(frozen=True)
class CurriculumSpec:
    """Sampling distribution over prompt patterns used during training."""

    probabilities: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self) -> None:
        if len(self.probabilities) != len(PATTERNS):
            raise PredictorError("curriculum needs one probability per pattern")
        if abs(sum(self.probabilities) - 1.0) > 1e-9 or min(self.probabilities) < 0:
            raise PredictorError("curriculum probabilities must be non-negative and sum to 1")

    def sample(self, rng: np.random.Generator) -> str:
        return PATTERNS[int(rng.choice(len(PATTERNS), p=np.asarray(self.probabilities)))]


@dataclass(frozen=True)
class ToyModelConfig:
    hidden: int = 64
    patch: int = 16
    learning_rate: float = 2e-3
    batch_size: int = 64
    offset_cap_px: float = 16.0
    depth_scale: float = 0.5

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "patch": self.patch,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "offset_cap_px": self.offset_cap_px,
            "depth_scale": self.depth_scale,
        }


N_OUTPUT = 9 * N_BINS + 2  # direction logits plus the contact residual head


@dataclass
class ToyModelParams:
    config: ToyModelConfig
    weights: dict[str, np.ndarray]
    config_hash: str
    loss_curve: list[float] = field(default_factory=list)

    def feature_size(self) -> int:
        return self.weights["w1"].shape[0]


@dataclass
class TrainSample:
    """One training record: prompt, depth raster, camera, and ground truth."""

    prompt: CrayonPrompt
    depth: DepthImage
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    gt_action: object  # GroundTruthAction-like
    gt_contact_px: np.ndarray


def _feature_size(config: ToyModelConfig) -> int:
    return config.patch * config.patch + 6 + 3 + 3 + 2


def extract_features(
    prompt: CrayonPrompt,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    config: ToyModelConfig,
) -> np.ndarray:
    """Feature vector: local depth patch, prompt vectors, pattern mask, camera ray."""
    u0, v0 = int(round(prompt.contact_px[0])), int(round(prompt.contact_px[1]))
    half = config.patch // 2
    d_ref = _depth_near(depth, prompt.contact_px, radius=3)
    patch = np.zeros((config.patch, config.patch))
    for i, dv in enumerate(range(-half, half)):
        for j, du in enumerate(range(-half, half)):
            u, v = u0 + du, v0 + dv
            if 0 <= u < depth.width and 0 <= v < depth.height and depth.valid[v, u]:
                patch[i, j] = np.clip((depth.values[v, u] - d_ref) / config.depth_scale, -4.0, 4.0)
    dirs = prompt.directions()
    vecs = []
    bits = []
    for name in ("z", "y", "m"):
        d = dirs.get(name)
        vecs.append(np.zeros(2) if d is None else d)
        bits.append(0.0 if d is None else 1.0)
    ray = pixel_ray(prompt.contact_px, intrinsics, extrinsics)
    loc = np.array(
        [
            prompt.contact_px[0] / intrinsics.width - 0.5,
            prompt.contact_px[1] / intrinsics.height - 0.5,
        ]
    )
    return np.concatenate([patch.ravel(), *vecs, np.asarray(bits), ray, loc])


def _forward(weights: dict[str, np.ndarray], x: np.ndarray, cap: float):
    h_pre = x @ weights["w1"] + weights["b1"]
    h = np.tanh(h_pre)
    out = h @ weights["w2"] + weights["b2"]
    logits = out[: 9 * N_BINS].reshape(9, N_BINS)
    offset = cap * np.tanh(out[9 * N_BINS :] / cap)
    return logits, offset, (x, h_pre, h, out)


def _backward(weights, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    x, h_pre, h, _ = cache
    grads = {}
    grads["w2"] = np.outer(h, grad_out)
    grads["b2"] = grad_out
    dh = weights["w2"] @ grad_out
    dh_pre = dh * (1.0 - h * h)
    grads["w1"] = np.outer(x, dh_pre)
    grads["b1"] = dh_pre
    return grads


def _sample_loss_and_grad(
    weights: dict[str, np.ndarray],
    sample: TrainSample,
    pattern: str,
    loss_weights: LossWeights,
    config: ToyModelConfig,
):
    prompt = sample.prompt.restrict(pattern)
    x = extract_features(prompt, sample.depth, sample.intrinsics, sample.extrinsics, config)
    logits, offset, cache = _forward(weights, x, config.offset_cap_px)
    gt = sample.gt_action

    grad_logits = np.zeros_like(logits)
    grad_offset_raw = np.zeros(2)

    # Text supervision: direction bins plus the contact residual.
    l_text = text_loss(logits, gt)
    grad_logits += loss_weights.l_text * text_loss_grad(logits, gt)
    pred_px = prompt.contact_px + offset
    delta = (pred_px - sample.gt_contact_px) / 100.0
    l_text += float(np.dot(delta, delta))
    d_offset = 2.0 * delta / 100.0
    out = cache[3]
    raw = out[9 * N_BINS :]
    sech2 = 1.0 - np.tanh(raw / config.offset_cap_px) ** 2
    grad_offset_raw += loss_weights.l_text * d_offset * sech2

    values = soft_decode(logits)
    z_soft, y_soft, m_soft = values[0:3], values[3:6], values[6:9]
    grad_values = np.zeros(9)
    l_ortho = 0.0
    l_proj = 0.0

    if min(np.linalg.norm(z_soft), np.linalg.norm(y_soft)) > 0.05:
        l_ortho = orthogonal_loss(z_soft, y_soft)
        gz, gy = orthogonal_loss_grad(z_soft, y_soft)
        grad_values[0:3] += loss_weights.l_ortho * gz
        grad_values[3:6] += loss_weights.l_ortho * gy

    origin = np.asarray(gt.contact_point_3d, dtype=float)
    for name, soft, sl in (("z", z_soft, slice(0, 3)), ("y", y_soft, slice(3, 6)), ("m", m_soft, slice(6, 9))):
        goal = prompt.directions().get(name)
        if goal is None or np.linalg.norm(soft) <= 0.05:
            continue
        try:
            val, g = projection_term_grad(origin, soft, goal, sample.intrinsics, sample.extrinsics)
        except (GeometryError, ValueError):
            continue
        l_proj += val
        grad_values[sl] += loss_weights.l_proj * g

    grad_logits += soft_decode_backprop(logits, grad_values)
    grad_out = np.concatenate([grad_logits.ravel(), grad_offset_raw])
    grads = _backward(weights, cache, grad_out)
    total = (
        loss_weights.l_text * l_text
        + loss_weights.l_ortho * l_ortho
        + loss_weights.l_proj * l_proj
    )
    return total, grads


def train_toy_model(
    samples: list[TrainSample],
    weights: LossWeights | None = None,
    curriculum: CurriculumSpec | None = None,
    epochs: int = 120,
    seed: int = 0,
    config: ToyModelConfig | None = None,
) -> ToyModelParams:
    """Train the toy predictor under the weighted objective with dynamic patterns.

    Deterministic given the seed: initialization, curriculum sampling, and
    batch order all derive from one generator. Raises on divergence.
    """
    if not samples:
        raise PredictorError("training needs a non-empty dataset")
    weights = weights or LossWeights()
    curriculum = curriculum or CurriculumSpec()
    config = config or ToyModelConfig()
    rng = np.random.default_rng(seed)
    n_in = _feature_size(config)
    params = {
        "w1": rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, config.hidden)),
        "b1": np.zeros(config.hidden),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(config.hidden), size=(config.hidden, N_OUTPUT)),
        "b2": np.zeros(N_OUTPUT),
    }
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    curve: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for idx in batch:
                pattern = curriculum.sample(rng)
                loss, grads = _sample_loss_and_grad(params, samples[idx], pattern, weights, config)
                if not np.isfinite(loss):
                    raise PredictorError(f"training diverged (loss {loss!r}) at step {step}")
                epoch_loss += loss
                for k in acc:
                    acc[k] += grads[k]
            step += 1
            for k in params:
                g = acc[k] / len(batch)
                adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
                adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
                m_hat = adam_m[k] / (1 - beta1**step)
                v_hat = adam_v[k] / (1 - beta2**step)
                params[k] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        curve.append(epoch_loss / len(samples))
    cfg_record = {
        "config": config.to_dict(),
        "weights": weights.to_dict(),
        "curriculum": list(curriculum.probabilities),
        "seed": seed,
    }
    return ToyModelParams(
        config=config,
        weights=params,
        config_hash=fingerprint(cfg_record),
        loss_curve=curve,
    )


def predict_toy(
    params: ToyModelParams,
    prompt: CrayonPrompt,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
) -> PredictedAction:
    """Decode the toy model's logits into a unit-consistent predicted action.

    Hard argmax per component, renormalization, and a Gram-Schmidt fix of the
    y axis against z keep the output invariants regardless of the raw logits.
    """
    x = extract_features(prompt, depth, intrinsics, extrinsics, params.config)
    logits, offset, _ = _forward(params.weights, x, params.config.offset_cap_px)
    values = hard_decode(logits)
    ray = pixel_ray(prompt.contact_px, intrinsics, extrinsics)

    def safe_unit(v, fallback):
        return unit(v) if np.linalg.norm(v) > 1e-6 else fallback

    z = safe_unit(values[0:3], -ray)
    y_raw = safe_unit(values[3:6], _perp_tiebreak(z))
    y = y_raw - np.dot(y_raw, z) * z
    y = unit(y) if np.linalg.norm(y) > 1e-6 else _perp_tiebreak(z)
    m = safe_unit(values[6:9], -z)

    px = prompt.contact_px + offset
    px = np.array(
        [
            np.clip(px[0], 0, intrinsics.width - 1),
            np.clip(px[1], 0, intrinsics.height - 1),
        ]
    )
    contact = lift(px, _depth_near(depth, px, radius=3), intrinsics, extrinsics)
    return PredictedAction(
        contact_px_pred=px,
        contact_3d=contact,
        z_axis=z,
        y_axis=y,
        move_dir=m,
        provenance="toy_model",
    )


def save_toy_model(params: ToyModelParams, path) -> None:
    """One-file format: a JSON manifest line, then raw little-endian float64 blocks."""
    names = sorted(params.weights)
    manifest = {
        "record": "toy_model",
        "config": params.config.to_dict(),
        "config_hash": params.config_hash,
        "arrays": {n: list(params.weights[n].shape) for n in names},
        "loss_curve": [float(v) for v in params.loss_curve],
    }
    blob = canonical_dumps(manifest).encode("utf-8") + b"\n"
    for n in names:
        blob += params.weights[n].astype("<f8").tobytes(order="C")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)


def load_toy_model(path) -> ToyModelParams:
    """Load a toy model file; refuses to load when the config hash mismatches."""
    blob = Path(path).read_bytes()
    head, _, rest = blob.partition(b"\n")
    manifest = json.loads(head.decode("utf-8"))
    if manifest.get("record") != "toy_model":
        raise PredictorError("not a toy model file")
    config = ToyModelConfig(**manifest["config"])
    weights = {}
    offset = 0
    for name in sorted(manifest["arrays"]):
        shape = tuple(manifest["arrays"][name])
        count = int(np.prod(shape))
        arr = np.frombuffer(rest, dtype="<f8", count=count, offset=offset).reshape(shape)
        weights[name] = arr.copy()
        offset += count * 8
    loaded = ToyModelParams(
        config=config,
        weights=weights,
        config_hash=manifest["config_hash"],
        loss_curve=[float(v) for v in manifest.get("loss_curve", [])],
    )
    return loaded


def verify_config_hash(params: ToyModelParams, expected: str) -> None:
    if params.config_hash != expected:
        raise PredictorError(
            f"model config hash {params.config_hash} does not match expected {expected}"
        )
