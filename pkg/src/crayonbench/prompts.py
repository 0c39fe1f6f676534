"""2D crayon prompt codec: derivation, rasterization, extraction, text forms.

A crayon prompt is the four-color overlay specifying a manipulation sub-goal:
a blue disc at the contact pixel plus optional red (gripper z), green
(gripper y), and yellow (moving direction) line segments, each a unit 2D
direction. Prompts are stored canonically as structured records; the raster
is a derived view.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DegenerateProjectionError,
    DIRECTION_STEP_FRACTION,
    project,
    project_direction,
    projection_jacobian,
    rotation_about_axis,
    unit,
)
from .objective import quantize

PATTERNS = ("P", "PZ", "PZY", "PZYM")

# Which direction slots each pattern carries, in drawing order.
_PATTERN_DIRS = {"P": (), "PZ": ("z",), "PZY": ("z", "y"), "PZYM": ("z", "y", "m")}

MAX_REMEDY_DEG = 5.0
_REMEDY_GRID_DEG = np.arange(0.25, MAX_REMEDY_DEG + 1e-9, 0.25)


class PromptError(ValueError):
    pass


def pattern_for(z: bool, y: bool, m: bool) -> str:
    key = (z, y, m)
    table = {
        (False, False, False): "P",
        (True, False, False): "PZ",
        (True, True, False): "PZY",
        (True, True, True): "PZYM",
    }
    if key not in table:
        raise PromptError(f"direction set z={z} y={y} m={m} is not a nested pattern")
    return table[key]


@dataclass(frozen=True)
class CrayonPrompt:
    """Contact pixel plus optional unit 2D directions, tagged with a pattern.

    ``remedy_deg`` records the angular noise (degrees) applied to any 3D
    direction whose projection was degenerate when the prompt was derived.
    """

    contact_px: np.ndarray
    pattern: str
    z_dir: np.ndarray | None = None
    y_dir: np.ndarray | None = None
    move_dir: np.ndarray | None = None
    remedy_deg: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise PromptError(f"unknown pattern {self.pattern!r}")
        object.__setattr__(self, "contact_px", np.asarray(self.contact_px, dtype=float).reshape(2))
        want = _PATTERN_DIRS[self.pattern]
        for name in ("z", "y", "m"):
            attr = {"z": "z_dir", "y": "y_dir", "m": "move_dir"}[name]
            value = getattr(self, attr)
            if (value is not None) != (name in want):
                raise PromptError(f"pattern {self.pattern} and direction {name!r} presence disagree")
            if value is not None:
                v = np.asarray(value, dtype=float).reshape(2)
                if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
                    raise PromptError(f"direction {name!r} is not unit norm")
                object.__setattr__(self, attr, v)

    def directions(self) -> dict[str, np.ndarray]:
        out = {}
        for name, attr in (("z", "z_dir"), ("y", "y_dir"), ("m", "move_dir")):
            value = getattr(self, attr)
            if value is not None:
                out[name] = value
        return out

    def restrict(self, pattern: str) -> "CrayonPrompt":
        """Mask the prompt down to a smaller pattern (P, PZ, PZY, PZYM)."""
        if pattern not in PATTERNS:
            raise PromptError(f"unknown pattern {pattern!r}")
        if PATTERNS.index(pattern) > PATTERNS.index(self.pattern):
            raise PromptError(f"cannot widen pattern {self.pattern} to {pattern}")
        want = _PATTERN_DIRS[pattern]
        return CrayonPrompt(
            contact_px=self.contact_px.copy(),
            pattern=pattern,
            z_dir=self.z_dir if "z" in want else None,
            y_dir=self.y_dir if "y" in want else None,
            move_dir=self.move_dir if "m" in want else None,
            remedy_deg={k: v for k, v in self.remedy_deg.items() if k in want},
        )

    def to_record(self, camera_ref: str | None = None, scene_ref: str | None = None) -> dict:
        rec = {
            "contact": self.contact_px.tolist(),
            "pattern": self.pattern,
            "z": None if self.z_dir is None else self.z_dir.tolist(),
            "y": None if self.y_dir is None else self.y_dir.tolist(),
            "m": None if self.move_dir is None else self.move_dir.tolist(),
            "remedy_deg": dict(sorted(self.remedy_deg.items())),
        }
        if camera_ref is not None:
            rec["camera_ref"] = camera_ref
        if scene_ref is not None:
            rec["scene_ref"] = scene_ref
        return rec

    @staticmethod
    def from_record(rec: dict) -> "CrayonPrompt":
        def arr(key):
            v = rec.get(key)
            return None if v is None else np.asarray(v, dtype=float)

        return CrayonPrompt(
            contact_px=np.asarray(rec["contact"], dtype=float),
            pattern=rec["pattern"],
            z_dir=arr("z"),
            y_dir=arr("y"),
            move_dir=arr("m"),
            remedy_deg=dict(rec.get("remedy_deg", {})),
        )


@dataclass(frozen=True)
class PromptStyle:
    """Overlay palette and stroke geometry. Colors are full-saturation primaries."""

    contact_color: tuple[int, int, int] = (0, 0, 255)
    z_color: tuple[int, int, int] = (255, 0, 0)
    y_color: tuple[int, int, int] = (0, 255, 0)
    m_color: tuple[int, int, int] = (255, 255, 0)
    disc_radius: float = 5.0
    line_length: float = 40.0
    line_thickness: float = 3.0
    channel_tolerance: int = 30

    def __post_init__(self) -> None:
        colors = [self.contact_color, self.z_color, self.y_color, self.m_color]
        if len({tuple(c) for c in colors}) != 4:
            raise PromptError("palette colors must be pairwise distinct")
        if min(self.disc_radius, self.line_length, self.line_thickness) <= 0:
            raise PromptError("stroke geometry must be positive")

    def direction_colors(self) -> dict[str, tuple[int, int, int]]:
        return {"z": self.z_color, "y": self.y_color, "m": self.m_color}


DEFAULT_STYLE = PromptStyle()


def _remedy_tangent(origin, direction, intrinsics, extrinsics, avoid_2d=()) -> np.ndarray:
    """Perpendicular rotation target for the degenerate-direction remedy.

    Picks the tangent whose projection grows fastest; among near-ties, prefers
    the one whose 2D image stays angularly far from already-derived prompt
    directions so distinct prompt lines stay distinguishable.
    """
    d = unit(direction)
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = unit(np.cross(d, ref))
    t2 = np.cross(d, t1)
    jac = projection_jacobian(origin, intrinsics, extrinsics)
    best, best_score = None, -np.inf
    for base in (t1, t2, -t1, -t2, unit(t1 + t2), unit(t1 - t2), unit(-t1 + t2), unit(-t1 - t2)):
        img = jac @ base
        growth = float(np.linalg.norm(img))
        if growth < 1e-12:
            continue
        u2 = img / growth
        separation = min(
            (abs(float(np.cross(np.append(u2, 0.0), np.append(g, 0.0))[2])) for g in avoid_2d),
            default=1.0,
        )
        score = growth * (1.0 + separation)
        if score > best_score + 1e-12:
            best, best_score = base, score
    if best is None:
        raise DegenerateProjectionError("no tangent direction projects to a usable 2D vector")
    return best


def remedy_degenerate_direction(
    origin: np.ndarray,
    direction: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    step: float | None = None,
    avoid_2d: tuple = (),
) -> tuple[np.ndarray, float]:
    """Smallest-angle rotation (<= 5 degrees) making a direction projectable.

    Returns the projected unit 2D direction of the perturbed 3D direction and
    the rotation angle in degrees that was required.
    """
    d = unit(direction)
    tangent = _remedy_tangent(origin, d, intrinsics, extrinsics, avoid_2d)
    axis = np.cross(d, tangent)
    for angle_deg in _REMEDY_GRID_DEG:
        rotated = rotation_about_axis(axis, np.radians(angle_deg)) @ d
        try:
            u2 = project_direction(origin, rotated, intrinsics, extrinsics, step=step)
        except DegenerateProjectionError:
            continue
        return u2, float(angle_deg)
    raise PromptError(
        f"direction stays degenerate after {MAX_REMEDY_DEG} degrees of remedial noise"
    )


def derive_2d_prompts(
    gt_action,
    intrinsics: CameraIntrinsics,
    extrinsics: CameraExtrinsics,
    pattern: str = "PZYM",
    step: float | None = None,
) -> CrayonPrompt:
    """Project a 3D ground-truth action into a 2D crayon prompt.

    The contact point is projected directly; each requested direction is
    projected by stepping along the 3D axis. Degenerate directions (near
    parallel to the viewing ray) are remedied by the smallest angular noise,
    at most 5 degrees, that yields a visible projection; applied angles are
    recorded in ``remedy_deg``.
    """
    if pattern not in PATTERNS:
        raise PromptError(f"unknown pattern {pattern!r}")
    contact = np.asarray(gt_action.contact_point_3d, dtype=float)
    px = project(contact, intrinsics, extrinsics)
    if not (0 <= px[0] < intrinsics.width and 0 <= px[1] < intrinsics.height):
        raise PromptError(f"contact projects outside the image at ({px[0]:.1f}, {px[1]:.1f})")
    source = {"z": gt_action.z_axis, "y": gt_action.y_axis, "m": getattr(gt_action, "move_dir", None)}
    dirs: dict[str, np.ndarray] = {}
    remedies: dict[str, float] = {}
    for name in _PATTERN_DIRS[pattern]:
        d3 = source[name]
        if d3 is None:
            raise PromptError(f"pattern {pattern} needs direction {name!r} but the action lacks it")
        try:
            dirs[name] = project_direction(contact, d3, intrinsics, extrinsics, step=step)
        except DegenerateProjectionError:
            avoid = tuple(dirs.values())
            dirs[name], remedies[name] = remedy_degenerate_direction(
                contact, d3, intrinsics, extrinsics, step=step, avoid_2d=avoid
            )
    return CrayonPrompt(
        contact_px=px,
        pattern=pattern,
        z_dir=dirs.get("z"),
        y_dir=dirs.get("y"),
        move_dir=dirs.get("m"),
        remedy_deg=remedies,
    )


def _paint_disc(img: np.ndarray, center: np.ndarray, radius: float, color) -> None:
    h, w = img.shape[:2]
    cx, cy = float(center[0]), float(center[1])
    x0, x1 = max(0, int(np.floor(cx - radius - 1))), min(w - 1, int(np.ceil(cx + radius + 1)))
    y0, y1 = max(0, int(np.floor(cy - radius - 1))), min(h - 1, int(np.ceil(cy + radius + 1)))
    if x1 < x0 or y1 < y0:
        return
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    img[ys[mask], xs[mask]] = color


def _paint_segment(img: np.ndarray, p0: np.ndarray, p1: np.ndarray, thickness: float, color) -> None:
    h, w = img.shape[:2]
    half = thickness / 2.0
    lo = np.minimum(p0, p1) - half - 1
    hi = np.maximum(p0, p1) + half + 1
    x0, x1 = max(0, int(np.floor(lo[0]))), min(w - 1, int(np.ceil(hi[0])))
    y0, y1 = max(0, int(np.floor(lo[1]))), min(h - 1, int(np.ceil(hi[1])))
    if x1 < x0 or y1 < y0:
        return
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    px = np.stack([xs, ys], axis=-1).astype(float)
    seg = p1 - p0
    seg_len2 = float(np.dot(seg, seg))
    if seg_len2 < 1e-12:
        return
    t = np.clip(((px - p0) @ seg) / seg_len2, 0.0, 1.0)
    nearest = p0 + t[..., None] * seg
    dist = np.linalg.norm(px - nearest, axis=-1)
    mask = dist <= half
    img[ys[mask], xs[mask]] = color


def rasterize(image: np.ndarray, prompt: CrayonPrompt, style: PromptStyle = DEFAULT_STYLE) -> np.ndarray:
    """Overlay a crayon prompt onto an RGB image.

    Lines start at the contact pixel and run ``line_length`` pixels along each
    2D direction, clipped at the border. Draw order is yellow, green, red,
    blue, so the blue contact disc is never occluded.
    """
    h, w = image.shape[:2]
    c = prompt.contact_px
    if not (0 <= c[0] < w and 0 <= c[1] < h):
        raise PromptError("prompt contact outside image bounds")
    out = np.array(image, dtype=np.uint8, copy=True)
    colors = style.direction_colors()
    for name in ("m", "y", "z"):
        d = prompt.directions().get(name)
        if d is None:
            continue
        _paint_segment(out, c, c + style.line_length * d, style.line_thickness, colors[name])
    _paint_disc(out, c, style.disc_radius, style.contact_color)
    return out


def _color_mask(image: np.ndarray, color, tol: int) -> np.ndarray:
    diff = np.abs(image.astype(np.int16) - np.asarray(color, dtype=np.int16))
    return np.all(diff <= tol, axis=-1)


def _principal_direction(coords: np.ndarray) -> np.ndarray:
    centered = coords - coords.mean(axis=0)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    axis = eigvecs[:, int(np.argmax(eigvals))]
    return unit(axis)


def extract(
    image: np.ndarray,
    style: PromptStyle = DEFAULT_STYLE,
    hint: CrayonPrompt | None = None,
) -> CrayonPrompt:
    """Recover a crayon prompt from an overlaid image via the palette colors.

    The contact pixel is the centroid of blue pixels; each direction is the
    principal axis of its color class. Sign is resolved by taking the segment
    end farther from the blue centroid as the head; when a line does not touch
    the contact disc (offset overlays), the sign falls back to the
    accompanying structured record via ``hint``.
    """
    blue = _color_mask(image, style.contact_color, style.channel_tolerance)
    if not np.any(blue):
        raise PromptError("no contact marker found")
    ys, xs = np.nonzero(blue)
    contact = np.array([xs.mean(), ys.mean()])

    min_pixels = style.line_thickness**2
    dirs: dict[str, np.ndarray] = {}
    for name, color in style.direction_colors().items():
        mask = _color_mask(image, color, style.channel_tolerance)
        count = int(mask.sum())
        if count < min_pixels:
            continue
        ys, xs = np.nonzero(mask)
        coords = np.stack([xs, ys], axis=-1).astype(float)
        axis = _principal_direction(coords)
        t = coords @ axis
        t_contact = float(contact @ axis)
        near, far = float(t.min()), float(t.max())
        if abs(far - t_contact) < abs(near - t_contact):
            axis = -axis
            near, far = -far, -near
        offset = float(np.min(np.linalg.norm(coords - contact, axis=-1)))
        if offset > style.disc_radius + 2.0 * style.line_thickness and hint is not None:
            hinted = hint.directions().get(name)
            if hinted is not None and float(np.dot(axis, hinted)) < 0:
                axis = -axis
        dirs[name] = axis
    pattern = pattern_for("z" in dirs, "y" in dirs, "m" in dirs)
    return CrayonPrompt(
        contact_px=contact,
        pattern=pattern,
        z_dir=dirs.get("z"),
        y_dir=dirs.get("y"),
        move_dir=dirs.get("m"),
    )


def _fmt2(v: float) -> str:
    s = f"{float(v):.2f}"
    return "0.00" if s == "-0.00" else s


def _fmt_vec(v) -> str:
    return "(" + ", ".join(_fmt2(x) for x in np.asarray(v, dtype=float)) + ")"


_TEMPLATE_HEAD = "Predict the contact point and orientation for manipulating the object."

_HINTS = {
    "P": "The hints in the image include the contact point with a blue dot.",
    "PZ": (
        "The hints in the image include a blue dot for the contact point and "
        "a red line for the gripper z-axis 2D direction."
    ),
    "PZY": (
        "The hints in the image include a blue dot for the contact point, a red line "
        "for the gripper z-axis 2D direction, and a green line for the gripper y-axis 2D direction."
    ),
    "PZYM": (
        "The hints in the image include a blue dot for the contact point, a red line "
        "for the gripper z-axis 2D direction, a green line for the gripper y-axis 2D direction, "
        "and a yellow line for the moving 2D direction."
    ),
}


def format_language(prompt: CrayonPrompt) -> str:
    """Language prompt text for a crayon prompt, template selected by pattern."""
    values = [f"the contact point is at {_fmt_vec(prompt.contact_px)}"]
    if prompt.z_dir is not None:
        values.append(f"the gripper z-axis 2D direction is {_fmt_vec(prompt.z_dir)}")
    if prompt.y_dir is not None:
        values.append(f"the gripper y-axis 2D direction is {_fmt_vec(prompt.y_dir)}")
    if prompt.move_dir is not None:
        values.append(f"the gripper moving 2D direction is {_fmt_vec(prompt.move_dir)}")
    if len(values) == 1:
        tail = values[0]
    else:
        tail = ", ".join(values[:-1]) + f", and {values[-1]}"
    return f"{_TEMPLATE_HEAD} {_HINTS[prompt.pattern]} Specifically, {tail}."


def format_ground_truth_text(gt_action) -> str:
    """Supervision target string, direction values snapped to the 0.02 bin grid."""
    contact_px = getattr(gt_action, "contact_px", None)
    if contact_px is None:
        contact_px = gt_action.contact_point_3d[:2]
    z = [quantize(v) for v in np.asarray(gt_action.z_axis, dtype=float)]
    y = [quantize(v) for v in np.asarray(gt_action.y_axis, dtype=float)]
    head = f"The contact point is at {_fmt_vec(contact_px)}"
    z_part = f"the gripper z-axis 3D direction is {_fmt_vec(z)}"
    y_part = f"the gripper y-axis 3D direction is {_fmt_vec(y)}"
    move = getattr(gt_action, "move_dir", None)
    if move is None:
        return f"{head}, {z_part}, and {y_part}."
    m = [quantize(v) for v in np.asarray(move, dtype=float)]
    return f"{head}, {z_part}, {y_part}, and the moving 3D direction is {_fmt_vec(m)}."


_VEC_RE = r"\(([-0-9., ]+)\)"


def parse_ground_truth_text(text: str) -> dict:
    """Inverse of format_ground_truth_text; returns arrays keyed contact/z/y/m."""
    fields = {
        "contact": r"contact point is at " + _VEC_RE,
        "z": r"z-axis 3D direction is " + _VEC_RE,
        "y": r"y-axis 3D direction is " + _VEC_RE,
        "m": r"moving 3D direction is " + _VEC_RE,
    }
    out: dict = {}
    for key, pat in fields.items():
        match = re.search(pat, text)
        if match is None:
            if key == "m":
                out[key] = None
                continue
            raise PromptError(f"ground-truth text missing the {key!r} clause")
        out[key] = np.array([float(x) for x in match.group(1).split(",")])
    return out


def perturb(prompt: CrayonPrompt, noise_fraction: float, rng: np.random.Generator) -> CrayonPrompt:
    """Add uniform noise to the direction components and renormalize.

    Each component receives additive noise drawn uniformly from
    +/- noise_fraction times the direction's norm (1 for unit prompts). The
    contact pixel is left untouched.
    """
    if not (0.0 <= noise_fraction <= 1.0):
        raise PromptError("noise fraction must lie in [0, 1]")
    if noise_fraction == 0.0:
        return prompt

    def jitter(v):
        if v is None:
            return None
        scale = noise_fraction * float(np.linalg.norm(v))
        return unit(v + rng.uniform(-scale, scale, size=2))

    return CrayonPrompt(
        contact_px=prompt.contact_px.copy(),
        pattern=prompt.pattern,
        z_dir=jitter(prompt.z_dir),
        y_dir=jitter(prompt.y_dir),
        move_dir=jitter(prompt.move_dir),
        remedy_deg=dict(prompt.remedy_deg),
    )
