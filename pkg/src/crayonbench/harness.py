"""Dataset collection, evaluation sweeps, and long-horizon experiments.

Everything here is seed-deterministic: scene seeds, camera poses, contact
sampling, and noise draws all derive from the run seed plus fixed stream
tags, so any run repeated with the same seed and config reproduces every
report byte for byte. Success rates are exact rational counts.
"""
from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoprompt import SelectorContext, auto_prompt
from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    CameraSamplingConfig,
    DepthImage,
    GeometryError,
    lift,
    project,
    sample_camera_pose,
    unit,
)
from .objective import LossWeights
from .planner import KeyFramePlan, PlanStep, execute_plan
from .predictor import (
    CurriculumSpec,
    PredictorError,
    SolverConfig,
    ToyModelParams,
    TrainSample,
    _depth_near,
    lift_pose_geometric,
    predict_toy,
    train_toy_model,
)
from .prompts import CrayonPrompt, PromptError, derive_2d_prompts, perturb
from .records import (
    canonical_dumps,
    dumps_record,
    fingerprint,
    loads_record,
    read_ppm,
    sha256_hex,
    write_ppm,
    write_text,
)
from .reporting import (
    figure_bars,
    figure_line,
    figure_loss_curves,
    rate,
    write_csv,
    write_report,
)
from .scene import (
    ExecParams,
    GroundTruthAction,
    Scene,
    SceneError,
    build_scene,
    collect_ground_truth,
    execute,
    render_full,
)

SPLITS = ("train", "test_seen", "test_unseen")

PROMPT_SOURCES = ("gt", "auto", "perturbed")
PREDICTORS = ("gt", "solver", "toy")

# Stream tags keep independent rng streams from colliding.
_STREAM_CAMERA = 7
_STREAM_CONTACT = 11
_STREAM_NOISE = 23
_STREAM_LONGHORIZON = 31


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class CollectionConfig:
    seed: int = 0
    kinds_seen: tuple[str, ...] = ("drawer", "door", "lid", "button")
    kinds_unseen: tuple[str, ...] = ("lever",)
    n_train: int = 2000
    n_test_seen: int = 400
    n_test_unseen: int = 100
    image_size: int = 336
    focal: float = 450.0
    camera: CameraSamplingConfig = field(default_factory=CameraSamplingConfig)

    def intrinsics(self) -> CameraIntrinsics:
        half = self.image_size / 2.0
        return CameraIntrinsics(self.focal, self.focal, half, half, self.image_size, self.image_size)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "kinds_seen": list(self.kinds_seen),
            "kinds_unseen": list(self.kinds_unseen),
            "n_train": self.n_train,
            "n_test_seen": self.n_test_seen,
            "n_test_unseen": self.n_test_unseen,
            "image_size": self.image_size,
            "focal": self.focal,
            "camera": {
                "distance_range": list(self.camera.distance_range),
                "azimuth_range_deg": list(self.camera.azimuth_range_deg),
                "altitude_range_deg": list(self.camera.altitude_range_deg),
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "CollectionConfig":
        cam = d.get("camera", {})
        camera = CameraSamplingConfig(
            distance_range=tuple(cam.get("distance_range", (4.5, 5.5))),
            azimuth_range_deg=tuple(cam.get("azimuth_range_deg", (-45.0, 45.0))),
            altitude_range_deg=tuple(cam.get("altitude_range_deg", (30.0, 60.0))),
        )
        base = CollectionConfig()
        return CollectionConfig(
            seed=int(d.get("seed", base.seed)),
            kinds_seen=tuple(d.get("kinds_seen", base.kinds_seen)),
            kinds_unseen=tuple(d.get("kinds_unseen", base.kinds_unseen)),
            n_train=int(d.get("n_train", base.n_train)),
            n_test_seen=int(d.get("n_test_seen", base.n_test_seen)),
            n_test_unseen=int(d.get("n_test_unseen", base.n_test_unseen)),
            image_size=int(d.get("image_size", base.image_size)),
            focal=float(d.get("focal", base.focal)),
            camera=camera,
        )


@dataclass
class DatasetRecord:
    record_id: str
    split: str
    kind: str
    scene_seed: int
    joint_state: float
    primitive: str
    camera: dict
    rgb_ref: str
    rgb_sha256: str
    depth_ref: str
    depth_sha256: str
    prompt: dict
    gt: dict
    gt_contact_px: list

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "split": self.split,
            "kind": self.kind,
            "scene_seed": self.scene_seed,
            "joint_state": self.joint_state,
            "primitive": self.primitive,
            "camera": self.camera,
            "rgb_ref": self.rgb_ref,
            "rgb_sha256": self.rgb_sha256,
            "depth_ref": self.depth_ref,
            "depth_sha256": self.depth_sha256,
            "prompt": self.prompt,
            "gt": self.gt,
            "gt_contact_px": self.gt_contact_px,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetRecord":
        return DatasetRecord(**{k: d[k] for k in DatasetRecord.__dataclass_fields__})


class Dataset:
    """On-disk dataset: manifest, one record per line, and raster files."""

    def __init__(self, root: Path, config: CollectionConfig, records: list[DatasetRecord], skipped: int = 0):
        self.root = Path(root)
        self.config = config
        self.records = records
        self.skipped = skipped
        self._depth_cache: dict[str, DepthImage] = {}

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.config.intrinsics()

    def select(self, split: str) -> list[DatasetRecord]:
        if split not in SPLITS:
            raise HarnessError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]

    def extrinsics(self, record: DatasetRecord) -> CameraExtrinsics:
        return CameraExtrinsics.from_dict(record.camera["extrinsics"])

    def depth(self, record: DatasetRecord) -> DepthImage:
        cached = self._depth_cache.get(record.record_id)
        if cached is None:
            cached = DepthImage.from_bytes((self.root / record.depth_ref).read_bytes())
            self._depth_cache[record.record_id] = cached
        return cached

    def rgb(self, record: DatasetRecord) -> np.ndarray:
        return read_ppm(self.root / record.rgb_ref)

    def scene(self, record: DatasetRecord) -> Scene:
        scene = build_scene(record.kind, record.scene_seed)
        scene.joint.state = float(record.joint_state)
        return scene

    def gt_action(self, record: DatasetRecord) -> GroundTruthAction:
        return GroundTruthAction.from_dict(record.gt)

    def prompt(self, record: DatasetRecord) -> CrayonPrompt:
        return CrayonPrompt.from_record(record.prompt)

    def verify_files(self) -> None:
        for record in self.records:
            for ref, digest in ((record.rgb_ref, record.rgb_sha256), (record.depth_ref, record.depth_sha256)):
                blob = (self.root / ref).read_bytes()
                if sha256_hex(blob) != digest:
                    raise HarnessError(f"hash mismatch for {ref}")

    def save(self) -> None:
        manifest = {
            "config": self.config.to_dict(),
            "fingerprint": fingerprint(self.config.to_dict()),
            "counts": {s: len(self.select(s)) for s in SPLITS},
            "skipped": self.skipped,
        }
        write_text(self.root / "manifest.json", dumps_record("dataset_manifest", manifest) + "\n")
        lines = [canonical_dumps(r.to_dict()) for r in self.records]
        write_text(self.root / "records.jsonl", "\n".join(lines) + ("\n" if lines else ""))

    @staticmethod
    def load(root: Path) -> "Dataset":
        root = Path(root)
        manifest = loads_record((root / "manifest.json").read_text(), expect="dataset_manifest")
        config = CollectionConfig.from_dict(manifest["config"])
        records = [
            DatasetRecord.from_dict(json.loads(line))
            for line in (root / "records.jsonl").read_text().splitlines()
            if line.strip()
        ]
        return Dataset(root, config, records, skipped=manifest.get("skipped", 0))


def _scene_seed(config_seed: int, index: int) -> int:
    return (config_seed * 1_000_003 + index) % (2**31 - 1)


def run_collection(config: CollectionConfig, out_dir: Path, log=None) -> Dataset:
    """Collect the dataset: verified ground truth, prompts, and raster files.

    Scenes whose ground-truth search or prompt derivation fails are skipped
    and counted; collection continues until each split reaches its target.
    """
    out_dir = Path(out_dir)
    intr = config.intrinsics()
    records: list[DatasetRecord] = []
    skipped = 0
    plan = [
        ("train", config.n_train, config.kinds_seen),
        ("test_seen", config.n_test_seen, config.kinds_seen),
        ("test_unseen", config.n_test_unseen, config.kinds_unseen),
    ]
    global_index = 0
    for split, count, kinds in plan:
        collected = 0
        attempts = 0
        budget = max(20, 4 * count)
        while collected < count:
            if attempts >= budget:
                raise HarnessError(f"collection stalled on split {split!r} after {attempts} attempts")
            kind = kinds[attempts % len(kinds)]
            attempts += 1
            global_index += 1
            seed = _scene_seed(config.seed, global_index)
            scene = build_scene(kind, seed)
            cam_rng = np.random.default_rng([config.seed, _STREAM_CAMERA, global_index])
            extrinsics = sample_camera_pose(cam_rng, config.camera, scene.target)
            gt_rng = np.random.default_rng([config.seed, _STREAM_CONTACT, global_index])
            try:
                gt = collect_ground_truth(scene, intr, extrinsics, gt_rng)
                prompt = derive_2d_prompts(gt, intr, extrinsics)
            except (SceneError, PromptError, GeometryError):
                skipped += 1
                continue
            frame = render_full(scene, intr, extrinsics)
            record_id = f"{split}-{collected:06d}"
            rgb_ref = f"frames/{record_id}_rgb.ppm"
            depth_ref = f"frames/{record_id}_depth.f32"
            rgb_blob = write_ppm(out_dir / rgb_ref, frame.rgb)
            depth_blob = frame.depth.to_bytes()
            (out_dir / depth_ref).parent.mkdir(parents=True, exist_ok=True)
            (out_dir / depth_ref).write_bytes(depth_blob)
            gt_px = project(gt.contact_point_3d, intr, extrinsics)
            records.append(
                DatasetRecord(
                    record_id=record_id,
                    split=split,
                    kind=kind,
                    scene_seed=seed,
                    joint_state=float(scene.joint.state),
                    primitive=scene.primitive,
                    camera={"intrinsics": intr.to_dict(), "extrinsics": extrinsics.to_dict()},
                    rgb_ref=rgb_ref,
                    rgb_sha256=sha256_hex(rgb_blob),
                    depth_ref=depth_ref,
                    depth_sha256=sha256_hex(depth_blob),
                    prompt=prompt.to_record(scene_ref=f"{kind}:{seed}"),
                    gt=gt.to_dict(),
                    gt_contact_px=[float(gt_px[0]), float(gt_px[1])],
                )
            )
            collected += 1
            if log and collected % 100 == 0:
                log(f"  {split}: {collected}/{count}")
    dataset = Dataset(out_dir, config, records, skipped=skipped)
    dataset.save()
    return dataset


# -- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class EvalOptions:
    predictor: str = "solver"  # gt | solver | toy
    prompt_source: str = "gt"  # gt | auto | perturbed
    noise_fraction: float = 0.0
    pattern: str = "PZYM"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "predictor": self.predictor,
            "prompt_source": self.prompt_source,
            "noise_fraction": self.noise_fraction,
            "pattern": self.pattern,
            "seed": self.seed,
        }


def _fallback_move_dir(primitive: str, z_axis: np.ndarray) -> np.ndarray:
    """Rule-based moving direction when the prompt pattern omits the yellow line.

    Pull-family tasks retract along the gripper -z (out of the surface);
    push-family tasks advance along +z.
    """
    return unit(z_axis) if primitive == "push" else -unit(z_axis)


def _build_prompt(dataset: Dataset, record: DatasetRecord, options: EvalOptions, index: int) -> CrayonPrompt:
    stored = dataset.prompt(record)
    if options.prompt_source == "gt":
        return stored.restrict(options.pattern)
    if options.prompt_source == "perturbed":
        rng = np.random.default_rng(
            [options.seed, _STREAM_NOISE, index, int(round(options.noise_fraction * 1000))]
        )
        return perturb(stored.restrict(options.pattern), options.noise_fraction, rng)
    if options.prompt_source == "auto":
        scene = dataset.scene(record)
        ctx = SelectorContext(gt_prompt=stored, want_move="M" in options.pattern)
        prompt = auto_prompt(scene, dataset.intrinsics, dataset.extrinsics(record), "oracle", ctx)
        return prompt.restrict(options.pattern) if prompt.pattern != options.pattern else prompt
    raise HarnessError(f"unknown prompt source {options.prompt_source!r}")


def _predict(
    dataset: Dataset,
    record: DatasetRecord,
    scene: Scene,
    prompt: CrayonPrompt,
    options: EvalOptions,
    toy_params: ToyModelParams | None,
):
    intr = dataset.intrinsics
    extr = dataset.extrinsics(record)
    if options.predictor == "gt":
        return dataset.gt_action(record)
    depth = dataset.depth(record)
    if options.predictor == "solver":
        contact = lift(prompt.contact_px, _depth_near(depth, prompt.contact_px, 3), intr, extr)
        hint = scene.free_direction(contact)
        cfg = SolverConfig(move_hint=hint)
        return lift_pose_geometric(prompt, depth, intr, extr, cfg)
    if options.predictor == "toy":
        if toy_params is None:
            raise HarnessError("toy predictor selected but no model parameters were given")
        return predict_toy(toy_params, prompt, depth, intr, extr)
    raise HarnessError(f"unknown predictor {options.predictor!r}")


def _angle_deg(a, b) -> float | None:
    if a is None or b is None:
        return None
    return float(np.degrees(np.arccos(np.clip(np.dot(unit(a), unit(b)), -1.0, 1.0))))


def evaluate_record(
    dataset: Dataset,
    record: DatasetRecord,
    options: EvalOptions,
    index: int,
    toy_params: ToyModelParams | None = None,
    exec_params: ExecParams | None = None,
) -> dict:
    """End-to-end outcome for one record; failures are data, not exceptions."""
    scene = dataset.scene(record)
    gt = dataset.gt_action(record)
    try:
        prompt = _build_prompt(dataset, record, options, index)
        action = _predict(dataset, record, scene, prompt, options, toy_params)
    except Exception as exc:
        return {
            "record_id": record.record_id,
            "kind": record.kind,
            "success": False,
            "failure_reason": "prediction_error",
            "displacement": 0.0,
            "err_z": None,
            "err_y": None,
            "err_m": None,
            "note": f"{type(exc).__name__}: {exc}",
        }
    if getattr(action, "move_dir", None) is None:
        action.move_dir = _fallback_move_dir(record.primitive, action.z_axis)
    outcome = execute(scene, action, exec_params)
    return {
        "record_id": record.record_id,
        "kind": record.kind,
        "success": bool(outcome.success),
        "failure_reason": outcome.failure_reason,
        "displacement": float(outcome.part_displacement),
        "err_z": _angle_deg(action.z_axis, gt.z_axis),
        "err_y": _angle_deg(action.y_axis, gt.y_axis),
        "err_m": _angle_deg(getattr(action, "move_dir", None), gt.move_dir),
        "note": "",
    }


def aggregate(rows: list[dict]) -> dict:
    """Exact success counting plus per-kind rates and angular statistics."""
    n = len(rows)
    wins = sum(1 for r in rows if r["success"])
    kinds = sorted({r["kind"] for r in rows})
    per_kind = {}
    for kind in kinds:
        sub = [r for r in rows if r["kind"] == kind]
        per_kind[kind] = rate(sum(1 for r in sub if r["success"]), len(sub))
    angular = {}
    for key in ("err_z", "err_y", "err_m"):
        values = [r[key] for r in rows if r[key] is not None]
        angular[key] = {
            "mean": float(np.mean(values)) if values else None,
            "median": float(statistics.median(values)) if values else None,
            "n": len(values),
        }
    return {"n": n, "success_rate": rate(wins, n), "per_kind": per_kind, "angular": angular}


def run_eval(
    dataset: Dataset,
    split: str,
    options: EvalOptions,
    toy_params: ToyModelParams | None = None,
    out_dir: Path | None = None,
    name: str = "eval",
) -> dict:
    """Evaluate every record in a split end to end and aggregate."""
    records = dataset.select(split)
    if not records:
        raise HarnessError(f"split {split!r} is empty")
    rows = [
        evaluate_record(dataset, record, options, index, toy_params)
        for index, record in enumerate(records)
    ]
    payload = {
        "split": split,
        "options": options.to_dict(),
        "config_fingerprint": fingerprint({**dataset.config.to_dict(), **options.to_dict()}),
        "seed": options.seed,
        "metrics": aggregate(rows),
        "rows": rows,
    }
    if out_dir is not None:
        write_report(out_dir, name, payload)
        write_csv(
            out_dir,
            name,
            ["record_id", "kind", "success", "failure_reason", "displacement", "err_z", "err_y", "err_m"],
            [
                [r["record_id"], r["kind"], int(r["success"]), r["failure_reason"] or "", f"{r['displacement']:.6f}"]
                + [("" if r[k] is None else f"{r[k]:.4f}") for k in ("err_z", "err_y", "err_m")]
                for r in rows
            ],
        )
        metrics = payload["metrics"]
        labels = sorted(metrics["per_kind"])
        figure_bars(
            out_dir,
            f"{name}_per_kind",
            labels,
            [metrics["per_kind"][k]["value"] or 0.0 for k in labels],
            "success rate",
            f"{name}: success by scene kind",
        )
    return payload


def run_noise_sweep(
    dataset: Dataset,
    split: str,
    options: EvalOptions,
    fractions: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4),
    toy_params: ToyModelParams | None = None,
    out_dir: Path | None = None,
) -> dict:
    """Success rate as directional-prompt noise grows, on a paired record set."""
    series = []
    for f in fractions:
        opts = EvalOptions(
            predictor=options.predictor,
            prompt_source="gt" if f == 0.0 else "perturbed",
            noise_fraction=f,
            pattern=options.pattern,
            seed=options.seed,
        )
        payload = run_eval(dataset, split, opts, toy_params)
        series.append({"fraction": f, "metrics": payload["metrics"]})
    sweep = {
        "split": split,
        "predictor": options.predictor,
        "seed": options.seed,
        "config_fingerprint": fingerprint({**dataset.config.to_dict(), **options.to_dict(), "sweep": "noise"}),
        "series": series,
    }
    if out_dir is not None:
        write_report(out_dir, "noise_sweep", sweep)
        write_csv(
            out_dir,
            "noise_sweep",
            ["fraction", "successes", "trials", "success_rate"],
            [
                [s["fraction"], s["metrics"]["success_rate"]["num"], s["metrics"]["success_rate"]["den"],
                 "" if s["metrics"]["success_rate"]["value"] is None else f"{s['metrics']['success_rate']['value']:.6f}"]
                for s in series
            ],
        )
        figure_line(
            out_dir,
            "noise_sweep",
            [s["fraction"] for s in series],
            [s["metrics"]["success_rate"]["value"] or 0.0 for s in series],
            "noise fraction",
            "success rate",
            "Noise tolerance",
        )
    return sweep


def run_prompt_ablation(
    dataset: Dataset,
    split: str,
    options: EvalOptions,
    patterns: tuple[str, ...] = ("P", "PZ", "PZY", "PZYM"),
    toy_params: ToyModelParams | None = None,
    out_dir: Path | None = None,
) -> dict:
    """Success rate as prompt information grows (paired comparisons)."""
    series = []
    for pattern in patterns:
        opts = EvalOptions(
            predictor=options.predictor,
            prompt_source=options.prompt_source,
            noise_fraction=options.noise_fraction,
            pattern=pattern,
            seed=options.seed,
        )
        payload = run_eval(dataset, split, opts, toy_params)
        series.append({"pattern": pattern, "metrics": payload["metrics"]})
    sweep = {
        "split": split,
        "predictor": options.predictor,
        "seed": options.seed,
        "config_fingerprint": fingerprint({**dataset.config.to_dict(), **options.to_dict(), "sweep": "patterns"}),
        "series": series,
    }
    if out_dir is not None:
        write_report(out_dir, "prompt_ablation", sweep)
        write_csv(
            out_dir,
            "prompt_ablation",
            ["pattern", "successes", "trials", "success_rate"],
            [
                [s["pattern"], s["metrics"]["success_rate"]["num"], s["metrics"]["success_rate"]["den"],
                 "" if s["metrics"]["success_rate"]["value"] is None else f"{s['metrics']['success_rate']['value']:.6f}"]
                for s in series
            ],
        )
        figure_bars(
            out_dir,
            "prompt_ablation",
            [s["pattern"] for s in series],
            [s["metrics"]["success_rate"]["value"] or 0.0 for s in series],
            "success rate",
            "Prompt-type ablation",
        )
    return sweep


def build_train_samples(dataset: Dataset, split: str = "train") -> list[TrainSample]:
    samples = []
    for record in dataset.select(split):
        samples.append(
            TrainSample(
                prompt=dataset.prompt(record),
                depth=dataset.depth(record),
                intrinsics=dataset.intrinsics,
                extrinsics=dataset.extrinsics(record),
                gt_action=dataset.gt_action(record),
                gt_contact_px=np.asarray(record.gt_contact_px, dtype=float),
            )
        )
    return samples


def pose_accuracy(rows: list[dict], tol_deg: float = 15.0) -> dict:
    """Fraction of rows whose predicted directions are all within tolerance."""
    ok = 0
    for r in rows:
        errs = [r[k] for k in ("err_z", "err_y", "err_m") if r[k] is not None]
        if errs and max(errs) <= tol_deg:
            ok += 1
    return rate(ok, len(rows))


LOSS_ABLATION_STAGES = (
    ("text_only", LossWeights(1.0, 0.0, 0.0)),
    ("text_ortho", LossWeights(1.0, 1.0, 0.0)),
    ("all_terms", LossWeights(1.0, 1.0, 1.0)),
)


def run_loss_ablation(
    dataset: Dataset,
    train_split: str = "train",
    eval_split: str = "test_seen",
    epochs: int = 120,
    seed: int = 0,
    curriculum: CurriculumSpec | None = None,
    out_dir: Path | None = None,
) -> dict:
    """Train three toy models under growing loss stacks and score them.

    All three trainings share the seed, so initialization, curriculum draws,
    and batch order are identical and differences come from the loss terms
    alone. The score is strict pose accuracy (all directions within 15
    degrees); the execution success rate is reported alongside.
    """
    samples = build_train_samples(dataset, train_split)
    if not samples:
        raise HarnessError(f"no training samples in split {train_split!r}")
    series = []
    curves = {}
    for name, weights in LOSS_ABLATION_STAGES:
        params = train_toy_model(samples, weights=weights, curriculum=curriculum, epochs=epochs, seed=seed)
        opts = EvalOptions(predictor="toy", prompt_source="gt", pattern="PZYM", seed=seed)
        payload = run_eval(dataset, eval_split, opts, toy_params=params)
        score = pose_accuracy(payload["rows"])
        series.append(
            {
                "stage": name,
                "weights": weights.to_dict(),
                "score": score,
                "metrics": payload["metrics"],
                "final_train_loss": params.loss_curve[-1] if params.loss_curve else None,
            }
        )
        curves[name] = params.loss_curve
    result = {
        "train_split": train_split,
        "eval_split": eval_split,
        "epochs": epochs,
        "seed": seed,
        "config_fingerprint": fingerprint({**dataset.config.to_dict(), "sweep": "losses", "seed": seed, "epochs": epochs}),
        "series": series,
    }
    if out_dir is not None:
        write_report(out_dir, "loss_ablation", result)
        write_csv(
            out_dir,
            "loss_ablation",
            ["stage", "score", "success_rate"],
            [
                [s["stage"],
                 "" if s["score"]["value"] is None else f"{s['score']['value']:.6f}",
                 "" if s["metrics"]["success_rate"]["value"] is None else f"{s['metrics']['success_rate']['value']:.6f}"]
                for s in series
            ],
        )
        figure_bars(
            out_dir,
            "loss_ablation",
            [s["stage"] for s in series],
            [s["score"]["value"] or 0.0 for s in series],
            "pose accuracy",
            "Loss ablation",
        )
        figure_loss_curves(out_dir, "loss_curves", curves, "Toy-model training loss")
    return result


def make_plan_predictor(
    predictor: str,
    intrinsics: CameraIntrinsics,
    toy_params: ToyModelParams | None = None,
):
    """Predictor callable for plan execution: (prompt, scene, intr, extr) -> action."""

    def predict(prompt: CrayonPrompt, scene: Scene, intr, extr):
        frame = render_full(scene, intr, extr)
        if predictor == "toy":
            if toy_params is None:
                raise HarnessError("toy predictor selected but no model parameters were given")
            return predict_toy(toy_params, prompt, frame.depth, intr, extr)
        contact = lift(prompt.contact_px, _depth_near(frame.depth, prompt.contact_px, 3), intr, extr)
        cfg = SolverConfig(move_hint=scene.free_direction(contact))
        return lift_pose_geometric(prompt, frame.depth, intr, extr, cfg)

    return predict


def run_longhorizon(
    config: CollectionConfig,
    episodes: int = 50,
    kinds: tuple[str, ...] = ("drawer", "door"),
    predictor: str = "solver",
    seed: int = 0,
    toy_params: ToyModelParams | None = None,
    out_dir: Path | None = None,
) -> dict:
    """Two-step pull-then-push episodes with ground-truth prompts per key-frame.

    The second key-frame prompt is derived from the scene state after the
    first step, matching the observe-then-draw workflow. Overall success is
    the exact conjunction of the two step successes.
    """
    intr = config.intrinsics()
    predict = make_plan_predictor(predictor, intr, toy_params)
    rows = []
    resolved_plans = []
    for episode in range(episodes):
        kind = kinds[episode % len(kinds)]
        scene_seed = _scene_seed(seed, 900_000 + episode)
        scene = build_scene(kind, scene_seed)
        cam_rng = np.random.default_rng([seed, _STREAM_LONGHORIZON, episode])
        extr = sample_camera_pose(cam_rng, config.camera, scene.target)

        def gt_prompt(sign: float, step: int):
            def provider(sc, intr_, extr_):
                rng = np.random.default_rng([seed, _STREAM_LONGHORIZON, episode, 100 + step])
                gt = collect_ground_truth(sc, intr_, extr_, rng, sign=sign)
                return derive_2d_prompts(gt, intr_, extr_)

            return provider

        plan = KeyFramePlan(
            steps=[
                PlanStep(prompt=gt_prompt(+1.0, 0), primitive="pull"),
                PlanStep(prompt=gt_prompt(-1.0, 1), primitive="push"),
            ]
        )
        try:
            run = execute_plan(scene, plan, predict, intr, extr)
            step_ok = [r.success for r in run.step_results]
            overall = run.overall_success
            resolved_plans.append(
                {
                    "episode": episode,
                    "kind": kind,
                    "scene_seed": scene_seed,
                    "plan": KeyFramePlan(
                        steps=[
                            PlanStep(prompt=p, primitive=s.primitive)
                            for p, s in zip(run.resolved_prompts, plan.steps)
                        ]
                    ).to_record(),
                }
            )
        except (SceneError, PromptError, PredictorError) as exc:
            step_ok, overall = [], False
            resolved_plans.append({"episode": episode, "kind": kind, "scene_seed": scene_seed, "error": str(exc)})
        rows.append(
            {
                "episode": episode,
                "kind": kind,
                "step_success": step_ok,
                "overall": bool(overall),
            }
        )
    wins = sum(1 for r in rows if r["overall"])
    step1 = rate(sum(1 for r in rows if len(r["step_success"]) > 0 and r["step_success"][0]), len(rows))
    step2 = rate(sum(1 for r in rows if len(r["step_success"]) > 1 and r["step_success"][1]), len(rows))
    payload = {
        "episodes": episodes,
        "kinds": list(kinds),
        "predictor": predictor,
        "seed": seed,
        "config_fingerprint": fingerprint({**config.to_dict(), "sweep": "longhorizon", "seed": seed}),
        "overall_rate": rate(wins, len(rows)),
        "step1_rate": step1,
        "step2_rate": step2,
        "rows": rows,
    }
    if out_dir is not None:
        write_report(out_dir, "longhorizon", payload)
        write_text(
            Path(out_dir) / "longhorizon_plans.jsonl",
            "\n".join(canonical_dumps(p) for p in resolved_plans) + "\n",
        )
        write_csv(
            out_dir,
            "longhorizon",
            ["episode", "kind", "step1", "step2", "overall"],
            [
                [r["episode"], r["kind"],
                 int(r["step_success"][0]) if len(r["step_success"]) > 0 else "",
                 int(r["step_success"][1]) if len(r["step_success"]) > 1 else "",
                 int(r["overall"])]
                for r in rows
            ],
        )
        figure_bars(
            out_dir,
            "longhorizon",
            ["step 1", "step 2", "overall"],
            [step1["value"] or 0.0, step2["value"] or 0.0, payload["overall_rate"]["value"] or 0.0],
            "success rate",
            "Two-step pull-then-push",
        )
    return payload
