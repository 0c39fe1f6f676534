"""Command-line surface tying the workbench together.

Subcommands: collect, train, eval, sweep-noise, sweep-prompts, sweep-losses,
longhorizon, serve, replay. All outputs land under --out as structured text
records, delimited CSV tables, raster files, and rendered figures; repeated
runs with the same seed and config are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    CollectionConfig,
    Dataset,
    EvalOptions,
    build_train_samples,
    run_collection,
    run_eval,
    run_longhorizon,
    run_loss_ablation,
    run_noise_sweep,
    run_prompt_ablation,
)
from .objective import LossWeights
from .predictor import load_toy_model, save_toy_model, train_toy_model
from .records import loads_record
from .reporting import figure_loss_curves, write_report


def _load_config(args) -> CollectionConfig:
    overrides: dict = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        overrides["seed"] = args.seed
    return CollectionConfig.from_dict({**CollectionConfig().to_dict(), **overrides})


def _parse_prompt_source(text: str) -> tuple[str, float]:
    if text.startswith("perturbed="):
        return "perturbed", float(text.split("=", 1)[1])
    if text in ("gt", "auto"):
        return text, 0.0
    raise argparse.ArgumentTypeError("prompt source must be gt, auto, or perturbed=<fraction>")


def _toy_params(args):
    if getattr(args, "model", None):
        return load_toy_model(args.model)
    return None


def cmd_collect(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = run_collection(config, out / "dataset", log=lambda m: print(m, flush=True))
    counts = {s: len(dataset.select(s)) for s in ("train", "test_seen", "test_unseen")}
    print(f"collected {counts} (skipped {dataset.skipped}) -> {out / 'dataset'}")
    return 0


def cmd_train(args) -> int:
    dataset = Dataset.load(Path(args.dataset))
    samples = build_train_samples(dataset, "train")
    weights = LossWeights(*[float(v) for v in args.losses.split(",")])
    params = train_toy_model(samples, weights=weights, epochs=args.epochs, seed=args.seed or 0)
    out = Path(args.out)
    model_path = out / "toy_model.bin"
    save_toy_model(params, model_path)
    write_report(
        out,
        "train",
        {
            "seed": args.seed or 0,
            "epochs": args.epochs,
            "weights": weights.to_dict(),
            "config_hash": params.config_hash,
            "loss_curve": params.loss_curve,
            "n_samples": len(samples),
        },
    )
    figure_loss_curves(out, "train_loss", {"train": params.loss_curve}, "Toy-model training loss")
    print(f"trained on {len(samples)} samples -> {model_path} (final loss {params.loss_curve[-1]:.4f})")
    return 0


def cmd_eval(args) -> int:
    dataset = Dataset.load(Path(args.dataset))
    source, fraction = _parse_prompt_source(args.prompt_source)
    options = EvalOptions(
        predictor=args.predictor,
        prompt_source=source,
        noise_fraction=fraction,
        pattern=args.pattern,
        seed=args.seed or 0,
    )
    payload = run_eval(dataset, args.split, options, toy_params=_toy_params(args), out_dir=Path(args.out), name="eval")
    sr = payload["metrics"]["success_rate"]
    print(f"eval[{args.split}] predictor={args.predictor} source={args.prompt_source}: "
          f"success {sr['num']}/{sr['den']} ({sr['value']:.3f})")
    return 0


def cmd_sweep_noise(args) -> int:
    dataset = Dataset.load(Path(args.dataset))
    options = EvalOptions(predictor=args.predictor, seed=args.seed or 0)
    sweep = run_noise_sweep(dataset, args.split, options, toy_params=_toy_params(args), out_dir=Path(args.out))
    for row in sweep["series"]:
        sr = row["metrics"]["success_rate"]
        print(f"noise {row['fraction']:.1f}: {sr['num']}/{sr['den']} ({sr['value']:.3f})")
    return 0


def cmd_sweep_prompts(args) -> int:
    dataset = Dataset.load(Path(args.dataset))
    options = EvalOptions(predictor=args.predictor, seed=args.seed or 0)
    sweep = run_prompt_ablation(dataset, args.split, options, toy_params=_toy_params(args), out_dir=Path(args.out))
    for row in sweep["series"]:
        sr = row["metrics"]["success_rate"]
        print(f"pattern {row['pattern']}: {sr['num']}/{sr['den']} ({sr['value']:.3f})")
    return 0


def cmd_sweep_losses(args) -> int:
    dataset = Dataset.load(Path(args.dataset))
    result = run_loss_ablation(
        dataset,
        epochs=args.epochs,
        seed=args.seed or 0,
        out_dir=Path(args.out),
    )
    for row in result["series"]:
        print(f"{row['stage']}: pose accuracy {row['score']['value']:.3f}, "
              f"success {row['metrics']['success_rate']['value']:.3f}")
    return 0


def cmd_longhorizon(args) -> int:
    config = _load_config(args)
    payload = run_longhorizon(
        config,
        episodes=args.episodes,
        predictor=args.predictor,
        seed=args.seed or 0,
        toy_params=_toy_params(args),
        out_dir=Path(args.out),
    )
    print(f"longhorizon overall {payload['overall_rate']['num']}/{payload['overall_rate']['den']} "
          f"({payload['overall_rate']['value']:.3f})")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(predictor=args.predictor, toy_params=_toy_params(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    from .service import replay_history

    record = loads_record(Path(args.record).read_text(), expect="session_history")
    result = replay_history(record, toy_params=_toy_params(args))
    if args.out:
        write_report(Path(args.out), "replay", result)
    status = "match" if result["match"] else "MISMATCH"
    print(f"replay {status}: final joint state {result['final_joint_state']:.9f} "
          f"(recorded {result['recorded_final_joint_state']:.9f})")
    return 0 if result["match"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crayonbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_dataset=False, needs_out=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=str, default=None, help="JSON config overriding collection defaults")
        if needs_out:
            p.add_argument("--out", type=str, required=True, help="output directory")
        if needs_dataset:
            p.add_argument("--dataset", type=str, required=True, help="dataset directory")

    p = sub.add_parser("collect", help="collect a dataset of verified prompts")
    common(p)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train the toy predictor")
    common(p, needs_dataset=True)
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--losses", type=str, default="1,1,1", help="lambda weights text,ortho,proj")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="end-to-end evaluation of a split")
    common(p, needs_dataset=True)
    p.add_argument("--split", type=str, default="test_seen")
    p.add_argument("--predictor", type=str, default="solver", choices=("gt", "solver", "toy"))
    p.add_argument("--prompt-source", type=str, default="gt", help="gt | auto | perturbed=<fraction>")
    p.add_argument("--pattern", type=str, default="PZYM")
    p.add_argument("--model", type=str, default=None, help="toy model file for --predictor toy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-noise", help="noise-tolerance sweep")
    common(p, needs_dataset=True)
    p.add_argument("--split", type=str, default="test_seen")
    p.add_argument("--predictor", type=str, default="solver", choices=("gt", "solver", "toy"))
    p.add_argument("--model", type=str, default=None)
    p.set_defaults(func=cmd_sweep_noise)

    p = sub.add_parser("sweep-prompts", help="prompt-type ablation sweep")
    common(p, needs_dataset=True)
    p.add_argument("--split", type=str, default="test_seen")
    p.add_argument("--predictor", type=str, default="solver", choices=("gt", "solver", "toy"))
    p.add_argument("--model", type=str, default=None)
    p.set_defaults(func=cmd_sweep_prompts)

    p = sub.add_parser("sweep-losses", help="loss-ablation: train three toy models")
    common(p, needs_dataset=True)
    p.add_argument("--epochs", type=int, default=120)
    p.set_defaults(func=cmd_sweep_losses)

    p = sub.add_parser("longhorizon", help="two-step pull-then-push episodes")
    common(p)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--predictor", type=str, default="solver", choices=("solver", "toy"))
    p.add_argument("--model", type=str, default=None)
    p.set_defaults(func=cmd_longhorizon)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=8900)
    p.add_argument("--predictor", type=str, default="solver", choices=("solver", "toy"))
    p.add_argument("--model", type=str, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay a session history record")
    p.add_argument("--record", type=str, required=True, help="session history JSON file")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--model", type=str, default=None)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
