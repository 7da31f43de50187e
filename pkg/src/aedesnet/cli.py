"""Command-line entry point: train, evaluate, predict, export, dump,
serve, and synth subcommands.

Machine-readable JSON goes to stdout; progress and reports go to stderr,
so output can be piped safely.  Exit codes: 0 success, 1 runtime failure,
2 usage error.  Every subcommand takes --seed and --strict; strict mode
pins the numeric libraries to one thread for bit-identical reruns, which
is why the heavyweight imports happen inside the handlers, after the
environment is pinned.  Environment variables never override flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .errors import AedesnetError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_single_thread() -> None:
    for var in _THREAD_VARS:
        os.environ[var] = "1"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _size(text: str) -> tuple[int, int]:
    """'64' -> (64, 64); '120x180' -> (120, 180)."""
    parts = text.lower().replace(",", "x").split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad image size {text!r}, expected H or HxW")
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"bad image size {text!r}, expected H or HxW")
    return (dims[0], dims[1])


def _ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"bad split {text!r}, expected three comma-separated ratios"
        )
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}")


def _bind(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"bad bind address {text!r}, expected HOST:PORT")
    return (host or "127.0.0.1", int(port))


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_train(args) -> int:
    from . import __version__
    from .data import (
        directory_fingerprint,
        generate_synthetic_dataset,
        load_dataset,
        split_dataset,
    )
    from .model import build_model, reference16
    from .modelfmt import ModelMeta, save_model
    from .rng import Rng
    from .train import TrainConfig, metrics_to_csv, metrics_to_json, train

    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        split_ratios=args.split,
        use_zca=args.zca,
    )
    config.validate()
    image_size = args.image_size

    if args.synthetic is not None:
        dataset = generate_synthetic_dataset(args.synthetic, image_size=image_size,
                                             rng=Rng(config.seed))
        fingerprint = {"kind": "synthetic", "n_per_class": args.synthetic,
                       "image_size": list(image_size)}
        _note(f"generated {len(dataset)} synthetic samples at "
              f"{image_size[0]}x{image_size[1]}")
    else:
        dataset, report = load_dataset(args.data, image_size=image_size)
        count, digest = directory_fingerprint(args.data)
        fingerprint = {"kind": "directory", "count": count, "sha256": digest}
        for line in report.lines():
            _note(line)

    dataset = split_dataset(dataset, config.split_ratios,
                            Rng(config.seed).substream("split"))
    _note(f"split: train={len(dataset.split.train)} val={len(dataset.split.val)} "
          f"test={len(dataset.split.test)}")

    spec = reference16((image_size[0], image_size[1], 3),
                       conv_dropout=config.conv_dropout,
                       dense_dropout=config.dense_dropout)
    model = build_model(spec, Rng(config.seed).substream("init"),
                        dtype=config.precision)

    def progress(m):
        _note(f"epoch {m.epoch}/{config.epochs} "
              f"train_loss={m.train_loss:.4f} acc={m.acc:.4f} "
              f"val_loss={m.val_loss:.4f} val_acc={m.val_acc:.4f}")

    result = train(model, dataset, config, progress=progress)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.maed"
    meta = ModelMeta(class_names=dataset.class_names, input_shape=spec.input_shape,
                     threshold=args.threshold, model_version=__version__,
                     seed=config.seed)
    written = save_model(result.model, result.stats, model_path, meta=meta)
    (out_dir / "metrics.csv").write_text(metrics_to_csv(result.metrics))
    (out_dir / "metrics.json").write_text(metrics_to_json(result.metrics))
    manifest = {
        "config": asdict(config),
        "dataset": fingerprint,
        "seed": config.seed,
        "strict": bool(args.strict),
        "tool_version": __version__,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    final = result.metrics[-1]
    _emit({
        "model": str(model_path),
        "model_bytes": written,
        "epochs": config.epochs,
        "final_acc": final.acc,
        "final_val_acc": final.val_acc,
        "final_val_loss": final.val_loss,
        "manifest": str(out_dir / "manifest.json"),
        "metrics_csv": str(out_dir / "metrics.csv"),
        "metrics_json": str(out_dir / "metrics.json"),
    })
    return 0


def cmd_evaluate(args) -> int:
    from .data import load_dataset
    from .modelfmt import load_model
    from .train import evaluate

    model, stats, meta = load_model(args.model)
    dataset, report = load_dataset(args.data, image_size=model.spec.input_shape[:2])
    for line in report.lines():
        _note(line)
    indices = range(len(dataset))
    result = evaluate(model, dataset.images(indices), dataset.labels(indices),
                      stats, batch_size=args.batch_size)
    _emit({
        "accuracy": result.accuracy,
        "count": result.total,
        "tp": result.tp,
        "tn": result.tn,
        "fp": result.fp,
        "fn": result.fn,
        "model_version": meta.model_version,
    })
    return 0


def cmd_predict(args) -> int:
    from .errors import InputError
    from .service import ModelBundle, classify_bytes

    bundle = ModelBundle.from_file(args.model)
    failures = 0
    for image_path in args.images:
        try:
            data = Path(image_path).read_bytes()
            result = classify_bytes(bundle, data, threshold=args.threshold)
        except (OSError, InputError) as exc:
            print(json.dumps({"path": str(image_path), "error": str(exc)},
                             sort_keys=True))
            failures += 1
            continue
        print(json.dumps({
            "path": str(image_path),
            "score": result.score,
            "label": result.label,
            "warnings": list(result.warnings),
        }, sort_keys=True))
    return 1 if failures else 0


def cmd_export(args) -> int:
    from dataclasses import replace

    from .modelfmt import load_model, save_model

    model, stats, meta = load_model(args.model)
    if args.threshold is not None:
        meta = replace(meta, threshold=args.threshold)
    if args.model_version is not None:
        meta = replace(meta, model_version=args.model_version)
    written = save_model(model, stats, args.out, meta=meta)
    _emit({"out": str(args.out), "bytes": written,
           "model_version": meta.model_version, "threshold": meta.threshold})
    return 0


def cmd_dump(args) -> int:
    from .modelfmt import dump

    print(dump(args.model))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    host, port = args.bind
    _note(f"serving {args.model} on http://{host}:{port}")
    serve(args.model, host=host, port=port, threshold=args.threshold,
          cors_origins=tuple(args.cors), static_dir=args.ui)
    return 0


def cmd_synth(args) -> int:
    from .data import generate_synthetic_dataset, write_dataset_pngs
    from .rng import Rng

    dataset = generate_synthetic_dataset(args.n_per_class, image_size=args.image_size,
                                         rng=Rng(args.seed))
    counts = write_dataset_pngs(dataset, args.out)
    _emit({"out": str(args.out), "written": len(dataset), "classes": counts})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aedesnet",
        description="Train, inspect, and serve the mosquito species classifier.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="root random seed (default 0)")
    common.add_argument("--strict", action="store_true",
                        help="single-threaded deterministic mode")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fit a model and write the artifact")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="dataset root with one subdirectory per class")
    source.add_argument("--synthetic", type=_positive_int, metavar="N",
                        help="generate N synthetic samples per class instead")
    p.add_argument("--image-size", type=_size, default=(180, 180),
                   help="input size H or HxW (default 180)")
    p.add_argument("--epochs", type=_positive_int, default=30)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--split", type=_ratios, default=(0.7, 0.2, 0.1),
                   help="train,val,test ratios (default 0.7,0.2,0.1)")
    p.add_argument("--zca", action="store_true",
                   help="fit and persist whitening (small images only)")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="decision threshold stored in the artifact")
    p.add_argument("--out", default="run", help="output directory (default ./run)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="accuracy and confusion counts on a labeled directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="score image files")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=None,
                   help="override the stored decision threshold")
    p.add_argument("images", nargs="+", metavar="IMAGE")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("export", parents=[common],
                       help="rewrite an artifact, optionally updating metadata")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--model-version", default=None)
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("dump", parents=[common], help="debug view of an artifact file")
    p.add_argument("--model", required=True)
    p.set_defaults(handler=cmd_dump)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--bind", type=_bind, default=("127.0.0.1", 8000),
                   metavar="HOST:PORT")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--cors", action="append", default=None, metavar="ORIGIN",
                   help="allowed CORS origin, repeatable (default any)")
    p.add_argument("--ui", default=None, metavar="DIR",
                   help="also serve a static web UI from this directory")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("synth", parents=[common],
                       help="write a synthetic dataset as PNG files")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=_positive_int, required=True)
    p.add_argument("--image-size", type=_size, default=(64, 64))
    p.set_defaults(handler=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.strict:
        _pin_single_thread()
    if getattr(args, "cors", None) is None and args.command == "serve":
        args.cors = ["*"]
    try:
        return args.handler(args)
    except AedesnetError as exc:
        _note(f"error: {exc}")
        return 1
    except OSError as exc:
        _note(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
