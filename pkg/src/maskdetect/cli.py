"""Command-line front end.

Seven subcommands cover the full workflow::

    maskdetect scan     ROOT [ROOT ...]   index a corpus, write a manifest
    maskdetect synth    --out DIR         generate a synthetic corpus
    maskdetect train    --data DIR        two-phase training run
    maskdetect sweep    --data DIR        classifier-head architecture sweep
    maskdetect evaluate --data DIR        score a checkpoint on one split
    maskdetect detect   --image F.ppm     face boxes from a sliding-window cascade
    maskdetect annotate --image F.ppm     detect + classify + draw boxes

Configuration is a JSON document with sections ``data``, ``backbone``,
``head``, ``train``, ``detect`` and ``output``.  Every scalar leaf can be
overridden on the command line with a dotted flag (``--train.batch_size 16``,
``--backbone.width_mult 0.5``); list-valued leaves (split ratios, stem widths,
zoom range) can only be changed through a config file.  Precedence is
flags > config file > built-in defaults, and the merged result is echoed
into the output location so every run records exactly what it ran with.

Exit codes: 0 success, 1 runtime failure (bad file contents, I/O), 2
usage or configuration error.  All error text goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .cascade import (
    DetectParams,
    detect,
    load_cascade_json,
    load_cascade_xml,
    to_grayscale,
)
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .data import (
    LABEL_NAMES,
    SPLIT_NAMES,
    apply_split_manifest,
    batches,
    load_ppm,
    normalize,
    resize_bilinear,
    save_ppm,
    save_split_manifest,
    scan_dataset,
    split_dataset,
    synth_dataset,
)
from .errors import (
    ConfigError,
    InputError,
    MaskDetectError,
    ParameterError,
    UsageError,
)
from .metrics import render_report
from .nn import BackboneConfig, HeadConfig, build_model, desk_backbone
from .tensor import Tensor
from .training import (
    TrainConfig,
    evaluate,
    restore_state,
    sweep,
    two_phase_train,
    write_logs,
    write_sweep_csv,
    write_sweep_json,
)

# box colours per predicted class (with / without / incorrect)
CLASS_COLORS = {
    0: (0, 255, 0),
    1: (255, 0, 0),
    2: (255, 165, 0),
}

# error classes that indicate the *user* got something wrong -> exit 2
_USAGE_ERRORS = (ConfigError, UsageError, InputError, ParameterError)


# ---------------------------------------------------------------------------
# run configuration: defaults, dotted-flag overrides, merge
# ---------------------------------------------------------------------------


def default_config() -> dict:
    """The built-in run configuration (desk-scale model, standard recipe)."""
    return {
        "data": {
            "layout": "native",
            "split_seed": 0,
            "ratios": [0.70, 0.15, 0.15],
        },
        "backbone": desk_backbone().to_dict(),
        "head": HeadConfig().to_dict(),
        "train": TrainConfig().to_dict(),
        "detect": {
            "scale_factor": 1.1,
            "step": 2,
            "min_size": 24,
            "min_neighbors": 3,
        },
        "output": {
            "save_best": True,
        },
    }


def config_leaves(config: dict, prefix: str = "") -> dict:
    """Dotted paths of every scalar leaf, mapped to its value.

    Lists never appear: they stay config-file only because a flag value
    has no unambiguous list syntax worth inventing.
    """
    out = {}
    for key, value in config.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(config_leaves(value, dotted + "."))
        elif isinstance(value, (bool, int, float, str)):
            out[dotted] = value
    return out


def _parse_leaf(raw: str, default, dotted: str, problems: list):
    """Convert a flag string to the type of the default it overrides."""
    if isinstance(default, bool):  # bool before int: bool is an int subclass
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        problems.append(f"--{dotted}: expected a boolean, got {raw!r}")
        return None
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            problems.append(f"--{dotted}: expected an integer, got {raw!r}")
            return None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            problems.append(f"--{dotted}: expected a number, got {raw!r}")
            return None
    return raw


def _merge_section(base: dict, override: dict, path: str, problems: list) -> dict:
    """Overlay a config-file dict onto the defaults, rejecting unknown keys."""
    merged = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            problems.append(f"unknown config key: {where}")
            continue
        if isinstance(base[key], dict):
            if value is None:
                merged[key] = None  # e.g. "augment": null disables that block
            elif isinstance(value, dict):
                merged[key] = _merge_section(base[key], value, where, problems)
            else:
                problems.append(f"config key {where} expects an object or null")
        else:
            merged[key] = value
    return merged


def _assign(config: dict, dotted: str, value, problems: list) -> None:
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node[part]
        if node is None:
            problems.append(
                f"--{dotted}: section was disabled (null) in the config file"
            )
            return
    node[parts[-1]] = value


def load_config(args: argparse.Namespace) -> dict:
    """Defaults <- config file <- dotted flags, with every problem listed."""
    config = default_config()
    problems: list[str] = []

    path = getattr(args, "config", None)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_config = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(file_config, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        config = _merge_section(config, file_config, "", problems)

    flags = vars(args)
    for dotted, default in config_leaves(default_config()).items():
        raw = flags.get(dotted)
        if raw is None:
            continue
        value = _parse_leaf(raw, default, dotted, problems)
        if value is None:
            continue
        _assign(config, dotted, value, problems)

    if problems:
        raise ConfigError(
            "config validation failed:\n  " + "\n  ".join(problems)
        )
    return config


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(out_dir: str, config: dict) -> None:
    _write_json(os.path.join(out_dir, "config.json"), config)


def _prepare_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _split_index(data_root, config, split_manifest=None):
    index = scan_dataset(data_root, layout=config["data"]["layout"])
    for warning in index.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if len(index) == 0:
        raise InputError(f"no samples found under {data_root}")
    if split_manifest is not None:
        return apply_split_manifest(index, split_manifest)
    return split_dataset(
        index,
        ratios=tuple(config["data"]["ratios"]),
        seed=config["data"]["split_seed"],
    )


def _model_from_config(config):
    backbone = BackboneConfig.from_dict(config["backbone"])
    head = HeadConfig.from_dict(config["head"])
    return build_model(backbone, head, seed=config["train"]["seed"])


def _eval_split(model, index, split, batch_size):
    stream = batches(
        index,
        split,
        batch_size,
        shuffle=False,
        image_size=model.backbone_config.input_size,
    )
    return evaluate(model, stream)


def _write_eval_outputs(out_dir: str, result, extra: dict | None = None) -> None:
    """metrics.json + report.txt + confusion.csv for one evaluation."""
    payload = result.report.to_dict()
    payload["loss"] = result.loss
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out_dir, "metrics.json"), payload)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_report(result.report) + "\n")
    with open(os.path.join(out_dir, "confusion.csv"), "w", encoding="utf-8") as fh:
        fh.write(result.cm.to_csv())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_scan(args: argparse.Namespace) -> int:
    index = scan_dataset(args.roots, layout=args.layout)
    manifest = {
        "layout": args.layout,
        "roots": [os.fspath(r) for r in args.roots],
        "total": len(index),
        "counts": index.class_counts(),
        "source_counts": index.source_counts,
        "warnings": index.warnings,
        "samples": [
            {"path": s.path, "label": LABEL_NAMES[s.label]} for s in index.samples
        ],
    }
    _write_json(args.out, manifest)
    for warning in index.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    counts = " ".join(f"{k}={v}" for k, v in index.class_counts().items())
    print(f"scanned {len(index)} samples ({counts}) -> {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    index = synth_dataset(args.n, args.size, args.seed, args.out)
    meta = {
        "n_per_class": args.n,
        "image_size": args.size,
        "seed": args.seed,
        "counts": index.class_counts(),
    }
    _write_json(os.path.join(args.out, "synth_config.json"), meta)
    print(f"wrote {len(index)} synthetic images to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args)
    train_config = TrainConfig.from_dict(config["train"])
    train_config.validate()
    out_dir = _prepare_out_dir(args.out)
    _echo_config(out_dir, config)

    index = _split_index(args.data, config, args.split_manifest)
    save_split_manifest(index, os.path.join(out_dir, "split.json"))

    model = _model_from_config(config)
    if args.init_backbone is not None:
        load_into(model, args.init_backbone, prefix="backbone.")
        print(f"loaded backbone weights from {args.init_backbone}")

    result = two_phase_train(model, index, train_config)
    for log in result.logs:
        print(
            f"epoch {log.epoch:3d} phase {log.phase}  "
            f"train_loss {log.train_loss:.4f} train_acc {log.train_acc:.4f}  "
            f"val_loss {log.val_loss:.4f} val_acc {log.val_acc:.4f}"
        )
    write_logs(result.logs, os.path.join(out_dir, "logs.csv"))
    save_checkpoint(model, os.path.join(out_dir, "final.ckpt"))

    # test-set metrics come from the best-validation weights
    restore_state(model, result.best_state)
    if config["output"]["save_best"]:
        save_checkpoint(model, os.path.join(out_dir, "best.ckpt"))
    test_result = _eval_split(model, index, "test", train_config.batch_size)
    _write_eval_outputs(
        out_dir,
        test_result,
        extra={
            "split": "test",
            "best_val_acc": result.best_val_acc,
            "best_epoch": result.best_epoch,
        },
    )
    print(render_report(test_result.report))
    print(
        f"test accuracy {test_result.accuracy:.4f} "
        f"(best val {result.best_val_acc:.4f} at epoch {result.best_epoch}) -> {out_dir}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args)
    base_config = TrainConfig.from_dict(config["train"])
    base_config.validate()
    out_dir = _prepare_out_dir(args.out)
    _echo_config(out_dir, config)

    index = _split_index(args.data, config, args.split_manifest)
    save_split_manifest(index, os.path.join(out_dir, "split.json"))

    backbone = BackboneConfig.from_dict(config["backbone"])
    result = sweep(index, backbone, base_config, backbone_checkpoint=args.init_backbone)

    write_sweep_csv(result, os.path.join(out_dir, "sweep.csv"))
    write_sweep_json(result, os.path.join(out_dir, "sweep.json"))
    logs_dir = _prepare_out_dir(os.path.join(out_dir, "logs"))
    for key, logs in result.logs.items():
        write_logs(logs, os.path.join(logs_dir, f"{key}.csv"))

    for i, row in enumerate(result.rows):
        marker = " *" if i == result.best_index else ""
        print(
            f"{row.neurons:4d} neurons x {row.hidden_layers} layers  "
            f"train_acc {row.train_acc:.4f}  val_acc {row.val_acc:.4f}  "
            f"params {row.num_params}{marker}"
        )
    best = result.best_row
    print(
        f"best head: {best.neurons} neurons x {best.hidden_layers} layers "
        f"(val_acc {best.val_acc:.4f}) -> {out_dir}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.split not in SPLIT_NAMES:
        raise ParameterError(
            f"unknown split '{args.split}'; expected one of {list(SPLIT_NAMES)}"
        )
    out_dir = _prepare_out_dir(args.out)
    _echo_config(out_dir, config)

    model = load_checkpoint(args.checkpoint)
    index = _split_index(args.data, config, args.split_manifest)
    result = _eval_split(model, index, args.split, config["train"]["batch_size"])
    _write_eval_outputs(
        out_dir, result, extra={"split": args.split, "checkpoint": args.checkpoint}
    )
    print(render_report(result.report))
    print(f"{args.split} accuracy {result.accuracy:.4f} -> {out_dir}")
    return 0


def _load_cascade_any(path):
    """Dispatch on file extension: .xml -> XML codec, anything else JSON."""
    if os.fspath(path).lower().endswith(".xml"):
        return load_cascade_xml(path)
    return load_cascade_json(path)


def _detect_params(config) -> DetectParams:
    section = config["detect"]
    return DetectParams(
        scale_factor=section["scale_factor"],
        step=section["step"],
        min_size=section["min_size"],
        min_neighbors=section["min_neighbors"],
    )


def cmd_detect(args: argparse.Namespace) -> int:
    config = load_config(args)
    params = _detect_params(config)
    image = load_ppm(args.image)
    cascade = _load_cascade_any(args.cascade)
    boxes = detect(to_grayscale(image), cascade, params)
    payload = {
        "image": os.fspath(args.image),
        "cascade": os.fspath(args.cascade),
        "params": dict(config["detect"]),
        "boxes": [
            {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": b.score}
            for b in boxes
        ],
    }
    _write_json(args.out, payload)
    print(f"{len(boxes)} boxes -> {args.out}")
    return 0


def draw_rectangle(image: np.ndarray, x: int, y: int, w: int, h: int,
                   color, thickness: int = 2) -> None:
    """Draw a rectangle outline in place, kept inside the box bounds.

    The bands occupy the outermost ``thickness`` pixels of the box on each
    side, clipped to the image, so annotations never spill outside either
    the box or the frame.
    """
    height, width = image.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    if x0 >= x1 or y0 >= y1:
        return
    t = thickness
    color = np.asarray(color, dtype=np.uint8)
    image[y0:min(y0 + t, y1), x0:x1] = color          # top
    image[max(y1 - t, y0):y1, x0:x1] = color          # bottom
    image[y0:y1, x0:min(x0 + t, x1)] = color          # left
    image[y0:y1, max(x1 - t, x0):x1] = color          # right


def classify_crop(model, image: np.ndarray, box) -> tuple[int, float]:
    """Crop a detection from a colour image and classify it.

    Returns ``(class_index, confidence)`` where confidence is the winning
    softmax probability.  Ties go to the lowest class index via argmax.
    """
    height, width = image.shape[:2]
    x0, y0 = max(box.x, 0), max(box.y, 0)
    x1, y1 = min(box.x + box.w, width), min(box.y + box.h, height)
    if x0 >= x1 or y0 >= y1:
        raise InputError(f"detection box {box} lies outside the image")
    size = model.backbone_config.input_size
    crop = resize_bilinear(image[y0:y1, x0:x1], size, size)
    batch = Tensor(normalize(crop).data[None, :, :, :])
    logits = model.forward_logits(batch, mode="eval").data[0]
    shifted = np.exp(logits - logits.max())
    probs = shifted / shifted.sum()
    klass = int(np.argmax(probs))
    return klass, float(probs[klass])


def cmd_annotate(args: argparse.Namespace) -> int:
    config = load_config(args)
    params = _detect_params(config)
    image = load_ppm(args.image)
    cascade = _load_cascade_any(args.cascade)
    model = load_checkpoint(args.checkpoint)
    boxes = detect(to_grayscale(image), cascade, params)

    json_out = args.json_out
    if json_out is None:
        stem, _ = os.path.splitext(os.fspath(args.out))
        json_out = stem + ".json"

    annotated = image.copy()
    faces = []
    for box in boxes:
        klass, confidence = classify_crop(model, image, box)
        draw_rectangle(annotated, box.x, box.y, box.w, box.h, CLASS_COLORS[klass])
        faces.append(
            {
                "box": {"x": box.x, "y": box.y, "w": box.w, "h": box.h},
                "class": LABEL_NAMES[klass],
                "confidence": confidence,
            }
        )
    save_ppm(annotated, args.out)
    _write_json(
        json_out,
        {
            "image": os.fspath(args.image),
            "cascade": os.fspath(args.cascade),
            "checkpoint": os.fspath(args.checkpoint),
            "params": dict(config["detect"]),
            "faces": faces,
        },
    )
    print(f"{len(faces)} faces annotated -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="JSON run-config file")
    group = parser.add_argument_group(
        "config overrides",
        "any scalar config leaf, e.g. --train.batch_size 16",
    )
    for dotted in sorted(config_leaves(default_config())):
        group.add_argument(f"--{dotted}", metavar="V", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskdetect",
        description="Face-mask detection: corpus tools, training, evaluation, annotation.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("scan", help="index a corpus and write a manifest")
    p.add_argument("roots", nargs="+", help="corpus root directories")
    p.add_argument("--layout", default="native",
                   help="directory layout name (default: native)")
    p.add_argument("--out", default="manifest.json", metavar="PATH")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, default=20, help="images per class")
    p.add_argument("--size", type=int, default=75, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="two-phase training run")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--init-backbone", default=None, metavar="CKPT",
                   help="checkpoint whose backbone weights seed this run")
    p.add_argument("--split-manifest", default=None, metavar="PATH",
                   help="reuse a saved split instead of splitting afresh")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="classifier-head architecture sweep")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--init-backbone", default=None, metavar="CKPT")
    p.add_argument("--split-manifest", default=None, metavar="PATH")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="score a checkpoint on one split")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--split", default="test", help="train, val or test")
    p.add_argument("--split-manifest", default=None, metavar="PATH")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect", help="face boxes from a cascade")
    p.add_argument("--image", required=True, metavar="PPM")
    p.add_argument("--cascade", required=True, metavar="PATH",
                   help=".xml or .json cascade file")
    p.add_argument("--out", default="boxes.json", metavar="PATH")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("annotate", help="detect, classify and draw boxes")
    p.add_argument("--image", required=True, metavar="PPM")
    p.add_argument("--cascade", required=True, metavar="PATH")
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--out", default="annotated.ppm", metavar="PATH")
    p.add_argument("--json-out", default=None, metavar="PATH",
                   help="per-face JSON (default: --out with .json extension)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_annotate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MaskDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
