"""Command-line entry point.

Subcommands: synth | rasterize | train | evaluate | predict | ablate.
Every command accepts --config (key=value file; flags override it) and
writes its fully resolved config next to its outputs. Exit codes: 0 ok,
2 usage/config error, 3 data error, 4 training failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import checkpoint as ckpt
from .blocks import BlockConfig, predict_classes
from .config import dump_config, read_config_file, resolve
from .dataset import load_split, read_manifest
from .errors import (
    ConfigError,
    DataError,
    SmokesegError,
    TrainingError,
    UsageError,
)
from .factory import GRID_NAMES, build_model, parse_model_name
from .imagery import load_multiband, rgb_composite
from .labelme import rasterize_annotation_file
from .masks import mask_to_rgb, write_mask_png
from .metrics import report_keyvalues, report_table
from .synth import synth_generate
from .training import (
    TrainConfig,
    evaluate_model,
    history_csv,
    load_best_model,
    predict_scores,
    run_sessions,
)

OVERLAY_ALPHA = 0.45


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _str(v):
    return str(v)


def _size(v):
    h, _, w = str(v).partition("x")
    return (int(h), int(w or h))


_BLOCK_KEYS = {
    "base_channels": (_int, 64),
    "unet_levels": (_int, 4),
    "transformer_repeats": (_int, 6),
    "region_size": (_int, 8),
    "attention_heads": (_int, 4),
    "embed_dim": (_int, 128),
    "activation": (_str, "gelu"),
    "input_size": (_int, None),
}

_TRAIN_KEYS = {
    "initial_lr": (_float, 1e-4),
    "lr_halve_patience": (_int, 10),
    "lr_floor": (_float, 1e-7),
    "stop_patience": (_int, 20),
    "batch_size": (_int, 4),
    "sessions": (_int, 10),
    "epochs": (_int, 300),
    "seed": (_int, 0),
    "improvement_tol": (_float, 1e-5),
}


def _resolved(args, allowed):
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k, None) for k in allowed}
    return resolve(file_values, overrides, allowed)


def _write_resolved(out_dir: Path, command: str, values: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.resolved.cfg").write_text(
        dump_config(values), encoding="utf-8"
    )


def _load_dataset(manifest_path):
    manifest = read_manifest(manifest_path)
    train_pairs = load_split(manifest, "train")
    eval_pairs = load_split(manifest, "eval")
    for image, _ in train_pairs + eval_pairs:
        if image.shape[0] != image.shape[1]:
            raise DataError("model input tiles must be square")
    return manifest, train_pairs, eval_pairs


def _block_config(values: dict, tile_size: int) -> BlockConfig:
    keys = {k: values[k] for k in _BLOCK_KEYS}
    if keys["input_size"] is None:
        keys["input_size"] = tile_size
    return BlockConfig(**keys)


def _train_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig(
            initial_lr=values["initial_lr"],
            lr_halve_patience=values["lr_halve_patience"],
            lr_floor=values["lr_floor"],
            stop_patience=values["stop_patience"],
            batch_size=values["batch_size"],
            sessions=values["sessions"],
            seed=values["seed"],
            max_epochs=values["epochs"],
            improvement_tol=values["improvement_tol"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _session_table(result) -> str:
    lines = ["session,seed,best_epoch,best_f1h,epochs,diverged"]
    for i, h in enumerate(result.histories):
        best = "" if h.best_state is None else repr(h.best_f1h)
        lines.append(f"{i},{h.seed},{h.best_epoch},{best},{h.epochs},{int(h.diverged)}")
    return "\n".join(lines) + "\n"


def cmd_synth(args) -> int:
    allowed = {
        "seed": (_int, 0),
        "count": (_int, 8),
        "size": (_size, (64, 64)),
        "gap_margin": (_int, 2),
        "out": (_str, None),
    }
    values = _resolved(args, allowed)
    if not values["out"]:
        raise ConfigError("synth requires --out")
    out_dir = Path(values["out"])
    synth_generate(
        out_dir,
        seed=values["seed"],
        count=values["count"],
        size=values["size"],
        gap_margin=values["gap_margin"],
    )
    values["size"] = f"{values['size'][0]}x{values['size'][1]}"
    _write_resolved(out_dir, "synth", values)
    print(f"wrote {values['count']} scenes to {out_dir}")
    return 0


def cmd_rasterize(args) -> int:
    allowed = {
        "annotation": (_str, None),
        "size": (_size, None),
        "out": (_str, None),
    }
    values = _resolved(args, allowed)
    if not values["annotation"] or not values["out"]:
        raise ConfigError("rasterize requires --annotation and --out")
    mask, warnings_ = rasterize_annotation_file(values["annotation"], values["size"])
    out_path = Path(values["out"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_mask_png(out_path, mask)
    for note in warnings_:
        print(f"warning: {note}", file=sys.stderr)
    print(f"wrote {out_path}")
    return 0


def _train_one_model(name: str, values: dict, train_pairs, eval_pairs):
    spec = parse_model_name(name)
    if not train_pairs:
        raise DataError("manifest has no train entries")
    if not eval_pairs:
        raise DataError("manifest has no eval entries to drive model selection")
    tile = train_pairs[0][0].shape[0]
    block_cfg = _block_config(values, tile)
    train_cfg = _train_config(values)
    make_model = lambda: build_model(spec, block_cfg)  # noqa: E731
    result = run_sessions(make_model, train_pairs, eval_pairs, train_cfg)
    model = load_best_model(make_model, result)
    return spec, block_cfg, train_cfg, result, model


def cmd_train(args) -> int:
    allowed = dict(_BLOCK_KEYS | _TRAIN_KEYS)
    allowed.update({"model": (_str, None), "data": (_str, None), "out": (_str, None)})
    values = _resolved(args, allowed)
    for key in ("model", "data", "out"):
        if not values[key]:
            raise ConfigError(f"train requires --{key}")
    _, train_pairs, eval_pairs = _load_dataset(values["data"])
    spec, block_cfg, train_cfg, result, model = _train_one_model(
        values["model"], values, train_pairs, eval_pairs
    )

    out_dir = Path(values["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    best = result.best_history
    ckpt.save_checkpoint(
        out_dir / "best.ckpt",
        model,
        provenance={
            "model_name": spec.canonical_name,
            "seed": train_cfg.seed,
            "sessions": train_cfg.sessions,
            "best_session": result.best_session,
            "best_epoch": best.best_epoch,
            "best_f1h": best.best_f1h,
            "avg_f1h": result.avg_f1h,
        },
    )
    (out_dir / "sessions.csv").write_text(_session_table(result), encoding="utf-8")
    for i, history in enumerate(result.histories):
        (out_dir / f"history_s{i:02d}.csv").write_text(
            history_csv(history), encoding="utf-8"
        )
    if values["input_size"] is None:
        values["input_size"] = block_cfg.input_size
    _write_resolved(out_dir, "train", values)
    print(
        f"{spec.canonical_name}: avgF1h={result.avg_f1h:.4f} "
        f"best F1h={best.best_f1h:.4f} (session {result.best_session}, "
        f"epoch {best.best_epoch})"
    )
    return 0


def cmd_evaluate(args) -> int:
    allowed = {"checkpoint": (_str, None), "data": (_str, None), "out": (_str, None)}
    values = _resolved(args, allowed)
    for key in ("checkpoint", "data", "out"):
        if not values[key]:
            raise ConfigError(f"evaluate requires --{key}")
    model, _ = ckpt.load_checkpoint(values["checkpoint"])
    manifest = read_manifest(values["data"])
    eval_pairs = load_split(manifest, "eval")
    if not eval_pairs:
        raise DataError(f"{values['data']}: no eval entries")
    report = evaluate_model(model, eval_pairs)

    out_dir = Path(values["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report_table(report), encoding="utf-8")
    (out_dir / "report.kv").write_text(report_keyvalues(report), encoding="utf-8")
    _write_resolved(out_dir, "evaluate", values)
    print(report_table(report), end="")
    return 0


def cmd_predict(args) -> int:
    allowed = {"checkpoint": (_str, None), "out": (_str, None), "band_scale": (_str, None)}
    values = _resolved(args, allowed)
    if not values["checkpoint"] or not values["out"]:
        raise ConfigError("predict requires --checkpoint and --out")
    if not args.images:
        raise ConfigError("predict requires at least one image path")
    band_scale = None
    if values["band_scale"]:
        band_scale = [float(v) for v in values["band_scale"].split(",")]
    model, _ = ckpt.load_checkpoint(values["checkpoint"])

    out_dir = Path(values["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for image_path in args.images:
        image = load_multiband(image_path, band_scale=band_scale)
        scores = predict_scores(model, image.data)
        pred = predict_classes(scores)
        pred_rgb = mask_to_rgb(pred)
        composite = rgb_composite(image.data).astype(np.float64)
        overlay = (1.0 - OVERLAY_ALPHA) * composite + OVERLAY_ALPHA * pred_rgb
        overlay = np.clip(np.rint(overlay), 0, 255).astype(np.uint8)

        stem = Path(image_path).stem
        write_mask_png(out_dir / f"{stem}_pred.png", pred)
        Image.fromarray(overlay, mode="RGB").save(out_dir / f"{stem}_overlay.png")
        print(f"predicted {image_path} -> {out_dir / (stem + '_pred.png')}")
    _write_resolved(out_dir, "predict", values)
    return 0


def cmd_ablate(args) -> int:
    allowed = dict(_BLOCK_KEYS | _TRAIN_KEYS)
    allowed.update({"models": (_str, None), "data": (_str, None), "out": (_str, None)})
    values = _resolved(args, allowed)
    for key in ("data", "out"):
        if not values[key]:
            raise ConfigError(f"ablate requires --{key}")
    names = (
        [n.strip() for n in values["models"].split(",")]
        if values["models"]
        else list(GRID_NAMES)
    )
    for name in names:
        parse_model_name(name)
    _, train_pairs, eval_pairs = _load_dataset(values["data"])

    out_dir = Path(values["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["id\tmodel\tavgF1h\tF1h\tF1\tPrec\tRec"]
    block_cfg = None
    for idx, name in enumerate(names, 1):
        spec, block_cfg, train_cfg, result, model = _train_one_model(
            name, values, train_pairs, eval_pairs
        )
        report = evaluate_model(model, eval_pairs)
        ckpt.save_checkpoint(
            out_dir / f"model_{idx:02d}.ckpt",
            model,
            provenance={"model_name": spec.canonical_name, "seed": train_cfg.seed},
        )
        rows.append(
            f"{idx}\t{spec.canonical_name}\t{result.avg_f1h:.4f}\t"
            f"{result.best_history.best_f1h:.4f}\t{report.f1:.4f}\t"
            f"{report.precision:.4f}\t{report.recall:.4f}"
        )
        print(rows[-1])
    table = "\n".join(rows) + "\n"
    (out_dir / "ablation.tsv").write_text(table, encoding="utf-8")
    if values["input_size"] is None and block_cfg is not None:
        values["input_size"] = block_cfg.input_size
    _write_resolved(out_dir, "ablate", values)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smokeseg",
        description="Smoke/cloud segmentation: data synthesis, training, "
        "evaluation, prediction and ablation grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, help="number of scenes")
    p.add_argument("--size", help="tile size as HxW, e.g. 64x64")
    p.add_argument("--gap-margin", dest="gap_margin", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rasterize", help="polygon annotation JSON -> mask PNG")
    common(p)
    p.add_argument("--annotation", help="annotation JSON path")
    p.add_argument("--size", help="mask size as HxW (default: from the JSON)")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("train", help="train one variant")
    common(p)
    p.add_argument("--model", help="variant name, e.g. 'VC-TrUNet-()'")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--sessions", type=int)
    p.add_argument("--epochs", type=int)
    for key in _BLOCK_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=str)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on eval entries")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="dataset manifest path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict masks and overlays for images")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--band-scale", dest="band_scale", help="comma list of 6 divisors")
    p.add_argument("images", nargs="*", help="6-band raster paths")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="train and report a variant grid")
    common(p)
    p.add_argument("--models", help="comma-separated variant names (default: all 9)")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--sessions", type=int)
    p.add_argument("--epochs", type=int)
    for key in _BLOCK_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=str)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4
    except SmokesegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
