"""Command-line entry point.

Every option can also come from a JSON config file (``--config``). Keys are
option names with dashes replaced by underscores, either at top level or
under a section named after the subcommand::

    {"seed": 7, "train2d": {"epochs": 30, "eps_s": 1.0}}

Flags override the config file, which overrides built-in defaults. The fully
resolved configuration is printed to stderr as one JSON object before any
work starts; saving that line to a file and passing it as ``--config``
repeats the run.

Exit status: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .data.augment import DEFAULT_POLICY
from .data.clips import GestureClip, export_dataset, load_clip_dir, load_frame_dataset
from .data.splits import train_test_split
from .data.synthetic import generate_synthetic
from .errors import ConfigError, OFMTError
from .fusion import SWEEP_PAIRS, FusionWeights, format_sweep, fuse_scores, predict, weight_sweep
from .models import build_model, load_model, preset, save_weights
from .pipeline import image_batch, template_images, video_batch
from .templates import TemplateParams, save_image
from .training import TrainConfig, as_float_batch, scores_result, train_model, write_confusion_csv

log = logging.getLogger("ofmtlab")

TEMPLATE_DEFAULTS = TemplateParams().to_dict()

COMMON_DEFAULTS = {"seed": 0, "log_level": "info"}
SPLIT_DEFAULTS = {"holdout": 0.2, "split_seed": 0}

DEFAULTS = {
    "gensynth": {"out": None, "subjects": 3, "reps": 3, "frame_size": 64, "frames": 24, "suffix": ".png"},
    "ofmt": {"input": None, "out": None, "format": "png", **TEMPLATE_DEFAULTS},
    "train2d": {"data": None, "out": None, "log": None, "preset": "lenet-desk", "epochs": 50,
                "batch_size": 32, "augment": True, **SPLIT_DEFAULTS, **TEMPLATE_DEFAULTS},
    "train3d": {"data": None, "out": None, "log": None, "preset": "c3d-desk", "epochs": 100,
                "batch_size": 10, **SPLIT_DEFAULTS},
    "eval": {"weights": None, "data": None, "out": None, "confusion": None, "subset": "all",
             **SPLIT_DEFAULTS, **TEMPLATE_DEFAULTS},
    "fuse": {"weights3d": None, "weights2d": None, "data": None, "out": None, "confusion": None,
             "subset": "all", "w3": 0.6, "w2": 0.4, "sweep": False, **SPLIT_DEFAULTS, **TEMPLATE_DEFAULTS},
    "predict": {"clip": None, "label": 0, "weights3d": None, "weights2d": None, "out": None,
                "w3": 0.6, "w2": 0.4, **TEMPLATE_DEFAULTS},
}
REQUIRED = {
    "gensynth": ("out",),
    "ofmt": ("input", "out"),
    "train2d": ("data", "out"),
    "train3d": ("data", "out"),
    "eval": ("weights", "data"),
    "fuse": ("weights3d", "weights2d", "data"),
    "predict": ("clip", "weights3d", "weights2d"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_template_opts(p):
    g = p.add_argument_group("template parameters")
    g.add_argument("--xi", type=float, help="frame-difference threshold (0-255)")
    g.add_argument("--eps-s", type=float, help="flow magnitude below which motion is background")
    g.add_argument("--lambda", dest="lambda_fg", type=float, help="foreground weight")
    g.add_argument("--sigma", type=float, help="pre-smoothing of frames before flow")
    g.add_argument("--window", type=int, help="Lucas-Kanade window size")
    g.add_argument("--levels", type=int, help="pyramid levels")
    g.add_argument("--tau-eig", type=float, help="min eigenvalue for a valid flow vector")
    g.add_argument("--iterations", type=int, help="flow refinement iterations per level")
    g.add_argument("--mode", choices=["additive", "union"], help="OFMT accumulation mode")
    g.add_argument("--fps", type=float, help="frame rate clips are resampled to before flow")


def _add_split_opts(p):
    p.add_argument("--holdout", type=float, help="stratified test fraction")
    p.add_argument("--split-seed", type=int, help="seed of the train/test split")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--log-level", choices=["debug", "info", "warning", "error"])

    parser = _Parser(prog="ofmtlab", description="Two-stream air-written digit recognition lab.")
    parser.add_argument("--version", action="version", version=f"ofmtlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    kw = dict(parents=[common], argument_default=argparse.SUPPRESS)

    p = sub.add_parser("gensynth", help="write a synthetic digit dataset", **kw)
    p.add_argument("--out", help="dataset root to create")
    p.add_argument("--subjects", type=int)
    p.add_argument("--reps", type=int, help="repetitions per digit per subject")
    p.add_argument("--frame-size", type=int)
    p.add_argument("--frames", type=int, help="frames per clip")
    p.add_argument("--suffix", choices=[".png", ".pgm"])

    p = sub.add_parser("ofmt", help="render OFMT images for clips", **kw)
    p.add_argument("--in", dest="input", help="dataset root or a single clip directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=["png", "pgm"])
    _add_template_opts(p)

    for name, stream in (("train2d", "2D"), ("train3d", "3D")):
        p = sub.add_parser(name, help=f"train the {stream} stream", **kw)
        p.add_argument("--data", help="dataset root")
        p.add_argument("--out", help="weight file to write")
        p.add_argument("--log", help="JSONL training log (default: <out>.log.jsonl)")
        p.add_argument("--preset", help="model preset")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        _add_split_opts(p)
        if stream == "2D":
            p.add_argument("--augment", type=_bool, help="random affine augmentation (true/false)")
            _add_template_opts(p)

    p = sub.add_parser("eval", help="evaluate one stream", **kw)
    p.add_argument("--weights")
    p.add_argument("--data")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--confusion", help="write the confusion matrix as CSV")
    p.add_argument("--subset", choices=["all", "train", "test"])
    _add_split_opts(p)
    _add_template_opts(p)

    p = sub.add_parser("fuse", help="evaluate the fused two-stream model", **kw)
    p.add_argument("--weights3d")
    p.add_argument("--weights2d")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--confusion")
    p.add_argument("--subset", choices=["all", "train", "test"])
    p.add_argument("--w3", type=float)
    p.add_argument("--w2", type=float)
    p.add_argument("--sweep", type=_bool, help="also report the six-pair weight sweep")
    _add_split_opts(p)
    _add_template_opts(p)

    p = sub.add_parser("predict", help="classify one clip directory", **kw)
    p.add_argument("--clip")
    p.add_argument("--label", type=int, help="label recorded for the clip (not used for prediction)")
    p.add_argument("--weights3d")
    p.add_argument("--weights2d")
    p.add_argument("--out")
    p.add_argument("--w3", type=float)
    p.add_argument("--w2", type=float)
    _add_template_opts(p)
    return parser


def load_config_file(path, command: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    allowed = set(DEFAULTS[command]) | set(COMMON_DEFAULTS)
    out = {}
    section = raw.get(command, {})
    flat = {k: v for k, v in raw.items() if k not in DEFAULTS and k != "command"}
    if raw.get("command", command) != command:
        raise ConfigError(f"config file is for {raw['command']!r}, not {command!r}")
    for key, value in {**flat, **section}.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for {command}")
        out[key] = value
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    cfg = load_config_file(ns.config, command) if getattr(ns, "config", None) else {}
    resolved = {"command": command, **COMMON_DEFAULTS, **DEFAULTS[command], **cfg, **flags}
    missing = [k for k in REQUIRED[command] if resolved.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s): " +
                         ", ".join("--" + ("in" if m == "input" else m.replace("_", "-")) for m in missing))
    return resolved


def template_params(cfg: dict) -> TemplateParams:
    return TemplateParams(**{k: cfg[k] for k in TEMPLATE_DEFAULTS})


def emit(result: dict, out: Optional[str]) -> None:
    text = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        log.info("wrote %s", out)
    else:
        print(text)


def _subset(clips: list[GestureClip], cfg: dict) -> list[GestureClip]:
    if cfg["subset"] == "all":
        return clips
    labels = [c.label for c in clips]
    train, test = train_test_split(labels, cfg["holdout"], cfg["split_seed"])
    return [clips[i] for i in (train if cfg["subset"] == "train" else test)]


def _load_data(cfg: dict) -> list[GestureClip]:
    clips = load_frame_dataset(cfg["data"])
    if not clips:
        raise OFMTError(f"no clips found under {cfg['data']}")
    return clips


def cmd_gensynth(cfg: dict) -> int:
    clips, _ = generate_synthetic(cfg["subjects"], cfg["reps"], cfg["frame_size"], cfg["frames"], cfg["seed"])
    root = export_dataset(clips, cfg["out"], cfg["suffix"])
    log.info("wrote %d clips to %s", len(clips), root)
    print(json.dumps({"clips": len(clips), "root": str(root)}))
    return 0


def cmd_ofmt(cfg: dict) -> int:
    src = Path(cfg["input"])
    single = any(p.is_file() for p in src.glob("frame_*"))
    clips = [load_clip_dir(src, 0, src.name)] if single else load_frame_dataset(src)
    if not clips:
        raise OFMTError(f"no clips found under {src}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    images = template_images(clips, template_params(cfg))
    written = []
    for clip, img in zip(clips, images):
        # A bare clip directory carries no class, so its id is just its name.
        stem = clip.name if single else clip.clip_id
        written.append(str(save_image(img, out / f"{stem}_ofmt.{cfg['format']}")))
    log.info("wrote %d templates to %s", len(written), out)
    print(json.dumps({"templates": written}))
    return 0


def _train(cfg: dict, stream: str) -> int:
    clips = _load_data(cfg)
    labels = np.array([c.label for c in clips])
    train_idx, test_idx = train_test_split(labels, cfg["holdout"], cfg["split_seed"])
    spec = preset(cfg["preset"])
    if spec.kind != ("C3D" if stream == "3D" else "LeNet2D"):
        raise ConfigError(f"preset {cfg['preset']} is a {spec.kind} model, not usable for train{stream.lower()}")
    log.info("preparing %d clips", len(clips))
    if stream == "3D":
        inputs = video_batch(clips, spec)
    else:
        inputs = image_batch(template_images(clips, template_params(cfg)), spec)
    config = TrainConfig.defaults(stream, epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=cfg["seed"],
                                  augment=DEFAULT_POLICY if stream == "2D" and cfg["augment"] else None)
    model = build_model(spec, cfg["seed"])
    result = train_model(model, inputs[train_idx], labels[train_idx], config,
                         validation=(inputs[test_idx], labels[test_idx]))
    path = save_weights(result.weights, cfg["out"])
    log_path = result.write_log(cfg["log"] or f"{path}.log.jsonl")
    final = result.history[-1]
    print(json.dumps({"weights": str(path), "log": str(log_path), "train_acc": final.train_acc,
                      "test_acc": final.test_acc, "seconds": round(result.seconds, 2)}))
    return 0


def _stream_probs(model, clips: list[GestureClip], cfg: dict) -> np.ndarray:
    spec = model.spec
    if spec.kind == "C3D":
        x = video_batch(clips, spec)
    else:
        x = as_float_batch(image_batch(template_images(clips, template_params(cfg)), spec))
    return model.predict_proba(x)


def _report(res, cfg: dict, extra: dict) -> int:
    if cfg.get("confusion"):
        write_confusion_csv(res.confusion, cfg["confusion"])
    emit({**extra, **res.to_dict()}, cfg.get("out"))
    return 0


def cmd_eval(cfg: dict) -> int:
    model = load_model(cfg["weights"])
    clips = _subset(_load_data(cfg), cfg)
    res = scores_result(_stream_probs(model, clips, cfg), [c.label for c in clips])
    return _report(res, cfg, {"model": model.spec.kind, "samples": len(clips)})


def cmd_fuse(cfg: dict) -> int:
    m3, m2 = load_model(cfg["weights3d"]), load_model(cfg["weights2d"])
    clips = _subset(_load_data(cfg), cfg)
    labels = [c.label for c in clips]
    p3, p2 = _stream_probs(m3, clips, cfg), _stream_probs(m2, clips, cfg)
    w = FusionWeights(cfg["w3"], cfg["w2"])
    res = scores_result(fuse_scores(p3, p2, w), labels)
    extra = {"samples": len(clips), "w3": w.w3, "w2": w.w2,
             "accuracy_3d": scores_result(p3, labels).accuracy,
             "accuracy_2d": scores_result(p2, labels).accuracy}
    if cfg["sweep"]:
        rows = weight_sweep(p3, p2, labels, SWEEP_PAIRS)
        extra["sweep"] = rows
        log.info("weight sweep\n%s", format_sweep(rows))
    return _report(res, cfg, extra)


def cmd_predict(cfg: dict) -> int:
    clip_dir = Path(cfg["clip"])
    clip = load_clip_dir(clip_dir, cfg["label"], clip_dir.name)
    m3, m2 = load_model(cfg["weights3d"]), load_model(cfg["weights2d"])
    pred = predict(clip, m3, m2, FusionWeights(cfg["w3"], cfg["w2"]), template_params(cfg))
    emit({"clip": str(clip_dir), "class": pred.label, "scores": pred.scores.tolist(),
          "scores_3d": pred.p3.tolist(), "scores_2d": pred.p2.tolist()}, cfg.get("out"))
    return 0


COMMANDS = {
    "gensynth": cmd_gensynth,
    "ofmt": cmd_ofmt,
    "train2d": lambda cfg: _train(cfg, "2D"),
    "train3d": lambda cfg: _train(cfg, "3D"),
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "predict": cmd_predict,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = resolve(ns.command, ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except OFMTError as exc:
        print(f"ofmtlab: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=cfg["log_level"].upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    print(json.dumps(cfg, sort_keys=True), file=sys.stderr)
    try:
        return COMMANDS[cfg["command"]](cfg)
    except (OFMTError, OSError) as exc:
        print(f"ofmtlab: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
