"""Command line: ``r2net generate|train|eval|infer``.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation or dimension mismatch, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint
from .config import ABLATIONS, RunConfig, coerce
from .dataset import check_dims, generate_splits, load_split, make_examples, split_sizes, write_dataset
from .evaluate import DEFAULT_KS, rank_triples
from .scene import ConfigError, ParseError, ValidationError, load_features, load_scenes, scene_to_record
from .train import NumericalError, evaluate_model, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output path")
    p.add_argument("--ckpt", help="checkpoint path")
    p.add_argument("--task", choices=("predcls", "sgcls"))
    p.add_argument("--k", default=",".join(map(str, DEFAULT_KS)), help="comma separated K values")
    p.add_argument("--no-graph-constraint", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    for name in ABLATIONS:
        p.add_argument(f"--ablate-{name.replace('_', '-')}", dest=f"ablate_{name}", action="store_true")
    for f in fields(RunConfig):
        if f.name in ("task", "seed"):
            continue
        opts = {f"--{f.name}", f"--{f.name.replace('_', '-')}"}
        p.add_argument(*sorted(opts), dest=f"cfg_{f.name}", metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="r2net", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("generate", "write synthetic train/val/test splits"),
        ("train", "train a model and save the best checkpoint"),
        ("eval", "evaluate a checkpoint on a split"),
        ("infer", "predict scene graphs for a scene file"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "eval":
            p.add_argument("--split", default="test")
        if name == "infer":
            p.add_argument("--scenes", help="scene file (defaults to <data>/test_scenes.jsonl)")
            p.add_argument("--features", help="feature file (defaults to the matching *_features.bin)")
    return parser


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else (RunConfig.load(args.config) if args.config else RunConfig())
    changes = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    for name in types:
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            changes[name] = coerce(types[name], value, name)
    if args.task:
        changes["task"] = args.task
    if args.seed is not None:
        changes["seed"] = args.seed
    for name in ABLATIONS:
        if getattr(args, f"ablate_{name}", False):
            changes[f"use_{name}"] = False
    return cfg.replace(**changes) if changes else cfg


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"bad --k value {text!r}") from None
    if not ks or min(ks) <= 0:
        raise UsageError("--k needs positive integers")
    return ks


def _require(value, flag: str):
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def cmd_generate(args) -> int:
    cfg = resolve_config(args)
    out = Path(_require(args.out or args.data, "--out"))
    splits = generate_splits(cfg)
    write_dataset(out, splits, cfg)
    sizes = split_sizes(cfg.num_scenes, cfg.train_fraction, cfg.val_fraction)
    print(f"wrote {out}: train {sizes['train']} val {sizes['val']} test {sizes['test']}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data = _require(args.data, "--data")
    out = _require(args.out or args.ckpt, "--out")
    train_ex = load_split(data, "train", cfg)
    val_ex = load_split(data, "val", cfg)
    check_dims(train_ex + val_ex, cfg)
    result = train(cfg, train_ex, val_ex, out_ckpt=out)
    for epoch, (loss, r20) in enumerate(zip(result.losses, result.val_recall), start=1):
        print(f"epoch {epoch} loss {loss:.6f} val_R@20 {r20:.6f}")
    print(f"saved epoch {result.best_epoch} checkpoint to {out}")
    return EXIT_OK


def _load_model(args):
    ckpt = load_checkpoint(_require(args.ckpt, "--ckpt"))
    model = ckpt.to_model()
    return model, ckpt


def cmd_eval(args) -> int:
    model, _ = _load_model(args)
    cfg = model.config
    task = args.task or cfg.task
    examples = load_split(_require(args.data, "--data"), args.split, cfg)
    check_dims(examples, cfg)
    modes = (False,) if args.no_graph_constraint else (True, False)
    report = evaluate_model(model, examples, task, _parse_ks(args.k), modes)
    for line in report.lines():
        print(line)
    if args.out:
        report.write(args.out)
    return EXIT_OK


def cmd_infer(args) -> int:
    model, _ = _load_model(args)
    cfg = model.config
    task = args.task or cfg.task
    scene_file = args.scenes or (Path(_require(args.data, "--data or --scenes")) / "test_scenes.jsonl")
    feature_file = args.features or str(scene_file).replace("_scenes.jsonl", "_features.bin")
    scenes = load_scenes(scene_file, cfg.num_labels, cfg.num_predicates)
    feats = load_features(feature_file, cfg.feature_dim, scenes, cfg.num_labels)
    examples = make_examples(scenes, feats)
    check_dims(examples, cfg)
    k = _parse_ks(args.k)[0]
    lines = []
    with T.no_grad():
        for ex in examples:
            pred = model.predict(ex.scene, ex.feats, task)
            conf = pred.label_conf if task == "sgcls" else None
            ranked = rank_triples(pred.probs, conf, constrained=not args.no_graph_constraint)[:k]
            lines.append(json.dumps(inference_record(ex, pred, ranked)))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def inference_record(ex, pred, ranked) -> dict:
    """Scene-file record with refined labels and scored triples, in the original object order."""
    n = ex.scene.num_objects
    orig = ex.perm
    labels = np.zeros(n, dtype=np.int64)
    conf = np.zeros(n)
    boxes = [None] * n
    for k in range(n):
        labels[orig[k]] = pred.labels[k]
        conf[orig[k]] = pred.label_conf[k]
        boxes[orig[k]] = ex.scene.boxes[k]
    rec = scene_to_record(type(ex.scene)(ex.scene.scene_id, ex.scene.width, ex.scene.height, boxes,
                                         [int(v) for v in labels], []))
    for k, obj in enumerate(rec["objects"]):
        obj["score"] = float(conf[k])
    rec["relations"] = [
        {"subj": int(orig[t.subj]), "obj": int(orig[t.obj]), "predicate": t.predicate, "score": t.score}
        for t in ranked
    ]
    return rec


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"r2net: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ConfigError, CheckpointError, T.DimensionError) as exc:
        print(f"r2net: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"r2net: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ParseError) as exc:
        print(f"r2net: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
