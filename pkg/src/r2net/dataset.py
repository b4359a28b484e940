"""Dataset directories: synthetic splits on disk and ordered in-memory examples."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .scene import (FeatureSet, Scene, ValidationError, generate_synthetic_scene, load_features, load_scenes,
                    order_scene, write_features, write_scenes)

SPLITS = ("train", "val", "test")


@dataclass
class Example:
    """A scene sorted left-to-right; ``perm[k]`` is the original index of object k."""

    scene: Scene
    feats: FeatureSet
    perm: np.ndarray


def make_examples(scenes, feature_sets) -> list[Example]:
    out = []
    for scene, feats in zip(scenes, feature_sets):
        s, f, perm = order_scene(scene, feats)
        out.append(Example(s, f, perm))
    return out


def split_sizes(num_scenes: int, train_fraction: float = 0.7, val_fraction: float = 0.1) -> dict[str, int]:
    """70/30 train/test; validation is carved out of the training share."""
    train_total = int(round(num_scenes * train_fraction))
    val = int(train_total * val_fraction)
    return {"train": train_total - val, "val": val, "test": num_scenes - train_total}


def generate_splits(config: RunConfig, sizes: dict[str, int] | None = None, seed: int | None = None):
    """Deterministic synthetic scenes per split; scene k of the corpus uses seed (seed, k)."""
    seed = config.seed if seed is None else seed
    sizes = sizes or split_sizes(config.num_scenes, config.train_fraction, config.val_fraction)
    gen = config.gen_config()
    out, k = {}, 0
    for split in SPLITS:
        scenes, feats = [], []
        for _ in range(sizes.get(split, 0)):
            s, f = generate_synthetic_scene(gen, (seed, k))
            scenes.append(s)
            feats.append(f)
            k += 1
        out[split] = (scenes, feats)
    return out


def write_dataset(out_dir, splits, config: RunConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, (scenes, feats) in splits.items():
        write_scenes(out / f"{split}_scenes.jsonl", scenes)
        write_features(out / f"{split}_features.bin", feats)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")


def load_split(data_dir, split: str, config: RunConfig) -> list[Example]:
    data = Path(data_dir)
    scene_path = data / f"{split}_scenes.jsonl"
    if not scene_path.exists():
        return []
    scenes = load_scenes(scene_path, config.num_labels, config.num_predicates)
    feats = load_features(data / f"{split}_features.bin", config.feature_dim, scenes, config.num_labels)
    return make_examples(scenes, feats)


def check_dims(examples, config: RunConfig) -> None:
    for ex in examples:
        if ex.feats.feature_dim != config.feature_dim:
            raise ValidationError(f"scene {ex.scene.scene_id}: feature dim {ex.feats.feature_dim} != {config.feature_dim}")
        if max(ex.scene.labels, default=1) > config.num_labels:
            raise ValidationError(f"scene {ex.scene.scene_id}: label outside 1..{config.num_labels}")
        if ex.feats.prior_label_dist is not None and ex.feats.prior_label_dist.shape[1] != config.num_labels:
            raise ValidationError(f"scene {ex.scene.scene_id}: prior width != {config.num_labels}")
