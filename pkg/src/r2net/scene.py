"""Scenes, region features, synthetic generation, file formats and pair sampling."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

BACKGROUND = 0
SPATIAL_PREDICATES = ("inside", "left_of", "above", "near")
NEAR_RADIUS = 0.2  # fraction of the scene diagonal

FEATURE_MAGIC = b"R2FT"
FEATURE_VERSION = 1
_FIXED_SEED = 20200917  # featurizer projections; independent of scene seeds


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (0 <= self.x1 < self.x2 and 0 <= self.y1 < self.y2):
            raise ValidationError(f"degenerate box {self.as_list()}")

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


def union_box(a: Box, b: Box) -> Box:
    return Box(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


@dataclass
class Scene:
    scene_id: str
    width: float
    height: float
    boxes: list[Box]
    labels: list[int]
    relations: list[tuple[int, int, int]] = field(default_factory=list)
    # optional detector label distributions, N x D_l
    priors: np.ndarray | None = None

    @property
    def num_objects(self) -> int:
        return len(self.boxes)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_objects, self.num_objects), dtype=np.int64)
        for s, o, _ in self.relations:
            A[s, o] = 1
        return A

    def predicate_matrix(self) -> np.ndarray:
        """N x N ground-truth predicate ids, background where unrelated."""
        R = np.zeros((self.num_objects, self.num_objects), dtype=np.int64)
        for s, o, p in self.relations:
            R[s, o] = p
        return R

    def validate(self, num_labels: int | None = None, num_predicates: int | None = None) -> None:
        n = self.num_objects
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"scene {self.scene_id}: non-positive size")
        if len(self.labels) != n:
            raise ValidationError(f"scene {self.scene_id}: {len(self.labels)} labels for {n} boxes")
        for lab in self.labels:
            if lab < 1 or (num_labels is not None and lab > num_labels):
                raise ValidationError(f"scene {self.scene_id}: label {lab} out of range")
        seen = set()
        for s, o, p in self.relations:
            if not (0 <= s < n and 0 <= o < n) or s == o:
                raise ValidationError(f"scene {self.scene_id}: bad relation indices ({s}, {o})")
            if p < 1 or (num_predicates is not None and p > num_predicates):
                raise ValidationError(f"scene {self.scene_id}: predicate {p} out of range")
            if (s, o) in seen:
                raise ValidationError(f"scene {self.scene_id}: two predicates for pair ({s}, {o})")
            seen.add((s, o))
        if self.priors is not None:
            pr = np.asarray(self.priors)
            if pr.shape[0] != n or (num_labels is not None and pr.shape[1] != num_labels):
                raise ValidationError(f"scene {self.scene_id}: prior shape {pr.shape}")
            if np.any(pr < 0) or np.any(np.abs(pr.sum(axis=1) - 1) > 1e-6):
                raise ValidationError(f"scene {self.scene_id}: priors are not distributions")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        same_priors = (self.priors is None and other.priors is None) or (
            self.priors is not None and other.priors is not None and np.array_equal(self.priors, other.priors)
        )
        return (
            self.scene_id == other.scene_id
            and self.width == other.width
            and self.height == other.height
            and self.boxes == other.boxes
            and list(self.labels) == list(other.labels)
            and [tuple(r) for r in self.relations] == [tuple(r) for r in other.relations]
            and same_priors
        )


@dataclass
class FeatureSet:
    object_features: np.ndarray  # N x D_f
    union_features: np.ndarray  # N x N x D_f
    prior_label_dist: np.ndarray | None = None  # N x D_l

    @property
    def feature_dim(self) -> int:
        return self.object_features.shape[1]


@dataclass
class PairSample:
    pairs: list[tuple[int, int, int]]
    kind: str  # "adjacency" or "relation"


# ---------------------------------------------------------------- ordering

def sort_left_to_right(scene: Scene, feats: FeatureSet | None = None) -> np.ndarray:
    """Stable order by box center x, then center y, then original index."""
    n = scene.num_objects
    cx = np.array([b.center[0] for b in scene.boxes])
    cy = np.array([b.center[1] for b in scene.boxes])
    return np.lexsort((np.arange(n), cy, cx)) if n else np.zeros(0, dtype=np.int64)


def apply_permutation(scene: Scene, feats: FeatureSet | None, perm: Sequence[int]):
    """Reorder objects so that new position k holds old object ``perm[k]``."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    relations = sorted((int(inv[s]), int(inv[o]), p) for s, o, p in scene.relations)
    new_scene = replace(
        scene,
        boxes=[scene.boxes[i] for i in perm],
        labels=[scene.labels[i] for i in perm],
        relations=relations,
        priors=None if scene.priors is None else np.asarray(scene.priors)[perm],
    )
    if feats is None:
        return new_scene, None
    new_feats = FeatureSet(
        feats.object_features[perm],
        feats.union_features[np.ix_(perm, perm)],
        None if feats.prior_label_dist is None else feats.prior_label_dist[perm],
    )
    return new_scene, new_feats


def order_scene(scene: Scene, feats: FeatureSet | None = None):
    perm = sort_left_to_right(scene, feats)
    new_scene, new_feats = apply_permutation(scene, feats, perm)
    return new_scene, new_feats, perm


# ---------------------------------------------------------------- synthetic data

@dataclass
class GenConfig:
    num_labels: int = 12
    num_predicates: int = 6
    feature_dim: int = 32
    min_objects: int = 4
    max_objects: int = 10
    noise: float = 0.1
    label_corruption: float = 0.3
    # keep only each subject's nearest rule-matching partners; 0 keeps all
    max_relations_per_object: int = 2
    min_box_frac: float = 0.1
    max_box_frac: float = 0.35

    def check(self) -> None:
        if self.num_labels < 2 or self.num_predicates < 2:
            raise ConfigError("need at least 2 object categories and 2 predicates")
        if self.feature_dim < 1 or not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError("bad feature_dim or object count range")
        if not 0 <= self.label_corruption <= 1 or self.noise < 0:
            raise ConfigError("label_corruption must be in [0, 1] and noise >= 0")
        if not 0 < self.min_box_frac <= self.max_box_frac < 1:
            raise ConfigError("box fractions must satisfy 0 < min <= max < 1")


def spatial_relation(a: Box, b: Box, diagonal: float) -> str | None:
    """Highest-priority spatial rule that holds for subject a and object b."""
    if a.x1 > b.x1 and a.y1 > b.y1 and a.x2 < b.x2 and a.y2 < b.y2:
        return "inside"
    (ax, ay), (bx, by) = a.center, b.center
    if ax + a.width / 2 < bx - b.width / 2:
        return "left_of"
    if ay + a.height / 2 < by - b.height / 2:
        return "above"
    if np.hypot(ax - bx, ay - by) < NEAR_RADIUS * diagonal:
        return "near"
    return None


def predicate_id(name: str, subj_label: int, obj_label: int, num_predicates: int) -> int | None:
    """Map a spatial rule to a predicate id in 1..num_predicates.

    Ids beyond the four spatial ones split "near" by the label pair, so that
    some predicates depend on object categories.
    """
    pid = SPATIAL_PREDICATES.index(name) + 1
    if pid > num_predicates:
        return None
    if name == "near" and num_predicates > 4:
        pid = 4 + (subj_label + 2 * obj_label) % (num_predicates - 3)
    return pid


def derive_relations(boxes: Sequence[Box], labels: Sequence[int], width: float, height: float,
                     num_predicates: int, max_per_object: int = 0) -> list[tuple[int, int, int]]:
    diagonal = float(np.hypot(width, height))
    relations = []
    for i, a in enumerate(boxes):
        found = []
        for j, b in enumerate(boxes):
            if i == j:
                continue
            name = spatial_relation(a, b, diagonal)
            if name is None:
                continue
            pid = predicate_id(name, labels[i], labels[j], num_predicates)
            if pid is None:
                continue
            dist = np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            found.append((dist, j, pid))
        found.sort()
        if max_per_object:
            found = found[:max_per_object]
        relations.extend((i, j, pid) for _, j, pid in found)
    return sorted(relations)


def box_geometry(box: Box, width: float, height: float) -> np.ndarray:
    cx, cy = box.center
    return np.array([
        box.x1 / width, box.y1 / height, box.x2 / width, box.y2 / height,
        cx / width, cy / height, box.width / width, box.height / height,
    ])


def _object_projection(raw_dim: int, feature_dim: int) -> np.ndarray:
    rng = np.random.default_rng([_FIXED_SEED, raw_dim, feature_dim])
    return rng.normal(size=(feature_dim, raw_dim)) / np.sqrt(raw_dim)


def _union_projection(feature_dim: int) -> np.ndarray:
    rng = np.random.default_rng([_FIXED_SEED + 1, feature_dim])
    return rng.normal(size=(feature_dim, 9))


def object_features(boxes, labels, width, height, cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    n = len(boxes)
    raw = np.zeros((n, 8 + cfg.num_labels))
    for i, (b, lab) in enumerate(zip(boxes, labels)):
        raw[i, :8] = box_geometry(b, width, height)
        raw[i, 8 + lab - 1] = 1.0
    if raw.shape[1] <= cfg.feature_dim:
        feats = np.zeros((n, cfg.feature_dim))
        feats[:, : raw.shape[1]] = raw
    else:
        feats = raw @ _object_projection(raw.shape[1], cfg.feature_dim).T
    feats += cfg.noise * rng.uniform(-1.0, 1.0, size=feats.shape)
    return feats.astype(np.float32).astype(np.float64)


def union_features(boxes, width, height, feature_dim: int) -> np.ndarray:
    """u_ij from the union box geometry only; values lie in (0, 2)."""
    n = len(boxes)
    P = _union_projection(feature_dim)
    U = np.zeros((n, n, feature_dim))
    for i in range(n):
        for j in range(n):
            g = np.append(box_geometry(union_box(boxes[i], boxes[j]), width, height), 1.0)
            U[i, j] = 1.0 + np.tanh(P @ g)
    return U.astype(np.float32).astype(np.float64)


def corrupted_priors(labels, cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    """Detector-like label distributions whose argmax is wrong at the corruption rate."""
    n, d = len(labels), cfg.num_labels
    priors = np.zeros((n, d))
    for i, lab in enumerate(labels):
        observed = lab
        if rng.random() < cfg.label_corruption:
            others = [c for c in range(1, d + 1) if c != lab]
            observed = others[rng.integers(len(others))]
        w = rng.uniform(0.0, 1.0, size=d)
        priors[i] = 0.5 * w / w.sum()
        priors[i, observed - 1] += 0.5
    return priors


def generate_synthetic_scene(cfg: GenConfig, seed) -> tuple[Scene, FeatureSet]:
    cfg.check()
    rng = np.random.default_rng(seed)
    width = float(rng.integers(320, 641))
    height = float(rng.integers(240, 481))
    n = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    boxes, labels = [], []
    for _ in range(n):
        w = round(rng.uniform(cfg.min_box_frac, cfg.max_box_frac) * width, 2)
        h = round(rng.uniform(cfg.min_box_frac, cfg.max_box_frac) * height, 2)
        x1 = round(rng.uniform(0.0, width - w), 2)
        y1 = round(rng.uniform(0.0, height - h), 2)
        boxes.append(Box(x1, y1, round(x1 + w, 2), round(y1 + h, 2)))
        labels.append(int(rng.integers(1, cfg.num_labels + 1)))
    relations = derive_relations(boxes, labels, width, height, cfg.num_predicates, cfg.max_relations_per_object)
    priors = corrupted_priors(labels, cfg, rng)
    seed_tag = "-".join(str(s) for s in np.atleast_1d(seed))
    scene = Scene(f"syn-{seed_tag}", width, height, boxes, labels, relations, priors)
    feats = FeatureSet(
        object_features(boxes, labels, width, height, cfg, rng),
        union_features(boxes, width, height, cfg.feature_dim),
        priors,
    )
    return scene, feats


def one_hot_priors(labels: Sequence[int], num_labels: int) -> np.ndarray:
    out = np.zeros((len(labels), num_labels))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64) - 1] = 1.0
    return out


# ---------------------------------------------------------------- files

def scene_to_record(scene: Scene) -> dict:
    objects = []
    for k, (b, lab) in enumerate(zip(scene.boxes, scene.labels)):
        obj = {"box": b.as_list(), "label": int(lab)}
        if scene.priors is not None:
            obj["prior"] = [float(v) for v in scene.priors[k]]
        objects.append(obj)
    return {
        "scene_id": scene.scene_id,
        "width": scene.width,
        "height": scene.height,
        "objects": objects,
        "relations": [{"subj": int(s), "obj": int(o), "predicate": int(p)} for s, o, p in scene.relations],
    }


def scene_from_record(rec: dict) -> Scene:
    objects = rec["objects"]
    priors = None
    if objects and all("prior" in o for o in objects):
        priors = np.array([o["prior"] for o in objects], dtype=np.float64)
    return Scene(
        scene_id=str(rec["scene_id"]),
        width=float(rec["width"]),
        height=float(rec["height"]),
        boxes=[Box(*map(float, o["box"])) for o in objects],
        labels=[int(o["label"]) for o in objects],
        relations=[(int(r["subj"]), int(r["obj"]), int(r["predicate"])) for r in rec.get("relations", [])],
        priors=priors,
    )


def write_scenes(path, scenes: Sequence[Scene]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_record(scene)) + "\n")


def load_scenes(path, num_labels: int | None = None, num_predicates: int | None = None) -> list[Scene]:
    scenes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}:{exc.colno}: {exc.msg}") from None
            try:
                scene = scene_from_record(rec)
            except ValidationError as exc:
                raise ValidationError(f"scene {rec.get('scene_id', '?')}: {exc}") from None
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}:1: malformed record ({exc!r})") from None
            scene.validate(num_labels, num_predicates)
            scenes.append(scene)
    return scenes


def write_features(path, feature_sets: Sequence[FeatureSet]) -> None:
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<II", FEATURE_VERSION, len(feature_sets)))
        for fs in feature_sets:
            n, d = fs.object_features.shape
            fh.write(struct.pack("<II", n, d))
            fh.write(np.ascontiguousarray(fs.object_features, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(fs.union_features, dtype="<f4").tobytes())


def load_features(path, feature_dim: int | None = None, scenes: Sequence[Scene] | None = None,
                  num_labels: int | None = None) -> list[FeatureSet]:
    """Read a feature file; priors come from ``scenes`` when given (one-hot if absent)."""
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise ParseError(f"{path}:0: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise ParseError(f"{path}:4: truncated header")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FEATURE_VERSION:
        raise ParseError(f"{path}:4: unsupported version {version}")
    if scenes is not None and len(scenes) != count:
        raise ValidationError(f"{path}: {count} feature records for {len(scenes)} scenes")
    offset = 12
    out = []
    for k in range(count):
        if offset + 8 > len(raw):
            raise ParseError(f"{path}:{offset}: truncated record {k}")
        n, d = struct.unpack_from("<II", raw, offset)
        offset += 8
        sid = scenes[k].scene_id if scenes is not None else f"#{k}"
        if feature_dim is not None and d != feature_dim:
            raise ValidationError(f"scene {sid}: feature dim {d} != configured {feature_dim}")
        size = (n * d + n * n * d) * 4
        if offset + size > len(raw):
            raise ParseError(f"{path}:{offset}: truncated record {k}")
        F = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
        U = np.frombuffer(raw, dtype="<f4", count=n * n * d, offset=offset + n * d * 4).reshape(n, n, d)
        offset += size
        prior = None
        if scenes is not None:
            scene = scenes[k]
            if scene.num_objects != n:
                raise ValidationError(f"scene {sid}: {n} feature rows for {scene.num_objects} objects")
            if scene.priors is not None:
                prior = np.asarray(scene.priors, dtype=np.float64)
            elif num_labels is not None:
                prior = one_hot_priors(scene.labels, num_labels)
        out.append(FeatureSet(F.astype(np.float64), U.astype(np.float64), prior))
    if offset != len(raw):
        raise ParseError(f"{path}:{offset}: trailing bytes")
    return out


# ---------------------------------------------------------------- sampling

def sample_pairs(scene: Scene, kind: str, seed) -> PairSample:
    """All positive pairs plus uniformly drawn unrelated pairs.

    adjacency: targets 1/0, one negative per two positives (rounded down).
    relation: targets are predicate ids, as many background negatives as positives.
    """
    if kind not in ("adjacency", "relation"):
        raise ValueError(f"unknown sample kind {kind!r}")
    n = scene.num_objects
    R = scene.predicate_matrix()
    positives = [(s, o, 1 if kind == "adjacency" else int(R[s, o])) for s, o in sorted((s, o) for s, o, _ in scene.relations)]
    pool = [(i, j) for i in range(n) for j in range(n) if i != j and R[i, j] == BACKGROUND]
    wanted = len(positives) // 2 if kind == "adjacency" else len(positives)
    take = min(wanted, len(pool))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pool), size=take, replace=False) if take else []
    negatives = [(pool[k][0], pool[k][1], 0) for k in chosen]
    return PairSample(positives + negatives, kind)
