"""Run configuration and its ``key = value`` text form."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .scene import ConfigError, GenConfig

ABLATIONS = ("bilstm1", "bilstm2", "gcn1", "gcn2", "r2_loss", "refiner", "prior_labels")


@dataclass
class RunConfig:
    # dimensions
    feature_dim: int = 32
    num_labels: int = 12
    num_predicates: int = 6
    hidden1: int = 32
    hidden2: int = 32
    gcn1: int = 0  # 0 means "same as hidden"
    gcn2: int = 0
    embed1: int = 16
    embed2: int = 16
    decoder_hidden: int = 32
    layers1: int = 2
    layers2: int = 4
    # optimizer
    lr: float = 2e-2
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 200
    # ablation switches
    use_bilstm1: bool = True
    use_bilstm2: bool = True
    use_gcn1: bool = True
    use_gcn2: bool = True
    use_r2_loss: bool = True
    use_refiner: bool = True
    use_prior_labels: bool = True
    train_freq_bias: bool = False
    freq_eps: float = 1e-3
    task: str = "sgcls"
    seed: int = 0
    # synthetic data
    num_scenes: int = 100
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    min_objects: int = 4
    max_objects: int = 10
    noise: float = 0.1
    label_corruption: float = 0.3
    max_relations_per_object: int = 2
    min_box_frac: float = 0.1
    max_box_frac: float = 0.35

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and f.name not in ("gcn1", "gcn2", "seed", "epochs", "max_relations_per_object") and v <= 0:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.task not in ("predcls", "sgcls"):
            raise ConfigError(f"task must be predcls or sgcls, got {self.task!r}")
        if self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError("need lr > 0 and 0 <= momentum < 1")
        if self.epochs < 0 or self.gcn1 < 0 or self.gcn2 < 0:
            raise ConfigError("epochs and gcn sizes must be non-negative")

    @property
    def gcn1_size(self) -> int:
        return self.gcn1 or self.hidden1

    @property
    def gcn2_size(self) -> int:
        return self.gcn2 or self.hidden2

    def gen_config(self) -> GenConfig:
        return GenConfig(
            num_labels=self.num_labels,
            num_predicates=self.num_predicates,
            feature_dim=self.feature_dim,
            min_objects=self.min_objects,
            max_objects=self.max_objects,
            noise=self.noise,
            label_corruption=self.label_corruption,
            max_relations_per_object=self.max_relations_per_object,
            min_box_frac=self.min_box_frac,
            max_box_frac=self.max_box_frac,
        )

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, strict: bool = True) -> "RunConfig":
        values = parse_key_values(text)
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                if strict:
                    raise ConfigError(f"unknown config key {key!r}")
                continue
            kwargs[key] = coerce(known[key].type, raw, key)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def coerce(type_name, raw: str, key: str = "?"):
    try:
        if type_name in ("bool", bool):
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name in ("int", int):
            return int(raw)
        if type_name in ("float", float):
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
