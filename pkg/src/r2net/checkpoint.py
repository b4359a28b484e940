"""Binary checkpoints: magic "R2CK", version, config text, then named float32 tensors."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_key_values
from .freq import FreqTable
from .model import R2Net

MAGIC = b"R2CK"
VERSION = 1
_META_KEYS = ("epoch", "rng_state", "freq_empty")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    freq: FreqTable
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    rng_state: dict | None = None
    version: int = VERSION

    @classmethod
    def from_model(cls, model: R2Net, epoch: int = 0, rng_state: dict | None = None) -> "Checkpoint":
        tensors = {name: p.data.copy() for name, p in model.named_parameters().items()}
        return cls(model.config, model.freq, tensors, epoch, rng_state)

    def to_model(self) -> R2Net:
        model = R2Net.init(self.config, self.freq, rng=0)
        params = model.named_parameters()
        missing = set(params) ^ set(self.tensors)
        if missing:
            raise CheckpointError(f"parameter names do not match the configuration: {sorted(missing)[:5]}")
        for name, p in params.items():
            value = self.tensors[name]
            if value.shape != p.shape:
                raise CheckpointError(f"{name}: stored shape {value.shape} != model shape {p.shape}")
            p.data[...] = value
        return model


def _config_blob(ckpt: Checkpoint) -> bytes:
    text = ckpt.config.to_text()
    text += f"epoch = {ckpt.epoch}\n"
    text += f"freq_empty = {'true' if ckpt.freq.empty else 'false'}\n"
    text += f"rng_state = {json.dumps(ckpt.rng_state, sort_keys=True)}\n"
    return text.encode("utf-8")


def _tensor_record(name: str, value: np.ndarray) -> bytes:
    key = name.encode("utf-8")
    arr = np.ascontiguousarray(value, dtype="<f4")
    head = struct.pack("<I", len(key)) + key + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def dumps(ckpt: Checkpoint) -> bytes:
    blob = _config_blob(ckpt)
    out = [MAGIC, struct.pack("<I", ckpt.version), struct.pack("<Q", len(blob)), blob]
    records = dict(ckpt.tensors)
    records["freq.pair_link_prob"] = ckpt.freq.pair_link_prob
    records["freq.pair_pred_prob"] = ckpt.freq.pair_pred_prob
    for name in sorted(records):
        out.append(_tensor_record(name, records[name]))
    return b"".join(out)


def loads(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<Q", raw, 8)
    offset = 16
    values = parse_key_values(raw[offset : offset + blob_len].decode("utf-8"))
    offset += blob_len
    meta = {k: values.pop(k) for k in _META_KEYS if k in values}
    config = RunConfig.from_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    tensors = {}
    while offset < len(raw):
        (klen,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset : offset + klen].decode("utf-8")
        offset += klen
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        if offset + 4 * count > len(raw):
            raise CheckpointError(f"truncated tensor {name}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims)
        tensors[name] = arr.astype(np.float64)
        offset += 4 * count
    freq = FreqTable(
        tensors.pop("freq.pair_link_prob"),
        tensors.pop("freq.pair_pred_prob"),
        empty=meta.get("freq_empty", "false") == "true",
    )
    rng_state = json.loads(meta["rng_state"]) if "rng_state" in meta else None
    return Checkpoint(config, freq, tensors, int(meta.get("epoch", 0)), rng_state, version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
