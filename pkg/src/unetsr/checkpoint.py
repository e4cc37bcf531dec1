"""Binary checkpoint container: parameters, optimizer moments, progress.

Layout: magic "USRC", little-endian u32 format version, u32 header length,
UTF-8 JSON header (net config, epoch, lr, optimizer step, tensor table with
byte offsets), then raw little-endian float64 payload in table order. Every
floating value round-trips bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import Model, NetConfig, ParamSet
from .tensor import Tensor

MAGIC = b"USRC"
FORMAT_VERSION = 1

_PARAM = "param"
_ADAM_M = "adam_m"
_ADAM_V = "adam_v"


@dataclass
class Checkpoint:
    """In-memory image of a serialized training state."""

    config: NetConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    epoch: int = 0
    lr: float = 0.0

    def build_model(self) -> Model:
        tensors = {name: Tensor(value.copy(), requires_grad=True)
                   for name, value in self.params.items()}
        return Model(self.config, ParamSet(tensors))

    @classmethod
    def from_model(cls, model: Model, adam_m=None, adam_v=None, adam_t: int = 0,
                   epoch: int = 0, lr: float = 0.0) -> "Checkpoint":
        params = {name: t.data.copy() for name, t in model.params.items()}
        zeros = lambda: {name: np.zeros_like(v) for name, v in params.items()}
        return cls(
            config=model.config,
            params=params,
            adam_m={k: v.copy() for k, v in adam_m.items()} if adam_m else zeros(),
            adam_v={k: v.copy() for k, v in adam_v.items()} if adam_v else zeros(),
            adam_t=adam_t,
            epoch=epoch,
            lr=lr,
        )


def _tensor_table(ckpt: Checkpoint) -> list[tuple[str, str, np.ndarray]]:
    table = [(_PARAM, name, arr) for name, arr in ckpt.params.items()]
    table += [(_ADAM_M, name, arr) for name, arr in ckpt.adam_m.items()]
    table += [(_ADAM_V, name, arr) for name, arr in ckpt.adam_v.items()]
    return table


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write atomically (temp file + rename), so a crash never truncates."""
    table = _tensor_table(ckpt)
    entries = []
    offset = 0
    for kind, name, arr in table:
        entries.append({"kind": kind, "name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format_version": FORMAT_VERSION,
        "net_config": asdict(ckpt.config),
        "epoch": ckpt.epoch,
        "lr": ckpt.lr,
        "adam_t": ckpt.adam_t,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, _, arr in table:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if len(blob) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    try:
        config = NetConfig(**header["net_config"])
        entries = header["tensors"]
        epoch = int(header["epoch"])
        lr = float(header["lr"])
        adam_t = int(header["adam_t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed header fields: {exc}") from exc

    data = blob[12 + header_len:]
    buckets: dict[str, dict[str, np.ndarray]] = {_PARAM: {}, _ADAM_M: {}, _ADAM_V: {}}
    for entry in entries:
        try:
            kind = entry["kind"]
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: malformed tensor entry: {exc}") from exc
        if kind not in buckets:
            raise CheckpointError(f"{path}: unknown tensor kind {kind!r}")
        n_bytes = int(np.prod(shape)) * 8 if shape else 8
        if offset < 0 or offset + n_bytes > len(data):
            raise CheckpointError(f"{path}: truncated payload for tensor {name}")
        arr = np.frombuffer(data, dtype="<f8", count=n_bytes // 8, offset=offset)
        buckets[kind][name] = arr.reshape(shape).astype(np.float64)

    return Checkpoint(config=config, params=buckets[_PARAM], adam_m=buckets[_ADAM_M],
                      adam_v=buckets[_ADAM_V], adam_t=adam_t, epoch=epoch, lr=lr)
