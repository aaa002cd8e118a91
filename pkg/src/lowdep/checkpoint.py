"""Self-describing model files.

Layout: a magic line, one line of canonical JSON (format version, kind,
config, vocab, tensor table with names/dtypes/shapes/offsets), then the raw
little-endian tensor bytes in table order. Identical parameters give
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np
import torch

from .model import Encoder, ModelConfig, ParserModel, TaggerModel
from .vocab import Vocab

MAGIC = b"LOWDEP-CHECKPOINT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _dump(kind: str, config: ModelConfig, vocab: Vocab, state: dict, extra: dict) -> bytes:
    table, blobs, offset = [], [], 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        table.append({"name": name, "dtype": str(arr.dtype.name), "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "config": config.to_dict(),
              "vocab": vocab.to_dict(), "tensors": table, "extra": extra}
    line = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return MAGIC + line.encode("utf-8") + b"\n" + b"".join(blobs)


def _load(data: bytes):
    if not data.startswith(MAGIC):
        raise CheckpointError("not a lowdep checkpoint")
    rest = data[len(MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    body = rest[nl + 1:]
    state = {}
    for entry in header["tensors"]:
        chunk = body[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        state[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    return header, state


def dumps(model, extra: dict = None) -> bytes:
    extra = extra or {}
    if isinstance(model, ParserModel):
        return _dump("parser", model.config, model.vocab, model.state_dict(), extra)
    if isinstance(model, TaggerModel):
        return _dump("tagger", model.config, model.vocab, model.state_dict(),
                     {**extra, "task": model.task})
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def loads(data: bytes):
    header, state = _load(data)
    config = ModelConfig(**header["config"])
    vocab = Vocab.from_dict(header["vocab"])
    if header["kind"] == "parser":
        model = ParserModel(vocab, config)
    elif header["kind"] == "tagger":
        model = TaggerModel(vocab, config, header["extra"]["task"])
    else:
        raise CheckpointError(f"unknown checkpoint kind {header['kind']!r}")
    dtype = next(iter(state.values())).dtype if state else torch.float32
    model.to(dtype)
    model.load_state_dict(state)
    return model


def save(model, path: Union[str, Path], extra: dict = None) -> None:
    Path(path).write_bytes(dumps(model, extra))


def load(path: Union[str, Path]):
    return loads(Path(path).read_bytes())


def load_encoder(path: Union[str, Path]) -> Encoder:
    model = load(path)
    if not isinstance(model, TaggerModel):
        raise CheckpointError(f"{path} does not hold a pretrained tagging encoder")
    return model.encoder
