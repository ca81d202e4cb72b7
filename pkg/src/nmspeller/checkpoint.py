"""Versioned binary model container.

Layout: magic ``NMSP``, format version (u32), length-prefixed UTF-8 JSON
config, then named parameter tensors (u16 name length + name, u8 rank,
u32 dims, little-endian float64 data). Writing goes through a temporary
file and an atomic rename so an interrupted run never leaves a partial
checkpoint at the target path.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .config import TrainConfig
from .errors import CheckpointError
from .model import SpellChecker

MAGIC = b"NMSP"
FORMAT_VERSION = 1


def checkpoint_config(model):
    cfg = model.config.to_dict()
    cfg["vocab_size"] = len(model.vocab)
    if model.phonology is not None:
        cfg["phoneme_symbols"] = list(model.phonology.symbols)
        cfg["glyph_components"] = list(model.glyph.components)
    return cfg


def parameter_payload(model):
    """Serialized parameter section alone; stable across model toggles."""
    chunks = []
    params = model.parameters()
    chunks.append(struct.pack("<I", len(params)))
    for name, p in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", p.data.ndim))
        for dim in p.data.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_checkpoint(path, model):
    config_bytes = json.dumps(checkpoint_config(model), sort_keys=True).encode("utf-8")
    payload = b"".join([
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(config_bytes)),
        config_bytes,
        parameter_payload(model),
    ])
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, count):
        if self.pos + count > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def read_checkpoint(path):
    """(config dict, {name: float64 array}) from a checkpoint file."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a model checkpoint")
    version = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    config = json.loads(reader.take(reader.unpack("<I")).decode("utf-8"))
    count = reader.unpack("<I")
    params = {}
    for _ in range(count):
        name = reader.take(reader.unpack("<H")).decode("utf-8")
        rank = reader.unpack("<B")
        shape = tuple(reader.unpack("<I") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(reader.take(size * 8), dtype="<f8").reshape(shape)
        params[name] = data.astype(np.float64)
    return config, params


def load_checkpoint(path, vocab, resources=None):
    """Rebuild a model from a checkpoint plus external vocab/resources."""
    config, params = read_checkpoint(path)
    vocab_size = config.pop("vocab_size", None)
    symbols = config.pop("phoneme_symbols", None)
    components = config.pop("glyph_components", None)
    if vocab_size != len(vocab):
        raise CheckpointError(
            f"{path}: checkpoint was trained with vocabulary size {vocab_size}, "
            f"but the supplied vocabulary has {len(vocab)} entries"
        )
    cfg = TrainConfig.from_dict(config)
    model = SpellChecker(cfg, vocab, resources=resources)
    if model.phonology is not None:
        if symbols != list(model.phonology.symbols):
            raise CheckpointError(f"{path}: phoneme symbol inventory does not match resources")
        if components != list(model.glyph.components):
            raise CheckpointError(f"{path}: glyph component inventory does not match resources")

    live = model.parameters()
    for name, p in live.items():
        if name not in params:
            raise CheckpointError(f"{path}: checkpoint misses parameter {name}")
        stored = params[name]
        if stored.shape != p.data.shape:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {stored.shape}, "
                f"model expects {p.data.shape}"
            )
        p.data = np.ascontiguousarray(stored)
    extra = set(params) - set(live)
    if extra:
        raise CheckpointError(f"{path}: checkpoint holds unknown parameters {sorted(extra)}")
    return model, cfg
