"""Versioned single-file model container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a
canonical JSON header, then little-endian float32 blobs addressed by byte
offsets recorded in the header.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embed import EmbeddingTable, Vocab
from .metapath import type_from_label
from .mhagnn import ModelConfig

MAGIC = b"MAGNETCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict  # name -> Tensor
    vocab: Vocab
    embedding: EmbeddingTable
    active_metapaths: frozenset
    seed: int = 0
    train_config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


def to_bytes(ck):
    blobs, offset = [], 0

    def blob(arr):
        nonlocal offset
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entry = {"offset": offset, "shape": list(arr.shape)}
        blobs.append(data)
        offset += len(data)
        return entry

    params = []
    for name, t in ck.params.items():
        entry = blob(t.data)
        entry["name"] = name
        params.append(entry)
    emb = blob(ck.embedding.matrix)
    emb["provenance"] = ck.embedding.provenance
    header = {
        "format": "magnet-ckpt/1",
        "model_config": ck.model_config.to_dict(),
        "train_config": ck.train_config,
        "seed": ck.seed,
        "active_metapaths": sorted(t.label(numeric=False) for t in ck.active_metapaths),
        "vocab": {"tokens": ck.vocab.tokens, "counts": ck.vocab.counts},
        "embedding": emb,
        "params": params,
        "history": ck.history,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(blobs)


def from_bytes(buf):
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, hlen = struct.unpack("<IQ", buf[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(buf[20:20 + hlen])
    base = 20 + hlen

    def read(entry):
        n = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        return np.frombuffer(buf, dtype="<f4", count=n, offset=start).reshape(entry["shape"])

    cfg = ModelConfig(**header["model_config"])
    params = {e["name"]: T.Tensor(read(e).astype(cfg.dtype), requires_grad=True, name=e["name"])
              for e in header["params"]}
    vocab = Vocab(header["vocab"]["tokens"], header["vocab"]["counts"])
    emb = header["embedding"]
    table = EmbeddingTable(vocab, read(emb).astype(np.float64), emb["provenance"])
    active = frozenset(type_from_label(s) for s in header["active_metapaths"])
    return Checkpoint(cfg, params, vocab, table, active, header["seed"], header["train_config"],
                      header["history"])


def save(ck, path):
    data = to_bytes(ck)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load(path):
    try:
        with open(path, "rb") as fh:
            return from_bytes(fh.read())
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
