"""Single-file checkpoints that round-trip bitwise.

Byte layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"GTANCKPT"
    8       4     uint32 format version
    12      8     uint64 header length H
    20      H     UTF-8 JSON header (sorted keys)
    20+H    8*N   float64 payload, tensors concatenated in header order,
                  each flattened row-major
    end-4   4     uint32 CRC-32 of every preceding byte

The header records the model config, the ``tensors`` list of
``[name, rows, cols]`` in payload order, the vocabulary (tokens, frequencies,
document frequencies), the respondent ids in row order and the TF-IDF
document count. Payload order is the parameter declaration order, then any
trainable word table ``emb.words``, then ``tables.words`` and ``tfidf.idf``.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .corpus import TfidfIndex, Vocabulary
from .errors import CheckpointError, CheckpointShapeError, CorruptCheckpointError
from .model import AblationConfig, EmbeddingTables, ModelConfig, param_shapes
from .ranker import GTAN

MAGIC = b"GTANCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def config_to_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["ablation"] = config.ablation.names()
    return d


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    ablation = AblationConfig.from_names(d.pop("ablation", []))
    return ModelConfig(ablation=ablation, **d)


def _tensor_order(model: GTAN) -> list[tuple[str, np.ndarray]]:
    shapes = param_shapes(model.config, len(model.tables.respondents))
    out = []
    for name, shape in shapes:
        value = model.params[name]
        if value.shape != shape:
            raise CheckpointShapeError(f"{name}: parameter has shape {value.shape}, "
                                       f"config expects {shape}")
        out.append((name, value))
    if "emb.words" in model.params:
        out.append(("emb.words", model.params["emb.words"]))
    out.append(("tables.words", model.tables.words))
    out.append(("tfidf.idf", model.tfidf.idf.reshape(1, -1)))
    return out


def save_checkpoint(model: GTAN, path) -> None:
    tensors = _tensor_order(model)
    respondents = sorted(model.tables.respondents, key=model.tables.respondents.get)
    header = {
        "config": config_to_dict(model.config),
        "tensors": [[name, int(v.shape[0]), int(v.shape[1])] for name, v in tensors],
        "vocab": {"tokens": list(model.vocab.tokens), "freq": list(model.vocab.freq),
                  "doc_freq": list(model.vocab.doc_freq)},
        "respondents": respondents,
        "num_documents": model.tfidf.num_documents,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = bytearray(_PREFIX.pack(MAGIC, VERSION, len(head)))
    body += head
    for _, value in tensors:
        body += np.ascontiguousarray(value, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(bytes(body))


def load_checkpoint(path, expect: ModelConfig | None = None) -> GTAN:
    """Read a checkpoint. With ``expect``, every stored tensor must match the
    shapes that config implies, otherwise CheckpointShapeError names both."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _PREFIX.size + 4:
        raise CorruptCheckpointError(f"{path}: file too short ({len(raw)} bytes)")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a GTAN checkpoint")
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads {VERSION}")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) != crc:
        raise CorruptCheckpointError(f"{path}: checksum mismatch (truncated or damaged)")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header") from exc

    config = config_from_dict(header["config"])
    pos = start + head_len
    tensors = {}
    for name, rows, cols in header["tensors"]:
        nbytes = 8 * rows * cols
        if pos + nbytes > len(raw) - 4:
            raise CorruptCheckpointError(f"{path}: payload ends inside {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=rows * cols,
                                      offset=pos).reshape(rows, cols).astype(np.float64)
        pos += nbytes
    if pos != len(raw) - 4:
        raise CorruptCheckpointError(f"{path}: {len(raw) - 4 - pos} trailing payload bytes")

    respondents = {r: i for i, r in enumerate(header["respondents"])}
    if expect is not None:
        wanted = dict(param_shapes(expect, len(respondents)))
        for name, shape in wanted.items():
            have = tensors.get(name)
            if have is None or have.shape != shape:
                got = None if have is None else have.shape
                raise CheckpointShapeError(
                    f"{name}: checkpoint has shape {got}, config expects {shape}")
        config = expect

    names = [n for n, _ in param_shapes(config, len(respondents))]
    params = {n: tensors[n] for n in names}
    if "emb.words" in tensors:
        params["emb.words"] = tensors["emb.words"]
    v = header["vocab"]
    vocab = Vocabulary(tuple(v["tokens"]), tuple(v["freq"]), tuple(v["doc_freq"]))
    tfidf = TfidfIndex(tensors["tfidf.idf"].reshape(-1), header["num_documents"])
    tables = EmbeddingTables(tensors["tables.words"], respondents)
    return GTAN(config, params, tables, vocab, tfidf)
