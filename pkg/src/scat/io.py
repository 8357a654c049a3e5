"""Versioned binary formats: the "CAE1" corpus archive and the "SCAT" model file.

Both formats are little-endian throughout and begin with a 4-byte magic, a
length-prefixed JSON block for anything self-describing, and raw numeric
sections. Saving what was just loaded reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DocMatrix
from .model import ModelParams

CORPUS_MAGIC = b"CAE1"
MODEL_MAGIC = b"SCAT"
MODEL_VERSION = 1

_ENTRY_DTYPE = np.dtype([("index", "<u4"), ("weight", "<f4")])


class FormatError(Exception):
    """Raised for unrecognized magics, bad versions or corrupt payloads."""


def _json_block(obj) -> bytes:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    data = payload.encode("utf-8")
    return struct.pack("<I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def json_block(self) -> dict:
        raw = self.take(self.u32())
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{self.path}: bad metadata block: {exc}") from exc

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


@dataclass
class CorpusArchive:
    matrix: DocMatrix
    vocab_tokens: list[str]
    class_names: list[str]
    config: dict


def save_corpus(
    path: str | Path,
    matrix: DocMatrix,
    vocab_tokens: list[str],
    class_names: list[str],
    config: dict,
) -> None:
    """Write a corpus archive.

    Layout: magic "CAE1"; u32-length-prefixed JSON metadata (vocab tokens in
    order, class names, config echo, doc ids); u64 row count; per row an i32
    label (-1 when unlabeled), u32 entry count and (u32 index, f32 weight)
    pairs.
    """
    if len(vocab_tokens) != matrix.v:
        raise ValueError("vocab size does not match the matrix")
    meta = {
        "vocab": list(vocab_tokens),
        "class_names": list(class_names),
        "config": config,
        "doc_ids": list(matrix.doc_ids or []),
    }
    parts = [CORPUS_MAGIC, _json_block(meta), struct.pack("<Q", matrix.n)]
    labels = matrix.labels
    for i in range(matrix.n):
        idx, w = matrix.row(i)
        entries = np.empty(len(idx), dtype=_ENTRY_DTYPE)
        entries["index"] = idx
        entries["weight"] = w
        label = int(labels[i]) if labels is not None else -1
        parts.append(struct.pack("<iI", label, len(idx)))
        parts.append(entries.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_corpus(path: str | Path) -> CorpusArchive:
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != CORPUS_MAGIC:
        raise FormatError(f"{path}: not a corpus archive (bad magic)")
    meta = r.json_block()
    for key in ("vocab", "class_names", "config"):
        if key not in meta:
            raise FormatError(f"{path}: metadata is missing {key!r}")
    v = len(meta["vocab"])
    n = r.u64()
    indptr = np.zeros(n + 1, dtype=np.int64)
    labels = np.empty(n, dtype=np.int32)
    idx_parts: list[np.ndarray] = []
    w_parts: list[np.ndarray] = []
    for i in range(n):
        labels[i] = r.i32()
        count = r.u32()
        entries = np.frombuffer(r.take(count * _ENTRY_DTYPE.itemsize), dtype=_ENTRY_DTYPE)
        idx_parts.append(entries["index"])
        w_parts.append(entries["weight"])
        indptr[i + 1] = indptr[i] + count
    r.expect_end()
    doc_ids = meta.get("doc_ids") or None
    matrix = DocMatrix(
        n=n,
        v=v,
        indptr=indptr,
        indices=np.concatenate(idx_parts) if idx_parts else np.empty(0, np.uint32),
        weights=np.concatenate(w_parts) if w_parts else np.empty(0, np.float32),
        labels=None if (labels == -1).all() else labels,
        doc_ids=doc_ids,
    )
    return CorpusArchive(
        matrix=matrix,
        vocab_tokens=list(meta["vocab"]),
        class_names=list(meta["class_names"]),
        config=meta["config"],
    )


def save_model(
    path: str | Path,
    params: ModelParams,
    vocab_tokens: list[str],
    class_names: list[str] | None = None,
    weighting: str = "log_normalized_tf",
) -> None:
    """Write a model file.

    Layout: magic "SCAT"; u32 format version; u32-length-prefixed JSON
    manifest (h, v, k, variant, alpha, weighting, vocab, class names); then
    f32 little-endian sections W (row-major), b, c. Parameters are stored as
    float32, so train in float32 for a bit-exact round trip.
    """
    if len(vocab_tokens) != params.v:
        raise ValueError("vocab size does not match the model")
    manifest = {
        "h": params.h,
        "v": params.v,
        "k": params.k,
        "variant": params.variant,
        "alpha": params.alpha,
        "weighting": weighting,
        "vocab": list(vocab_tokens),
        "class_names": list(class_names) if class_names is not None else None,
    }
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", MODEL_VERSION),
        _json_block(manifest),
        np.ascontiguousarray(params.W, dtype="<f4").tobytes(),
        np.asarray(params.b, dtype="<f4").tobytes(),
        np.asarray(params.c, dtype="<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> tuple[ModelParams, dict]:
    """Read a model file back; returns (params, manifest)."""
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    version = r.u32()
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model format version {version}")
    manifest = r.json_block()
    try:
        h, v = int(manifest["h"]), int(manifest["v"])
        variant, k, alpha = manifest["variant"], int(manifest["k"]), float(manifest["alpha"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad manifest: {exc}") from exc
    if len(manifest.get("vocab", [])) != v:
        raise FormatError(f"{path}: manifest vocab length disagrees with v={v}")
    W = np.frombuffer(r.take(4 * h * v), dtype="<f4").reshape(h, v).copy()
    b = np.frombuffer(r.take(4 * h), dtype="<f4").copy()
    c = np.frombuffer(r.take(4 * v), dtype="<f4").copy()
    r.expect_end()
    params = ModelParams(W, b, c, variant=variant, k=k, alpha=alpha)
    return params, manifest
