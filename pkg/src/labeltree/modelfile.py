"""Binary model file (little-endian).

Layout::

    b"TRSF"  u32 version  u8 mode
    u32 M  u32 D (0 = uncapped)  u32 |V|  u32 d  u32 T  u32 K  u32 N
    |V| words, then K labels (classification only), each u32 length + UTF-8
    U (|V|, d) f32, R (T, d, d) f32
    children (N, M) i32: >= 0 node id, -(label + 1) leaf, INT32_MIN empty
    W (N, M, d) f32, B (N, M) f32

In LM mode the label vocabulary is the word vocabulary, so K = |V| and no
second string table is written.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import CLASSIFY, LM, Model
from .tree import Tree

MAGIC = b"TRSF"
VERSION = 1
_MODES = {CLASSIFY: 0, LM: 1}
_HEADER = struct.Struct("<4sIB7I")


class ModelFileError(ValueError):
    """Unreadable or inconsistent model file."""


def _strings(out: list[bytes], items) -> None:
    for s in items:
        b = s.encode("utf-8")
        out.append(struct.pack("<I", len(b)))
        out.append(b)


def _array(a: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def save_model(model: Model, path) -> None:
    t = model.tree
    n_nodes = t.n_nodes
    K = model.n_labels
    parts = [_HEADER.pack(MAGIC, VERSION, _MODES[model.mode], t.arity, t.depth_cap or 0, len(model.words),
                          model.dim, model.context, K, n_nodes)]
    _strings(parts, model.words)
    if model.mode == CLASSIFY:
        _strings(parts, model.label_names)
    parts.append(_array(model.U, "f4"))
    parts.append(_array(model.R, "f4"))
    parts.append(_array(t.children, "i4"))
    parts.append(_array(model.W[:n_nodes], "f4"))
    parts.append(_array(model.B[:n_nodes], "f4"))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError("model file is truncated")
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def strings(self, n: int) -> list[str]:
        out = []
        for _ in range(n):
            (k,) = struct.unpack("<I", self.take(4))
            try:
                out.append(self.take(k).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ModelFileError(f"bad string in vocabulary: {exc}") from None
        return out

    def array(self, dtype: str, shape) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        a = np.frombuffer(self.take(n), dtype=dt).reshape(shape)
        return np.ascontiguousarray(a.astype(dtype))


def load_model(path) -> Model:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror}") from exc
    rd = _Reader(data)
    magic, version, mode_b, M, D, V, d, T, K, N = _HEADER.unpack(rd.take(_HEADER.size))
    if magic != MAGIC:
        raise ModelFileError(f"{path}: not a model file")
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    modes = {v: k for k, v in _MODES.items()}
    if mode_b not in modes:
        raise ModelFileError(f"{path}: unknown mode byte {mode_b}")
    mode = modes[mode_b]
    words = rd.strings(V)
    labels = rd.strings(K) if mode == CLASSIFY else list(words)
    U = rd.array("f4", (V, d))
    R = rd.array("f4", (T, d, d))
    children = rd.array("i4", (N, M))
    W = rd.array("f4", (N, M, d))
    B = rd.array("f4", (N, M))
    if rd.pos != len(data):
        raise ModelFileError(f"{path}: {len(data) - rd.pos} trailing bytes")
    if N == 0:
        W = np.zeros((1, M, d), np.float32)
        B = np.zeros((1, M), np.float32)
    try:
        tree = Tree(M, children, tuple(range(K)), D or None)
    except ValueError as exc:
        raise ModelFileError(f"{path}: bad tree: {exc}") from None
    return Model(mode, tree, U, R, W, B, words, labels)
