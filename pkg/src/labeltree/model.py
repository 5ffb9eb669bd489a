"""Representations, per-node softmax decisions, and the parameter container.

Two representation functions are supported:

* bag of words (classification): ``r = sum_t U[t]`` over in-vocabulary tokens;
* log-bilinear context (language modeling): ``r = sum_k R_k U[w_{t-k}]``.

Each internal node ``n`` maps ``r`` to a distribution over its occupied child
slots with ``softmax(W[n] r + B[n])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import backend
from .tree import EMPTY, Tree

CLASSIFY = "classify"
LM = "lm"
PROB_FLOOR = 1e-12


def represent_bow(tokens: Sequence[int], U: np.ndarray) -> np.ndarray:
    tokens = [t for t in tokens if 0 <= t < U.shape[0]]
    if not tokens:
        return np.zeros(U.shape[1])
    return U[tokens].astype(np.float64).sum(axis=0)


def represent_context(window: Sequence[int], U: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``window[k]`` is the word ``k + 1`` positions back; it is multiplied by ``R[k]``."""
    if len(window) != R.shape[0]:
        raise ValueError(f"window of length {len(window)} for {R.shape[0]} context matrices")
    r = np.zeros(U.shape[1])
    for k, w in enumerate(window):
        r += R[k].astype(np.float64) @ U[w].astype(np.float64)
    return r


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def node_forward(weights: np.ndarray, bias: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Child distribution of one node: ``softmax(weights @ r + bias)``."""
    return softmax(np.asarray(weights, np.float64) @ np.asarray(r, np.float64) + bias)


def node_backward(weights: np.ndarray, bias: np.ndarray, r: np.ndarray, target: int,
                  log_mode: bool, lr: float = 0.0) -> np.ndarray:
    """One ascent step on ``p[target]`` (or ``log p[target]`` with ``log_mode``).

    Updates ``weights``/``bias`` in place by ``lr`` times their gradient and
    returns the gradient with respect to ``r`` (taken before the update).
    """
    M = weights.shape[0]
    if not 0 <= target < M:
        raise IndexError(f"target {target} outside 0..{M - 1}")
    p = node_forward(weights, bias, r)
    gz = -p
    gz[target] += 1.0
    if not log_mode:
        gz *= p[target]
    dr = gz @ weights
    weights += lr * np.outer(gz, r)
    bias += lr * gz
    return dr


def path_objective(U, R, W, B, children, path, inputs, mode, log_mode):
    """Per-example training objective: sum over the path of ``p`` or ``log p``.

    Pure float64 reference used by the gradient checks.
    """
    r = represent_bow(inputs, U) if mode == CLASSIFY else represent_context(inputs, U, R)
    total = 0.0
    for n, t in path:
        occ = np.flatnonzero(children[n] != EMPTY)
        p = node_forward(W[n, occ], B[n, occ], r)
        pt = p[list(occ).index(t)]
        total += np.log(max(pt, PROB_FLOOR)) if log_mode else pt
    return total


def path_gradients(U, R, W, B, children, path, inputs, mode, log_mode):
    """Analytic gradients of :func:`path_objective` wrt ``U, R, W, B``."""
    U, R, W, B = (np.asarray(a, np.float64) for a in (U, R, W, B))
    gU, gR, gW, gB = (np.zeros_like(a) for a in (U, R, W, B))
    r = represent_bow(inputs, U) if mode == CLASSIFY else represent_context(inputs, U, R)
    dr = np.zeros_like(r)
    for n, t in path:
        occ = np.flatnonzero(children[n] != EMPTY)
        ti = list(occ).index(t)
        w, b = W[n, occ].copy(), B[n, occ].copy()
        p = node_forward(w, b, r)
        gz = -p
        gz[ti] += 1.0
        if not log_mode:
            gz *= p[ti]
        dr += gz @ w
        gW[n, occ] += np.outer(gz, r)
        gB[n, occ] += gz
    if mode == CLASSIFY:
        for t in inputs:
            gU[t] += dr
    else:
        for k, w in enumerate(inputs):
            gU[w] += R[k].T @ dr
            gR[k] += np.outer(dr, U[w])
    return gU, gR, gW, gB


@dataclass
class Model:
    """Tree plus learnable parameters; all arrays are float32."""

    mode: str
    tree: Tree
    U: np.ndarray
    R: np.ndarray
    W: np.ndarray
    B: np.ndarray
    words: list[str]
    label_names: list[str]
    _paths: tuple | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    @property
    def arity(self) -> int:
        return self.tree.arity

    @property
    def context(self) -> int:
        return self.R.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def set_tree(self, tree: Tree) -> None:
        self.tree = tree
        self._paths = None

    def paths(self):
        if self._paths is None:
            self._paths = self.tree.path_arrays(self.n_labels)
        return self._paths

    # -- representations ---------------------------------------------------

    def represent(self, inputs) -> np.ndarray:
        """Float64 representations ``(n, d)`` for a batch of inputs.

        Classification inputs are token-id lists; LM inputs are context
        windows, most recent word first.
        """
        if self.mode == CLASSIFY:
            ptr, toks = pack_tokens(inputs, self.U.shape[0])
            return backend.bow_reps(self.U, ptr, toks)
        ctx = np.ascontiguousarray(np.asarray(inputs, dtype=np.int32).reshape(-1, self.context))
        return backend.ctx_reps(self.U, self.R, ctx)

    # -- queries -------------------------------------------------------------

    def log_probs_from_reps(self, reps: np.ndarray, labels) -> np.ndarray:
        nodes, slots, lengths = self.paths()
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_labels):
            raise KeyError("unknown label id")
        return backend.log_probs(self.W, self.B, self.tree.children, np.ascontiguousarray(reps),
                                 labels, nodes, slots, lengths)

    def predict_from_reps(self, reps: np.ndarray) -> np.ndarray:
        root = self.tree.labels[0] if self.tree.n_nodes == 0 else -1
        out, _ = backend.predict_bnb(self.W, self.B, self.tree.children, np.ascontiguousarray(reps), root)
        return out

    def node_probs(self, node: int, r: np.ndarray) -> np.ndarray:
        return np.exp(backend.node_log_softmax(self.W, self.B, self.tree.children, node,
                                               np.ascontiguousarray(r, dtype=np.float64)))


def pack_tokens(docs, vocab_size: int | None = None):
    """Ragged token lists -> ``(ptr int64, toks int32)``; out-of-range ids dropped."""
    ptr = np.zeros(len(docs) + 1, dtype=np.int64)
    flat = []
    for i, doc in enumerate(docs):
        ids = [int(t) for t in doc if t >= 0 and (vocab_size is None or t < vocab_size)]
        flat.extend(ids)
        ptr[i + 1] = ptr[i] + len(ids)
    return ptr, np.asarray(flat, dtype=np.int32)


def init_params(n_words: int, dim: int, n_nodes: int, arity: int, context: int, seed: int):
    """``U ~ U[-1/d, 1/d]``, node parameters zero, ``R_k = I / T``."""
    rng = np.random.default_rng(seed)
    U = rng.uniform(-1.0 / dim, 1.0 / dim, size=(n_words, dim)).astype(np.float32)
    if context > 0:
        R = np.tile(np.eye(dim, dtype=np.float32) / context, (context, 1, 1))
    else:
        R = np.zeros((0, dim, dim), dtype=np.float32)
    W = np.zeros((n_nodes, arity, dim), dtype=np.float32)
    B = np.zeros((n_nodes, arity), dtype=np.float32)
    return U, np.ascontiguousarray(R), W, B
