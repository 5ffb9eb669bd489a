"""Fixed (non-learned) trees: M-ary Huffman and seeded random."""
from __future__ import annotations

import heapq
import itertools
from typing import Mapping, Sequence

import numpy as np

from .tree import Tree, TreeError, build_initial_tree, from_nested, padding_count


def huffman_tree(freqs: Mapping[int, float], arity: int) -> Tree:
    """M-ary Huffman tree minimising the frequency-weighted leaf depth.

    ``(1 - K) mod (M - 1)`` zero-weight dummies are added so every merge
    takes exactly ``arity`` items; they become empty slots in the result.
    Ties: lower weight first, then dummies, then labels by id, then merged
    nodes by creation order.
    """
    if arity < 2:
        raise TreeError("arity must be at least 2")
    if not freqs:
        raise TreeError("empty frequency table")
    items = sorted((int(k), float(v)) for k, v in freqs.items())
    if any(v < 0 for _, v in items):
        raise TreeError("frequencies must be non-negative")
    if not any(v > 0 for _, v in items):
        raise TreeError("frequency table needs a positive entry")
    if len(items) == 1:
        return from_nested(items[0][0], arity)

    K = len(items)
    pad = padding_count(K, arity)
    heap = []
    for d in range(pad):
        heap.append((0.0, d - pad, None))
    for rank, (lab, f) in enumerate(items):
        heap.append((f, rank, lab))
    heapq.heapify(heap)
    seq = itertools.count(K)
    while len(heap) > 1:
        group = [heapq.heappop(heap) for _ in range(min(arity, len(heap)))]
        node = [g[2] for g in group if g[2] is not None]
        node += [None] * (len(group) - len(node))
        heapq.heappush(heap, (sum(g[0] for g in group), next(seq), node))
    return from_nested(heap[0][2], arity)


def random_tree(labels: Sequence[int], arity: int, depth_cap: int | None = None, seed: int = 0) -> Tree:
    return build_initial_tree(labels, arity, depth_cap, seed)


def flat_tree(labels: Sequence[int]) -> Tree:
    """Depth-1 tree with one slot per label (a plain softmax)."""
    labels = [int(x) for x in labels]
    if len(labels) < 2:
        return from_nested(labels[0], 2)
    return from_nested(list(labels), len(labels), depth_cap=1)


def expected_depth(tree: Tree, freqs: Mapping[int, float]) -> float:
    total = sum(freqs.values())
    return sum(f * tree.depth_of(lab) for lab, f in freqs.items()) / total


def label_frequencies(targets, n_labels: int) -> dict[int, float]:
    counts = np.bincount(np.asarray(targets, dtype=np.int64), minlength=n_labels)
    return {i: float(c) for i, c in enumerate(counts)}
