"""Running child-probability statistics per (node, label).

Every time an example of label ``i`` passes node ``n`` during training, the
node's predicted child distribution is added to ``sum[n, i]`` and the visit
count ``count[n, i]`` goes up by one. Tree reassignment reads conditional
means ``sum / count`` and their count-weighted average per node.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping

import numpy as np


class NoDataError(ValueError):
    """A mean was requested where nothing has been recorded."""


class NodeStats:
    """Sparse ``(node, label) -> (sum_probas, count)`` accumulator."""

    def __init__(self, arity: int):
        if arity < 2:
            raise ValueError("arity must be at least 2")
        self.arity = arity
        # node -> label -> float64 vector of length arity + 1 (last entry = count)
        self._data: dict[int, dict[int, np.ndarray]] = defaultdict(dict)

    # -- recording -------------------------------------------------------------

    def record(self, node: int, label: int, probs) -> None:
        p = np.asarray(probs, dtype=np.float64)
        if p.shape != (self.arity,):
            raise ValueError(f"expected a {self.arity}-vector, got shape {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("probs must be a probability vector")
        e = self._slot(node, label)
        e[:-1] += p
        e[-1] += 1.0

    def add(self, node: int, label: int, sum_probas, count: float) -> None:
        """Add pre-aggregated sums (no per-record validation)."""
        if count <= 0:
            return
        e = self._slot(node, label)
        e[:-1] += sum_probas
        e[-1] += count

    def _slot(self, node: int, label: int) -> np.ndarray:
        row = self._data[int(node)]
        e = row.get(int(label))
        if e is None:
            e = row[int(label)] = np.zeros(self.arity + 1)
        return e

    def flush_buffer(self, sums: np.ndarray, counts: np.ndarray, path_nodes: np.ndarray) -> None:
        """Fold a dense per-(label, depth) buffer into the map.

        ``sums`` has shape ``(K, Dmax, M)`` and ``counts`` ``(K, Dmax)``;
        ``path_nodes[label, depth]`` names the node the buffer row belongs to.
        """
        labs, deps = np.nonzero(counts > 0)
        for lab, d in zip(labs.tolist(), deps.tolist()):
            self.add(int(path_nodes[lab, d]), lab, sums[lab, d], counts[lab, d])

    def decay(self, factor: float) -> None:
        if factor == 1.0:
            return
        for row in self._data.values():
            for e in row.values():
                e *= factor

    def remap(self, mapping: Mapping[int, int]) -> None:
        """Rename nodes ``old -> new``; nodes missing from ``mapping`` are dropped."""
        self._data = defaultdict(dict, {mapping[n]: row for n, row in self._data.items() if n in mapping})

    # -- queries ---------------------------------------------------------------

    def count(self, node: int, label: int) -> float:
        e = self._data.get(int(node), {}).get(int(label))
        return 0.0 if e is None else float(e[-1])

    def sum_probas(self, node: int, label: int) -> np.ndarray:
        e = self._data.get(int(node), {}).get(int(label))
        return np.zeros(self.arity) if e is None else e[:-1].copy()

    def conditional_mean(self, node: int, label: int) -> np.ndarray:
        e = self._data.get(int(node), {}).get(int(label))
        if e is None or e[-1] <= 0:
            raise NoDataError(f"no records for node {node}, label {label}")
        return e[:-1] / e[-1]

    def marginal_mean(self, node: int, labels: Iterable[int]) -> np.ndarray:
        sums, counts = self.node_table(node, labels)
        total = counts.sum()
        if total <= 0:
            raise NoDataError(f"no records at node {node} for the given labels")
        return sums.sum(axis=0) / total

    def node_table(self, node: int, labels: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """``(sums (n, M), counts (n,))`` for ``labels`` at ``node``; zeros if absent."""
        labels = list(labels)
        row = self._data.get(int(node), {})
        table = np.zeros((len(labels), self.arity + 1))
        for k, lab in enumerate(labels):
            e = row.get(int(lab))
            if e is not None:
                table[k] = e
        return table[:, :-1], table[:, -1]

    def nodes(self) -> list[int]:
        return sorted(n for n, row in self._data.items() if row)

    def keys(self) -> list[tuple[int, int]]:
        return sorted((n, lab) for n, row in self._data.items() for lab in row)

    def __len__(self) -> int:
        return sum(len(row) for row in self._data.values())

    # -- combination / persistence ----------------------------------------------

    def merge(self, other: "NodeStats") -> "NodeStats":
        if other.arity != self.arity:
            raise ValueError("cannot merge stats of different arity")
        out = self.copy()
        for n, row in other._data.items():
            for lab, e in row.items():
                out.add(n, lab, e[:-1], e[-1])
        return out

    def copy(self) -> "NodeStats":
        out = NodeStats(self.arity)
        for n, row in self._data.items():
            out._data[n] = {lab: e.copy() for lab, e in row.items()}
        return out

    def to_dict(self) -> dict:
        return {
            "arity": self.arity,
            "entries": [
                [n, lab, e[:-1].tolist(), float(e[-1])] for n, lab in self.keys() for e in [self._data[n][lab]]
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NodeStats":
        out = cls(int(d["arity"]))
        for n, lab, s, c in d["entries"]:
            out._slot(n, lab)[:] = [*s, c]
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, NodeStats) or other.arity != self.arity:
            return NotImplemented
        if self.keys() != other.keys():
            return False
        return all(np.array_equal(self._data[n][lab], other._data[n][lab]) for n, lab in self.keys())


def init_stats(arity: int) -> NodeStats:
    return NodeStats(arity)


def merge(a: NodeStats, b: NodeStats) -> NodeStats:
    return a.merge(b)
