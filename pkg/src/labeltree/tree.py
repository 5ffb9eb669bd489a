"""M-ary label trees.

A tree is stored as a dense ``(N, M)`` int32 child table. Internal nodes are
numbered ``0..N-1`` in breadth-first order with the root at 0. A slot value
``>= 0`` is an internal node id, a negative value ``v`` is the leaf holding
label ``-v - 1`` and ``EMPTY`` marks an unused slot.

Two shape regimes are supported:

* unconstrained (``depth_cap is None``): the tree is a full M-ary tree once it
  is padded with ``(1 - K) mod (M - 1)`` phantom leaves, which means every
  subtree without padding holds ``1 mod (M - 1)`` labels;
* depth-constrained: every leaf sits at depth ``<= depth_cap`` (root is depth
  0), so a node at depth ``d`` holds at most ``M ** (depth_cap - d)`` labels.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EMPTY = np.iinfo(np.int32).min


class TreeError(ValueError):
    """Raised for malformed tree construction requests."""


class CapacityError(TreeError):
    """The requested depth cap cannot hold all labels."""


class UnknownLabelError(KeyError):
    pass


def leaf_code(label: int) -> int:
    return -int(label) - 1


def padding_count(n_labels: int, arity: int) -> int:
    """Number of phantom leaves that make a full ``arity``-ary tree."""
    if arity == 2:
        return 0
    return (1 - n_labels) % (arity - 1)


def root_fanout(n_labels: int, arity: int) -> int:
    """Occupied root slots for an unconstrained tree over ``n_labels``."""
    if arity == 2:
        return 2
    return (n_labels - 2) % (arity - 1) + 2


@dataclass(frozen=True)
class Path:
    """Root-to-leaf route: ``nodes[d]`` is the node at depth d, ``slots[d]``
    the child taken there."""

    nodes: tuple[int, ...]
    slots: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(zip(self.nodes, self.slots))


@dataclass(frozen=True, eq=False)
class Tree:
    arity: int
    children: np.ndarray
    labels: tuple[int, ...]
    depth_cap: int | None = None
    _paths: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        children = np.ascontiguousarray(self.children, dtype=np.int32)
        if children.ndim != 2 or children.shape[1] != self.arity:
            raise TreeError(f"child table must have shape (N, {self.arity})")
        children.setflags(write=False)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        object.__setattr__(self, "_paths", _collect_paths(children, self.labels))

    @property
    def n_nodes(self) -> int:
        return self.children.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def leaf_of_label(self) -> dict[int, tuple[int, int] | None]:
        """label -> (parent id, slot); ``None`` for a single-leaf tree."""
        return {
            lab: (p.nodes[-1], p.slots[-1]) if len(p) else None
            for lab, p in self._paths.items()
        }

    def path_of(self, label: int) -> Path:
        try:
            return self._paths[int(label)]
        except KeyError:
            raise UnknownLabelError(label) from None

    def depth_of(self, label: int) -> int:
        return len(self.path_of(label))

    def max_depth(self) -> int:
        return max((len(p) for p in self._paths.values()), default=0)

    def path_arrays(self, n_labels: int | None = None):
        """Dense path tables for the kernels.

        Returns ``(nodes, slots, lengths)`` of shapes ``(K, Dmax)``,
        ``(K, Dmax)`` and ``(K,)`` indexed by label id. Labels absent from the
        tree get length 0.
        """
        k = (max(self.labels) + 1) if n_labels is None else n_labels
        dmax = max(self.max_depth(), 1)
        nodes = np.zeros((k, dmax), dtype=np.int32)
        slots = np.zeros((k, dmax), dtype=np.int32)
        lengths = np.zeros(k, dtype=np.int32)
        for lab, p in self._paths.items():
            lengths[lab] = len(p)
            nodes[lab, : len(p)] = p.nodes
            slots[lab, : len(p)] = p.slots
        return nodes, slots, lengths

    def subtree_labels(self, node: int) -> list[int]:
        out = []
        stack = [node]
        while stack:
            n = stack.pop()
            for v in self.children[n]:
                if v == EMPTY:
                    continue
                if v >= 0:
                    stack.append(int(v))
                else:
                    out.append(-int(v) - 1)
        return sorted(out)

    def node_depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for n in range(self.n_nodes):
            for v in self.children[n]:
                if v >= 0 and v != EMPTY:
                    depth[v] = depth[n] + 1
        return depth

    def same_as(self, other: "Tree") -> bool:
        return (
            self.arity == other.arity
            and self.depth_cap == other.depth_cap
            and sorted(self.labels) == sorted(other.labels)
            and np.array_equal(self.children, other.children)
        )


def _collect_paths(children: np.ndarray, labels: Sequence[int]) -> dict[int, Path]:
    if children.shape[0] == 0:
        if len(labels) != 1:
            raise TreeError("a tree without internal nodes holds exactly one label")
        return {int(labels[0]): Path((), ())}
    paths: dict[int, Path] = {}
    stack = [(0, (), ())]
    seen_nodes = set()
    while stack:
        n, nodes, slots = stack.pop()
        if n in seen_nodes:
            raise TreeError(f"node {n} reached twice")
        seen_nodes.add(n)
        nodes = nodes + (n,)
        for j, v in enumerate(children[n]):
            if v == EMPTY:
                continue
            if v >= 0:
                if v >= children.shape[0]:
                    raise TreeError(f"node {n} points at missing node {v}")
                stack.append((int(v), nodes, slots + (j,)))
            else:
                lab = -int(v) - 1
                if lab in paths:
                    raise TreeError(f"label {lab} appears at two leaves")
                paths[lab] = Path(nodes, slots + (j,))
    if set(paths) != set(int(x) for x in labels):
        raise TreeError("leaf labels do not match the declared label set")
    return paths


def from_nested(nested, arity: int, depth_cap: int | None = None) -> Tree:
    """Build a tree from nested lists, e.g. ``[[0, 1], 2, [3, 4, 5]]``.

    Integers are labels, lists are internal nodes. ``None`` marks an empty
    slot. Ids are assigned breadth-first.
    """
    if isinstance(nested, int):
        return Tree(arity, np.zeros((0, arity), np.int32), (nested,), depth_cap)
    rows: list[list[int]] = []
    labels: list[int] = []
    queue = deque([nested])
    next_id = 1
    while queue:
        node = queue.popleft()
        if len(node) > arity:
            raise TreeError(f"node with {len(node)} children exceeds arity {arity}")
        row = [EMPTY] * arity
        for j, child in enumerate(node):
            if child is None:
                continue
            if isinstance(child, int):
                row[j] = leaf_code(child)
                labels.append(child)
            else:
                row[j] = next_id
                next_id += 1
                queue.append(child)
        rows.append(row)
    return Tree(arity, np.array(rows, dtype=np.int32).reshape(-1, arity), tuple(labels), depth_cap)


def to_nested(tree: Tree):
    if tree.n_nodes == 0:
        return tree.labels[0]

    def rec(n):
        out = []
        for v in tree.children[n]:
            if v == EMPTY:
                out.append(None)
            elif v >= 0:
                out.append(rec(int(v)))
            else:
                out.append(-int(v) - 1)
        while out and out[-1] is None:
            out.pop()
        return out

    return rec(0)


def renumber_bfs(children: np.ndarray) -> np.ndarray:
    """Relabel internal nodes in breadth-first order from node 0."""
    n = children.shape[0]
    if n == 0:
        return children.copy()
    order = []
    queue = deque([0])
    while queue:
        v = queue.popleft()
        order.append(v)
        for c in children[v]:
            if c >= 0 and c != EMPTY:
                queue.append(int(c))
    new_id = {old: new for new, old in enumerate(order)}
    out = np.full_like(children, EMPTY)
    for old, new in new_id.items():
        for j, c in enumerate(children[old]):
            if c == EMPTY:
                continue
            out[new, j] = new_id[int(c)] if c >= 0 else c
    return out


# -- construction ------------------------------------------------------------


def _balanced_sizes(n: int, arity: int, depth: int, depth_cap: int | None, is_root: bool) -> list[int]:
    """Child subtree sizes for a maximally balanced node holding ``n`` labels."""
    if depth_cap is None:
        fan = root_fanout(n, arity) if is_root else arity
        if arity == 2:
            return [n - n // 2, n // 2]
        extra = (n - fan) // (arity - 1)
        base, rem = divmod(extra, fan)
        return [1 + (arity - 1) * (base + (1 if j < rem else 0)) for j in range(fan)]
    fan = min(arity, n)
    base, rem = divmod(n, fan)
    return [base + (1 if j < rem else 0) for j in range(fan)]


def pack_balanced(labels: Sequence[int], arity: int, depth_cap: int | None = None) -> Tree:
    """Pack labels, in the given order, into a maximally balanced tree."""
    labels = [int(x) for x in labels]
    check_capacity(len(labels), arity, depth_cap)
    if len(labels) == 1:
        return Tree(arity, np.zeros((0, arity), np.int32), (labels[0],), depth_cap)
    rows: list[list[int]] = []
    queue = deque([(labels, 0)])
    while queue:
        labs, depth = queue.popleft()
        row = [EMPTY] * arity
        sizes = _balanced_sizes(len(labs), arity, depth, depth_cap, is_root=not rows)
        start = 0
        for j, size in enumerate(sizes):
            part = labs[start : start + size]
            start += size
            if size == 1:
                row[j] = leaf_code(part[0])
            else:
                row[j] = len(rows) + len(queue) + 1
                queue.append((part, depth + 1))
        rows.append(row)
    return Tree(arity, np.array(rows, dtype=np.int32), tuple(labels), depth_cap)


def check_capacity(n_labels: int, arity: int, depth_cap: int | None) -> None:
    if n_labels < 1:
        raise TreeError("a tree needs at least one label")
    if arity < 2:
        raise TreeError("arity must be at least 2")
    if depth_cap is not None:
        if depth_cap < 0:
            raise TreeError("depth cap must be non-negative")
        if arity**depth_cap < n_labels:
            raise CapacityError(
                f"{arity}**{depth_cap} = {arity ** depth_cap} leaves cannot hold {n_labels} labels"
            )


def build_initial_tree(labels: Iterable[int], arity: int, depth_cap: int | None = None, seed: int = 0) -> Tree:
    """Random balanced starting tree: shuffle with ``seed``, then pack."""
    labels = [int(x) for x in labels]
    check_capacity(len(labels), arity, depth_cap)
    if len(set(labels)) != len(labels):
        raise TreeError("duplicate labels")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    return pack_balanced([labels[i] for i in order], arity, depth_cap)


def path_of(tree: Tree, label: int) -> Path:
    return tree.path_of(label)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "structure" | "arity" | "congruence" | "depth" | "capacity" | "label"
    node: int | None
    message: str

    def __str__(self) -> str:
        where = "" if self.node is None else f"node {self.node}: "
        return f"[{self.kind}] {where}{self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(map(str, self.violations))


def validate(tree: Tree) -> ValidationReport:
    """Check every tree invariant; never raises.

    Accepts any object with ``arity``, ``children``, ``labels`` and
    ``depth_cap``, so raw tables can be checked before a :class:`Tree` is
    built from them.
    """
    out: list[Violation] = []
    try:
        _validate(tree, out)
    except Exception as exc:  # noqa: BLE001 - a broken table is itself a finding
        out.append(Violation("structure", None, f"unreadable tree: {exc}"))
    return ValidationReport(tuple(out))


def _validate(tree: Tree, out: list[Violation]) -> None:
    M = tree.arity
    ch = tree.children
    N = ch.shape[0]
    K = len(tree.labels)
    if K == 0:
        out.append(Violation("label", None, "tree holds no labels"))
        return
    if len(set(tree.labels)) != K:
        out.append(Violation("label", None, "duplicate labels"))
    if N == 0:
        if K != 1:
            out.append(Violation("label", None, f"{K} labels but no internal nodes"))
        return

    # reachability / single-parent from the root
    parent = np.full(N, -1)
    depth = np.zeros(N, dtype=np.int64)
    order = []
    seen = np.zeros(N, dtype=bool)
    seen[0] = True
    queue = deque([0])
    leaf_seen: dict[int, int] = {}
    leaf_depth: dict[int, int] = {}
    while queue:
        n = queue.popleft()
        order.append(n)
        for v in ch[n]:
            if v == EMPTY:
                continue
            if v >= 0:
                if v >= N:
                    out.append(Violation("structure", n, f"child id {v} out of range"))
                    continue
                if seen[v]:
                    out.append(Violation("structure", n, f"node {v} has several parents"))
                    continue
                seen[v] = True
                parent[v] = n
                depth[v] = depth[n] + 1
                queue.append(int(v))
            else:
                lab = -int(v) - 1
                leaf_seen[lab] = leaf_seen.get(lab, 0) + 1
                leaf_depth[lab] = int(depth[n]) + 1
    for n in np.flatnonzero(~seen):
        out.append(Violation("structure", int(n), "unreachable from the root"))
    for lab, c in leaf_seen.items():
        if c > 1:
            out.append(Violation("label", None, f"label {lab} appears at {c} leaves"))
    missing = set(tree.labels) - set(leaf_seen)
    extra = set(leaf_seen) - set(tree.labels)
    if missing:
        out.append(Violation("label", None, f"labels without a leaf: {sorted(missing)[:10]}"))
    if extra:
        out.append(Violation("label", None, f"undeclared leaf labels: {sorted(extra)[:10]}"))

    occupied = (ch != EMPTY).sum(axis=1)
    for n in order:
        if occupied[n] < 2:
            out.append(Violation("arity", n, f"{occupied[n]} occupied child slots, need 2..{M}"))

    # bottom-up subtree label counts and empty-slot counts
    count = np.zeros(N, dtype=np.int64)
    deficit = np.zeros(N, dtype=np.int64)
    for n in reversed(order):
        for v in ch[n]:
            if v == EMPTY:
                deficit[n] += 1
            elif v >= 0:
                if v < N:
                    count[n] += count[v]
                    deficit[n] += deficit[v]
            else:
                count[n] += 1

    if tree.depth_cap is None:
        if M > 2:
            pad = padding_count(K, M)
            if deficit[0] != pad:
                out.append(
                    Violation(
                        "congruence",
                        0,
                        f"{K} labels with {deficit[0]} empty slots; a well-formed tree has exactly {pad}",
                    )
                )
            for n in order:
                if deficit[n] == 0 and count[n] % (M - 1) != 1 % (M - 1):
                    out.append(
                        Violation("congruence", n, f"subtree holds {count[n]} labels, not 1 mod {M - 1}")
                    )
                elif deficit[n] > pad:
                    out.append(
                        Violation(
                            "congruence",
                            n,
                            f"subtree holds {count[n]} labels with {deficit[n]} empty slots (max {pad})",
                        )
                    )
    else:
        D = tree.depth_cap
        for lab, d in leaf_depth.items():
            if d > D:
                out.append(Violation("depth", None, f"label {lab} at depth {d} > cap {D}"))
        for n in order:
            d = int(depth[n])
            cap = M ** (D - d) if D >= d else 0
            if count[n] > cap:
                out.append(Violation("capacity", n, f"depth {d} subtree holds {count[n]} > {cap} labels"))


# -- dump ---------------------------------------------------------------------


def dump_lines(tree: Tree, names: Sequence[str] | None = None, topk: int = 4) -> list[str]:
    """One line per internal node: ``node <id> depth <d> labels <n> top[<k>]: ...``.

    The ``top`` entries are the lowest label ids in the subtree; vocabularies
    are built in descending-frequency order, so these are the most common.
    """
    depths = tree.node_depths()
    lines = []
    for n in range(tree.n_nodes):
        labs = tree.subtree_labels(n)
        top = labs[:topk]
        words = [names[i] if names is not None else str(i) for i in top]
        lines.append(f"node {n} depth {depths[n]} labels {len(labs)} top[{topk}]: {' '.join(words)}")
    return lines
