"""Greedy label-to-child assignment and whole-tree rebuilds.

At each node the labels reaching it are handed to children one at a time,
always taking the (label, child) pair with the largest objective gradient
among children that can still accept a label. A child "can accept" when
some completion of the remaining labels still yields a legal tree:

* congruence mode: every non-empty child ends with ``1 mod (M-1)`` labels
  and exactly ``fanout`` children are non-empty;
* capacity mode: no child exceeds ``capacity`` labels and at least two
  children are non-empty.

Equal gradients (the sign form makes them common) are ordered by an
optional affinity table, by default ``p_{j|i} - p_j``, so a label prefers
the child it has been routed to most. Labels whose gradient row is entirely zero (no statistics yet) are placed
afterwards, in label order, on the least loaded child that can accept them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .objective import affinity_from_stats, gradient_from_stats
from .stats import NodeStats
from .tree import EMPTY, Tree, check_capacity, leaf_code, root_fanout


class InfeasibleError(ValueError):
    """No legal assignment exists for the requested constraints."""


@dataclass
class AssignmentProblem:
    labels: Sequence[int]
    gradients: np.ndarray
    arity: int
    capacity: int | None = None  # None selects congruence mode
    fanout: int | None = None  # congruence mode: required non-empty children
    affinity: np.ndarray | None = None  # secondary key among equal gradients (larger first)

    def __post_init__(self):
        self.labels = [int(x) for x in self.labels]
        self.gradients = np.asarray(self.gradients, dtype=np.float64)
        n = len(self.labels)
        if n == 0:
            raise ValueError("no labels to assign")
        if self.gradients.shape != (n, self.arity):
            raise ValueError(f"gradient table must be ({n}, {self.arity}), got {self.gradients.shape}")
        if not np.all(np.isfinite(self.gradients)):
            raise ValueError("gradients must be finite")
        if self.affinity is not None:
            self.affinity = np.asarray(self.affinity, dtype=np.float64)
            if self.affinity.shape != self.gradients.shape:
                raise ValueError("affinity table must match the gradient table")
        if self.capacity is None and self.fanout is None:
            self.fanout = root_fanout(n, self.arity) if n > 1 else 1

    @property
    def n(self) -> int:
        return len(self.labels)


# -- feasibility -----------------------------------------------------------------


def _min_final(size: int, arity: int) -> int:
    if arity == 2 or size == 0:
        return size
    r = (size - 1) % (arity - 1)
    return size if r == 0 else size + (arity - 1 - r)


def completion_exists(sizes: Sequence[int], remaining: int, arity: int, capacity: int | None = None,
                      fanout: int | None = None) -> bool:
    """Can ``remaining`` more labels be added so the node ends up legal?"""
    total = sum(sizes) + remaining
    nonempty = sum(1 for s in sizes if s > 0)
    if capacity is not None:
        if any(s > capacity for s in sizes):
            return False
        free = sum(capacity - s for s in sizes)
        if free < remaining:
            return False
        if total >= 2:
            empty = len(sizes) - nonempty
            return nonempty + min(remaining, empty) >= 2
        return True
    if fanout is None:
        fanout = root_fanout(total, arity)
    if nonempty > fanout or len(sizes) - nonempty < fanout - nonempty:
        return False
    need = sum(_min_final(s, arity) for s in sizes) + (fanout - nonempty)
    if need > total:
        return False
    # extra labels go to non-empty children in steps of (arity - 1)
    return arity == 2 or (total - need) % (arity - 1) == 0


def feasibility_check(sizes: Sequence[int], remaining: int, arity: int, capacity: int | None = None,
                      fanout: int | None = None) -> set[int]:
    """Children that are "full": one more label there leaves no legal completion."""
    sizes = list(sizes)
    n_slots = len(sizes)
    if remaining < 1:
        return set(range(n_slots))
    total = sum(sizes) + remaining
    nonempty = sum(1 for s in sizes if s > 0)
    full = set()
    if capacity is not None:
        free = sum(capacity - s for s in sizes)
        for j, s in enumerate(sizes):
            ne = nonempty + (s == 0)
            if s >= capacity or free - 1 < remaining - 1 or (total >= 2 and ne + min(remaining - 1, n_slots - ne) < 2):
                full.add(j)
        return full
    if fanout is None:
        fanout = root_fanout(total, arity)
    need = sum(_min_final(s, arity) for s in sizes)
    for j, s in enumerate(sizes):
        ne = nonempty + (s == 0)
        nd = need - _min_final(s, arity) + _min_final(s + 1, arity) + (fanout - ne)
        ok = (
            ne <= fanout
            and n_slots - ne >= fanout - ne
            and nd <= total
            and (arity == 2 or (total - nd) % (arity - 1) == 0)
        )
        if not ok:
            full.add(j)
    return full


# -- greedy assignment --------------------------------------------------------------


def assign_labels(problem: AssignmentProblem) -> dict[int, list[int]]:
    """Greedy assignment; returns ``child -> labels`` for every non-empty child."""
    M, n = problem.arity, problem.n
    cap, fan = problem.capacity, problem.fanout
    if not completion_exists([0] * M, n, M, cap, fan):
        raise InfeasibleError(f"{n} labels cannot be split over {M} children (capacity={cap}, fanout={fan})")
    G = problem.gradients
    sizes = [0] * M
    child_of = [-1] * n
    remaining = n
    full = feasibility_check(sizes, remaining, M, cap, fan)

    order = np.argsort(problem.labels, kind="stable")  # rank of each label by id
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    warm = np.flatnonzero(np.any(G != 0, axis=1))
    if warm.size:
        rows = np.repeat(warm, M)
        cols = np.tile(np.arange(M), warm.size)
        vals = G[warm].ravel()
        aff = problem.affinity[warm].ravel() if problem.affinity is not None else np.zeros_like(vals)
        # descending gradient, then descending affinity, then smallest label id, then smallest child
        idx = np.lexsort((cols, rank[rows], -aff, -vals))
        for k in idx:
            i, j = int(rows[k]), int(cols[k])
            if child_of[i] >= 0 or j in full:
                continue
            child_of[i] = j
            sizes[j] += 1
            remaining -= 1
            full = feasibility_check(sizes, remaining, M, cap, fan)
    for i in order:
        if child_of[i] >= 0:
            continue
        open_ = [j for j in range(M) if j not in full]
        if not open_:
            raise InfeasibleError("ran out of children with room")
        j = min(open_, key=lambda c: (sizes[c], c))
        child_of[i] = j
        sizes[j] += 1
        remaining -= 1
        full = feasibility_check(sizes, remaining, M, cap, fan)

    out: dict[int, list[int]] = {}
    for i in order:
        out.setdefault(child_of[i], []).append(problem.labels[i])
    return dict(sorted(out.items()))


def assignment_gain(problem: AssignmentProblem, assignment: dict[int, list[int]]) -> float:
    where = {lab: j for j, labs in assignment.items() for lab in labs}
    return float(sum(problem.gradients[k, where[lab]] for k, lab in enumerate(problem.labels)))


def is_legal(problem: AssignmentProblem, assignment: dict[int, list[int]]) -> bool:
    sizes = [len(assignment.get(j, [])) for j in range(problem.arity)]
    placed = sorted(lab for labs in assignment.values() for lab in labs)
    if placed != sorted(problem.labels):
        return False
    return completion_exists(sizes, 0, problem.arity, problem.capacity, problem.fanout)


def brute_force_assignment(problem: AssignmentProblem) -> tuple[float, dict[int, list[int]]]:
    """Exhaustive optimum of the first-order gain over all legal assignments."""
    M, n = problem.arity, problem.n
    best, best_assign = -np.inf, None
    G = problem.gradients
    for combo in itertools.product(range(M), repeat=n):
        sizes = np.bincount(combo, minlength=M).tolist()
        if not completion_exists(sizes, 0, M, problem.capacity, problem.fanout):
            continue
        gain = float(G[np.arange(n), combo].sum())
        if gain > best:
            best = gain
            best_assign = {}
            for k, j in enumerate(combo):
                best_assign.setdefault(j, []).append(problem.labels[k])
    if best_assign is None:
        raise InfeasibleError("no legal assignment")
    return best, best_assign


# -- whole-tree rebuild --------------------------------------------------------------


def _positions(tree: Tree | None) -> dict[tuple[int, ...], int]:
    """slot path from the root -> internal node id."""
    if tree is None or tree.n_nodes == 0:
        return {}
    out = {(): 0}
    stack = [((), 0)]
    while stack:
        pos, n = stack.pop()
        for j, v in enumerate(tree.children[n]):
            if v >= 0 and v != EMPTY:
                out[pos + (j,)] = int(v)
                stack.append((pos + (j,), int(v)))
    return out


def position_map(old: Tree | None, new: Tree) -> dict[int, int]:
    """``old id -> new id`` for internal nodes sitting at the same slot path."""
    old_pos = _positions(old)
    return {old_pos[pos]: nid for pos, nid in _positions(new).items() if pos in old_pos}


def rebuild_tree(stats: NodeStats, labels: Sequence[int], arity: int, depth_cap: int | None = None,
                 log_gradients: bool = False, previous: Tree | None = None) -> Tree:
    """Reassign every label top-down from the root using the current statistics.

    Node identity is positional: statistics for the node at slot path ``s``
    are read under the id that ``previous`` gives that position (or, with no
    previous tree, under the id the rebuilt tree will give it, which is the
    breadth-first id). New ids are breadth-first.
    """
    labels = sorted(int(x) for x in labels)
    check_capacity(len(labels), arity, depth_cap)
    if len(labels) == 1:
        return Tree(arity, np.zeros((0, arity), np.int32), tuple(labels), depth_cap)
    old_pos = _positions(previous)

    rows: list[list[int]] = []
    # breadth-first: (labels, depth, slot path); ids follow queue order
    queue = [(labels, 0, ())]
    head = 0
    while head < len(queue):
        labs, depth, pos = queue[head]
        node_id = head
        head += 1
        stat_id = old_pos.get(pos) if previous is not None else node_id
        if stat_id is None:
            G = A = np.zeros((len(labs), arity))
        else:
            sums, counts = stats.node_table(stat_id, labs)
            G = gradient_from_stats(sums, counts, log_space=log_gradients)
            A = affinity_from_stats(sums, counts)
        if depth_cap is None:
            prob = AssignmentProblem(labs, G, arity, fanout=root_fanout(len(labs), arity) if depth == 0 else arity,
                                     affinity=A)
        else:
            prob = AssignmentProblem(labs, G, arity, capacity=arity ** (depth_cap - depth - 1), affinity=A)
        groups = assign_labels(prob)
        row = [EMPTY] * arity
        for j, group in groups.items():
            if len(group) == 1:
                row[j] = leaf_code(group[0])
            else:
                row[j] = len(queue)
                queue.append((group, depth + 1, pos + (j,)))
        rows.append(row)
    return Tree(arity, np.array(rows, dtype=np.int32), tuple(labels), depth_cap)
