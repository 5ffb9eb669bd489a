"""Node-split objective, its gradients, and split-quality measures.

For a node with label proportions ``q`` (K,) and per-label child
distributions ``P`` (K, M), the split objective is

    J = (2/M) * sum_i q_i * sum_j |p_j - P[i, j]|,    p = q @ P

It is 0 when every label is routed like the average and reaches its maximum
``(4/M)(1 - 1/M)`` exactly for balanced, pure splits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOL = 1e-9


@dataclass(frozen=True)
class SplitDistribution:
    q: np.ndarray
    P_cond: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        P = np.asarray(self.P_cond, dtype=np.float64)
        if q.ndim != 1 or P.ndim != 2 or P.shape[0] != q.shape[0]:
            raise ValueError(f"shape mismatch: q {q.shape}, P_cond {P.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "P_cond", P)

    @property
    def arity(self) -> int:
        return self.P_cond.shape[1]

    @property
    def p(self) -> np.ndarray:
        return self.q @ self.P_cond

    def check(self, tol: float = TOL) -> None:
        if np.any(self.q < -tol) or abs(self.q.sum() - 1.0) > tol:
            raise ValueError("q must be a probability vector")
        if np.any(self.P_cond < -tol) or np.any(np.abs(self.P_cond.sum(axis=1) - 1.0) > tol):
            raise ValueError("rows of P_cond must be probability vectors")


@dataclass(frozen=True)
class SplitQuality:
    J: float
    J_star: float
    beta: float
    alpha: float


def objective_value(split: SplitDistribution) -> float:
    M = split.arity
    dev = np.abs(split.p[None, :] - split.P_cond).sum(axis=1)
    return float(2.0 / M * (split.q @ dev))


def objective_max(M: int) -> float:
    if M < 2:
        raise ValueError("arity must be at least 2")
    return 4.0 / M * (1.0 - 1.0 / M)


def gradient_p(split: SplitDistribution) -> np.ndarray:
    """dJ/dP[i, j] = (2/M) q_i (1 - q_i) sign(P[i, j] - p_j), with sign(0) = 0."""
    q = split.q
    scale = 2.0 / split.arity * q * (1.0 - q)
    return scale[:, None] * np.sign(split.P_cond - split.p[None, :])


def gradient_logp(split: SplitDistribution) -> np.ndarray:
    """dJ/d log P[i, j]: the probability-space gradient times P[i, j]."""
    return gradient_p(split) * split.P_cond


def balancedness(split: SplitDistribution) -> float:
    return float(split.p.min())


def purity(split: SplitDistribution) -> float:
    P = split.P_cond
    return float(split.q @ np.minimum(P, 1.0 - P).sum(axis=1) / split.arity)


def split_quality(split: SplitDistribution) -> SplitQuality:
    return SplitQuality(
        J=objective_value(split),
        J_star=objective_max(split.arity),
        beta=balancedness(split),
        alpha=purity(split),
    )


def gradient_from_stats(sums: np.ndarray, counts: np.ndarray, log_space: bool = False) -> np.ndarray:
    """Gradient table for labels at one node, from raw (sum, count) statistics.

    Labels with no count get a zero row (their conditional defaults to the
    node marginal). Returns zeros everywhere when the node has no data.
    """
    sums = np.asarray(sums, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    M = sums.shape[1]
    total = counts.sum()
    if total <= 0:
        return np.zeros_like(sums)
    q = counts / total
    p = sums.sum(axis=0) / total
    warm = counts > 0
    P = np.tile(p, (len(counts), 1))
    P[warm] = sums[warm] / counts[warm, None]
    g = (2.0 / M * q * (1.0 - q))[:, None] * np.sign(P - p[None, :])
    if log_space:
        g = g * P
    return g


def affinity_from_stats(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """``p_{j|i} - p_j`` per label, zero for labels without data."""
    sums = np.asarray(sums, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    out = np.zeros_like(sums)
    if total <= 0:
        return out
    p = sums.sum(axis=0) / total
    warm = counts > 0
    out[warm] = sums[warm] / counts[warm, None] - p[None, :]
    return out


# -- boosting bound ------------------------------------------------------------

LOG2_E = 1.0 / math.log(2.0)


def boosting_exponent(gamma: float, M: int, K: int, balanced: bool = False) -> float:
    """Exponent ``e`` in ``N >= (1/kappa) ** e`` internal nodes."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if M < 2 or K < 2:
        raise ValueError("need M >= 2 and K >= 2")
    lnK = math.log(K)
    if balanced:
        return 16.0 * (M - 1) * lnK / (LOG2_E * M * M * gamma * gamma)
    bracket = M * (1.0 - 2.0 * gamma) + 2.0 * gamma
    if bracket <= 0:
        raise ValueError(f"gamma={gamma} is outside the admissible range for M={M}")
    return 16.0 * bracket * (M - 1) * lnK / (LOG2_E * M * M * gamma * gamma)


def log_boosting_node_bound(kappa: float, gamma: float, M: int, K: int, balanced: bool = False) -> float:
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    return boosting_exponent(gamma, M, K, balanced) * -math.log(kappa)


def boosting_node_bound(kappa: float, gamma: float, M: int, K: int, balanced: bool = False) -> float:
    """Internal-node count sufficient for tree error <= kappa.

    Evaluated in log space; returns ``inf`` when the value overflows a double.
    """
    log_n = log_boosting_node_bound(kappa, gamma, M, K, balanced)
    try:
        return math.exp(log_n)
    except OverflowError:
        return math.inf
