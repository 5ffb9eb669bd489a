"""Joint training of tree structure, node classifiers and representations.

The example stream is cut into chunks at batch boundaries, epoch boundaries
and scheduled rebuild points. Each chunk runs inside one kernel call (or
one call per thread in Hogwild mode). Between chunks the per-(label, depth)
statistics buffer is folded into :class:`NodeStats`, and at rebuild points
the tree is re-learned from those statistics.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assign import position_map, rebuild_tree
from .baselines import flat_tree, huffman_tree, label_frequencies, random_tree
from .corpus import ClassificationCorpus, CorpusError, LMCorpus
from .kernels import backend
from .model import CLASSIFY, LM, Model, init_params
from .stats import NodeStats
from .tree import Tree, TreeError, ValidationReport, build_initial_tree, validate

log = logging.getLogger(__name__)

TREES = ("learned", "huffman", "random", "flat")


@dataclass
class TrainConfig:
    mode: str = CLASSIFY
    tree: str = "learned"
    arity: int = 2
    depth: int | None = None  # None: unconstrained depth
    dim: int = 32
    lr: float = 0.1
    epochs: int = 5
    batch: int = 1000
    reassign: int = 50  # rebuilds in total (classification) or per epoch (LM); learned trees only
    threads: int = 1
    seed: int = 0
    context: int = 4  # LM window T
    optimizer: str = "sgd"  # sgd | adagrad (LM only)
    log_nodes: bool | None = None  # ascend log p at nodes; default: LM only
    rebuild_fraction: float | None = None  # leading share of training with rebuilds; default 0.5 / 1.0 for LM
    stats_decay: float = 1.0  # multiply stats by this before each rebuild

    def check(self) -> None:
        if self.mode not in (CLASSIFY, LM):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tree not in TREES:
            raise ValueError(f"unknown tree kind {self.tree!r}")
        if self.arity < 2:
            raise ValueError("arity must be at least 2")
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth cap must be positive")
        for name in ("dim", "batch", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.reassign < 0:
            raise ValueError("epochs and reassign must be non-negative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.mode == LM and self.context < 1:
            raise ValueError("LM mode needs a context window of at least 1")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "adagrad" and self.mode != LM:
            raise ValueError("adagrad is only available in LM mode")
        if self.rebuild_fraction is not None and not 0.0 < self.rebuild_fraction <= 1.0:
            raise ValueError("rebuild_fraction must lie in (0, 1]")
        if not 0.0 < self.stats_decay <= 1.0:
            raise ValueError("stats_decay must lie in (0, 1]")

    @property
    def rebuild_share(self) -> float:
        if self.rebuild_fraction is not None:
            return self.rebuild_fraction
        return 1.0 if self.mode == LM else 0.5

    @property
    def total_rebuilds(self) -> int:
        if self.tree != "learned":
            return 0
        return self.reassign * self.epochs if self.mode == LM else self.reassign

    def lr_hold(self) -> float:
        """Share of training run at the initial rate before the linear decay."""
        if self.optimizer == "adagrad":
            return 1.0
        if self.mode == CLASSIFY and self.tree == "learned":
            return self.rebuild_share
        return 0.0

    @property
    def uses_log_nodes(self) -> bool:
        return self.mode == LM if self.log_nodes is None else self.log_nodes


class DivergedError(FloatingPointError):
    """Parameters became non-finite; the learning rate is too large."""


def _check_finite(model: Model, step: int) -> None:
    for name in ("U", "R", "W", "B"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise DivergedError(f"parameter {name} is non-finite after {step} steps; lower the learning rate")


@dataclass
class TrainResult:
    model: Model
    stats: NodeStats
    reports: list[ValidationReport] = field(default_factory=list)  # one per rebuild
    seconds: float = 0.0
    steps: int = 0


# -- schedules ---------------------------------------------------------------------------


def rebuild_points(total: int, count: int, fraction: float) -> list[int]:
    """Steps (examples seen) at which the tree is rebuilt, evenly spaced."""
    if count == 0 or total == 0:
        return []
    horizon = fraction * total
    pts = sorted({max(1, int(round(k * horizon / count))) for k in range(1, count + 1)})
    return [p for p in pts if p <= total]


def learning_rate(step: float, total: int, lr: float, hold: float) -> float:
    """Constant for the first ``hold`` share of training, then linear to zero."""
    if total == 0:
        return lr
    start = hold * total
    if step <= start:
        return lr
    return lr * max(0.0, (total - step) / (total - start))


# -- setup --------------------------------------------------------------------------------


def initial_tree(config: TrainConfig, n_labels: int, targets: np.ndarray) -> Tree:
    labels = list(range(n_labels))
    if config.tree == "learned":
        return build_initial_tree(labels, config.arity, config.depth, config.seed)
    if config.tree == "random":
        return random_tree(labels, config.arity, config.depth, config.seed)
    if config.tree == "flat":
        return flat_tree(labels)
    freqs = label_frequencies(targets, n_labels)
    # labels never seen still need a leaf
    freqs = {k: v if v > 0 else 0.0 for k, v in freqs.items()}
    if not any(freqs.values()):
        freqs = {k: 1.0 for k in freqs}
    return huffman_tree(freqs, config.arity)


def new_model(config: TrainConfig, words, label_names, tree: Tree) -> Model:
    ctx = config.context if config.mode == LM else 0
    U, R, W, B = init_params(len(words), config.dim, max(tree.n_nodes, 1), tree.arity, ctx, config.seed)
    return Model(config.mode, tree, U, R, W, B, list(words), list(label_names))


class _Buffers:
    """Per-thread dense stats buffers sized for the current tree."""

    def __init__(self, n_threads: int, n_labels: int, depth: int, arity: int):
        self.sums = [np.zeros((n_labels, depth, arity)) for _ in range(n_threads)]
        self.cnts = [np.zeros((n_labels, depth)) for _ in range(n_threads)]

    def flush(self, stats: NodeStats, path_nodes: np.ndarray) -> None:
        for s, c in zip(self.sums, self.cnts):
            if c.any():
                stats.flush_buffer(s, c, path_nodes)
                s[...] = 0.0
                c[...] = 0.0


def _remap_nodes(arr: np.ndarray, mapping: dict[int, int], n_new: int) -> np.ndarray:
    out = np.zeros((max(n_new, 1),) + arr.shape[1:], dtype=arr.dtype)
    for old, new in mapping.items():
        if old < arr.shape[0]:
            out[new] = arr[old]
    return out


# -- main loop ------------------------------------------------------------------------------


def train(corpus, config: TrainConfig, on_rebuild=None, tree: Tree | None = None) -> TrainResult:
    """Run training; ``on_rebuild(step, tree, report)`` is called after each rebuild.

    ``tree`` replaces the starting tree that ``config.tree`` would build.
    """
    config.check()
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)

    if isinstance(corpus, ClassificationCorpus):
        if config.mode != CLASSIFY:
            raise ValueError("classification corpus given for LM mode")
        if len(corpus) == 0:
            raise CorpusError("empty corpus")
        n_labels = len(corpus.label_names)
        label_names = corpus.label_names
        words = corpus.words
        freq_targets = corpus.first_labels()
        ctx = None
    elif isinstance(corpus, LMCorpus):
        if config.mode != LM:
            raise ValueError("LM corpus given for classification mode")
        ctx, lm_targets = corpus.windows(config.context)
        if len(lm_targets) == 0:
            raise CorpusError("empty corpus")
        words = label_names = corpus.words
        n_labels = len(words)
        freq_targets = lm_targets
    else:
        raise TypeError(f"unsupported corpus type {type(corpus).__name__}")

    if tree is None:
        tree = initial_tree(config, n_labels, freq_targets)
    elif sorted(tree.labels) != list(range(n_labels)):
        raise TreeError("starting tree does not cover the corpus labels")
    model = new_model(config, words, label_names, tree)
    stats = NodeStats(tree.arity)
    result = TrainResult(model, stats)
    n_ex = len(freq_targets)
    total = config.epochs * n_ex
    if total == 0 or tree.n_nodes == 0:
        result.seconds = time.perf_counter() - t0
        return result

    rebuilds = rebuild_points(total, config.total_rebuilds, config.rebuild_share)
    hold = config.lr_hold()
    log_mode = int(config.uses_log_nodes)
    adagrad = config.optimizer == "adagrad"
    if adagrad:
        acc = [np.zeros_like(a) for a in (model.U, model.R, model.W, model.B)]
    else:
        acc = [np.zeros((1, 1), np.float32), np.zeros((1, 1, 1), np.float32),
               np.zeros((1, 1, 1), np.float32), np.zeros((1, 1), np.float32)]

    paths = model.paths()
    bufs = _Buffers(config.threads, n_labels, paths[0].shape[1], tree.arity)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def run_chunk(order, targets, lr0, lr1):
        nodes, slots, lengths = paths
        ch = model.tree.children
        shards = np.array_split(order, config.threads) if pool else [order]

        def work(t, shard):
            if len(shard) == 0:
                return
            # each shard walks the same lr range as the whole chunk
            if config.mode == CLASSIFY:
                backend.train_classify(model.U, model.W, model.B, ch, corpus.tok_ptr, corpus.toks, targets,
                                       shard, nodes, slots, lengths, bufs.sums[t], bufs.cnts[t],
                                       lr0, lr1, log_mode)
            else:
                backend.train_lm(model.U, model.R, model.W, model.B, ch, ctx, targets, shard,
                                 nodes, slots, lengths, bufs.sums[t], bufs.cnts[t], lr0, lr1, log_mode,
                                 int(adagrad), *acc)

        if pool is None:
            work(0, shards[0])
        else:
            list(pool.map(lambda a: work(*a), enumerate(shards)))

    step = 0
    next_rb = 0
    try:
        for epoch in range(config.epochs):
            perm = rng.permutation(n_ex).astype(np.int64)
            targets = corpus.sample_targets(rng) if config.mode == CLASSIFY else lm_targets
            pos = 0
            while pos < n_ex:
                end = min(n_ex, pos + config.batch)
                if next_rb < len(rebuilds):
                    end = min(end, rebuilds[next_rb] - step + pos)
                lr0 = learning_rate(step, total, config.lr, hold)
                lr1 = learning_rate(step + end - pos, total, config.lr, hold)
                run_chunk(np.ascontiguousarray(perm[pos:end]), targets, lr0, lr1)
                step += end - pos
                pos = end
                while next_rb < len(rebuilds) and rebuilds[next_rb] <= step:
                    next_rb += 1
                    bufs.flush(stats, paths[0])
                    paths, bufs = _rebuild(model, stats, config, result, step, on_rebuild, acc, adagrad)
        bufs.flush(stats, paths[0])
        _check_finite(model, step)
    finally:
        if pool is not None:
            pool.shutdown()
    result.steps = step
    result.seconds = time.perf_counter() - t0
    return result


def _rebuild(model: Model, stats: NodeStats, config: TrainConfig, result: TrainResult, step: int,
             on_rebuild, acc, adagrad):
    _check_finite(model, step)
    if config.stats_decay < 1.0:
        stats.decay(config.stats_decay)
    old = model.tree
    new = rebuild_tree(stats, old.labels, old.arity, config.depth,
                       log_gradients=config.uses_log_nodes, previous=old)
    report = validate(new)
    result.reports.append(report)
    if not report.ok:
        raise TreeError(f"rebuild at step {step} produced an invalid tree:\n{report}")
    mapping = position_map(old, new)
    stats.remap(mapping)
    model.W = _remap_nodes(model.W, mapping, new.n_nodes)
    model.B = _remap_nodes(model.B, mapping, new.n_nodes)
    if adagrad:
        acc[2] = _remap_nodes(acc[2], mapping, new.n_nodes)
        acc[3] = _remap_nodes(acc[3], mapping, new.n_nodes)
    model.set_tree(new)
    if on_rebuild is not None:
        on_rebuild(step, new, report)
    paths = model.paths()
    bufs = _Buffers(config.threads, model.n_labels, paths[0].shape[1], new.arity)
    return paths, bufs
