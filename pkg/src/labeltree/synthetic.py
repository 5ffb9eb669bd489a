"""Synthetic corpora with latent structure a learned tree can exploit.

* :func:`clustered_lm` draws word clusters from a sparse Markov chain and a
  word from the current cluster, so the next word is well predicted by its
  cluster.
* :func:`topic_classification` makes each label a (topic, facet) pair whose
  documents mix topic words, facet words and noise. Label frequencies are
  Zipfian, so frequency-based trees cut across the pair structure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LABEL_PREFIX, ClassificationCorpus, LMCorpus, classification_from_lines, lm_from_lines


@dataclass
class LMTask:
    train: LMCorpus
    test: LMCorpus
    cluster_of: np.ndarray  # word string id -> cluster


def _zipf(n: int, s: float, rng) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return rng.permutation(w / w.sum())


def clustered_lm_sentences(n_tokens: int, n_clusters: int = 20, per_cluster: int = 10, successors: int = 2,
                           mean_len: float = 12.0, seed: int = 0):
    """Sentences (lists of word strings) with about ``n_tokens`` words in total.

    Word ``w<c>_<k>`` belongs to cluster ``c``. Each cluster moves to one of
    ``successors`` preferred clusters with high probability.
    """
    rng = np.random.default_rng(seed)
    trans = np.full((n_clusters, n_clusters), 0.02 / n_clusters)
    for c in range(n_clusters):
        nxt = rng.choice(n_clusters, size=successors, replace=False)
        trans[c, nxt] += 0.98 / successors
    trans /= trans.sum(axis=1, keepdims=True)
    emit = np.stack([_zipf(per_cluster, 1.0, rng) for _ in range(n_clusters)])
    start = np.full(n_clusters, 1.0 / n_clusters)

    sents, total = [], 0
    while total < n_tokens:
        n = max(2, int(rng.poisson(mean_len)))
        n = min(n, n_tokens - total) if n_tokens - total >= 2 else n
        c = rng.choice(n_clusters, p=start)
        words = []
        for _ in range(n):
            k = rng.choice(per_cluster, p=emit[c])
            words.append(f"w{c}_{k}")
            c = rng.choice(n_clusters, p=trans[c])
        sents.append(words)
        total += n
    return sents


def clustered_lm(n_train: int = 200_000, n_test: int = 20_000, seed: int = 0, **kw) -> LMTask:
    sents = clustered_lm_sentences(n_train + n_test, seed=seed, **kw)
    cut, acc = 0, 0
    while acc < n_train and cut < len(sents):
        acc += len(sents[cut])
        cut += 1
    train = lm_from_lines(" ".join(s) for s in sents[:cut])
    test = lm_from_lines((" ".join(s) for s in sents[cut:]), words=train.words)
    cluster = np.array([int(w[1:].split("_")[0]) if w.startswith("w") else -1 for w in train.words])
    return LMTask(train, test, cluster)


@dataclass
class ClassificationTask:
    train: ClassificationCorpus
    test: ClassificationCorpus
    topic_of: np.ndarray  # label id -> topic
    facet_of: np.ndarray  # label id -> facet
    valid: ClassificationCorpus | None = None


def topic_classification_lines(n: int, n_topics: int = 50, n_facets: int = 20, topic_words: int = 20,
                               facet_words: int = 20, noise_words: int = 2000, doc_len: int = 12,
                               topic_share: float = 0.4, facet_share: float = 0.4, zipf: float = 1.0,
                               seed: int = 0, rng=None):
    """Labeled lines for labels ``c<topic>_<facet>``.

    A document mixes words of its label's topic, words of its facet (shared
    by every topic) and noise. Recognising a label needs both parts, so a
    node can only separate label groups linearly if the groups follow the
    topic or facet structure.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    K = n_topics * n_facets
    shares = np.array([topic_share, facet_share, 1.0 - topic_share - facet_share])
    if np.any(shares < 0):
        raise ValueError("topic_share + facet_share must not exceed 1")
    label_p = _zipf(K, zipf, rng)
    labs = rng.choice(K, size=n, p=label_p)
    src = rng.choice(3, size=(n, doc_len), p=shares)
    t_idx = rng.integers(topic_words, size=(n, doc_len))
    f_idx = rng.integers(facet_words, size=(n, doc_len))
    z_idx = rng.integers(noise_words, size=(n, doc_len))
    lines = []
    for e in range(n):
        t, f = divmod(int(labs[e]), n_facets)
        toks = []
        for k in range(doc_len):
            s = src[e, k]
            if s == 0:
                toks.append(f"t{t}_{t_idx[e, k]}")
            elif s == 1:
                toks.append(f"f{f}_{f_idx[e, k]}")
            else:
                toks.append(f"n{z_idx[e, k]}")
        lines.append(f"{LABEL_PREFIX}c{t}_{f} " + " ".join(toks))
    return lines


def topic_classification(n_train: int = 100_000, n_test: int = 10_000, seed: int = 0, n_valid: int = 0,
                         **kw) -> ClassificationTask:
    """Train/test split, plus a validation split drawn after the test lines when ``n_valid > 0``."""
    rng = np.random.default_rng(seed)
    lines = topic_classification_lines(n_train + n_test + n_valid, rng=rng, **kw)
    train = classification_from_lines(lines[:n_train])

    def held_out(part):
        return classification_from_lines(part, words=train.words, label_names=train.label_names)

    test = held_out(lines[n_train : n_train + n_test])
    valid = held_out(lines[n_train + n_test :]) if n_valid else None
    pairs = [name[1:].split("_") for name in train.label_names]
    return ClassificationTask(train, test, np.array([int(a) for a, _ in pairs]), np.array([int(b) for _, b in pairs]),
                              valid)
