"""Corpus containers and line-based text loaders.

Classification lines follow the fastText convention: any number of
``__label__<tag>`` prefixes, then whitespace-separated tokens. LM files hold
one whitespace-tokenized sentence per line.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

LABEL_PREFIX = "__label__"
UNK = "<unk>"
EOS = "</s>"
BOS = "<s>"


class CorpusError(ValueError):
    """Malformed or empty corpus."""


@dataclass
class ClassificationCorpus:
    """Ragged token and label lists packed into CSR-style arrays."""

    words: list[str]
    label_names: list[str]
    tok_ptr: np.ndarray  # int64 (n+1,)
    toks: np.ndarray  # int32
    lab_ptr: np.ndarray  # int64 (n+1,)
    labs: np.ndarray  # int32
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.tok_ptr) - 1

    def tokens(self, e: int) -> np.ndarray:
        return self.toks[self.tok_ptr[e] : self.tok_ptr[e + 1]]

    def labels(self, e: int) -> np.ndarray:
        return self.labs[self.lab_ptr[e] : self.lab_ptr[e + 1]]

    def first_labels(self) -> np.ndarray:
        return self.labs[self.lab_ptr[:-1]]

    def sample_targets(self, rng: np.random.Generator) -> np.ndarray:
        """One label per example; multi-label lines pick uniformly."""
        n_lab = np.diff(self.lab_ptr)
        pick = (rng.random(len(self)) * n_lab).astype(np.int64)
        return self.labs[self.lab_ptr[:-1] + pick].astype(np.int32)


@dataclass
class LMCorpus:
    """Sentences of word ids; vocabulary holds ``<unk>``, ``</s>``, ``<s>``."""

    words: list[str]
    sentences: list[np.ndarray]

    @property
    def bos(self) -> int:
        return self.words.index(BOS)

    @property
    def eos(self) -> int:
        return self.words.index(EOS)

    def n_tokens(self) -> int:
        """Predicted positions: each word plus the end-of-sentence marker."""
        return sum(len(s) + 1 for s in self.sentences)

    def windows(self, context: int) -> tuple[np.ndarray, np.ndarray]:
        """``(ctx (n, T) int32, targets (n,) int32)``; ``ctx[:, k]`` is ``k + 1`` back."""
        bos, eos = self.bos, self.eos
        n = self.n_tokens()
        ctx = np.empty((n, context), dtype=np.int32)
        tgt = np.empty(n, dtype=np.int32)
        row = 0
        for s in self.sentences:
            seq = np.concatenate([np.full(context, bos, np.int32), s.astype(np.int32), [eos]])
            m = len(s) + 1
            for k in range(context):
                ctx[row : row + m, k] = seq[context - 1 - k : context - 1 - k + m]
            tgt[row : row + m] = seq[context:]
            row += m
        return ctx, tgt


# -- vocabulary -------------------------------------------------------------------------


def build_vocab(counts: Counter, min_count: int = 1, reserved: Sequence[str] = ()) -> list[str]:
    """Reserved symbols first, then words by descending count, ties by string."""
    kept = [w for w, c in counts.items() if c >= min_count and w not in reserved]
    kept.sort(key=lambda w: (-counts[w], w))
    return list(reserved) + kept


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8 ({exc})") from exc


# -- classification -------------------------------------------------------------------------


def parse_classification_line(line: str) -> tuple[list[str], list[str]]:
    labels, tokens = [], []
    for piece in line.split():
        if piece.startswith(LABEL_PREFIX) and not tokens:
            tag = piece[len(LABEL_PREFIX) :]
            if not tag:
                raise CorpusError("empty label tag")
            labels.append(tag)
        else:
            tokens.append(piece)
    return labels, tokens


def classification_from_lines(lines: Iterable[str], min_count: int = 1, words: Sequence[str] | None = None,
                              label_names: Sequence[str] | None = None, source: str = "<lines>") -> ClassificationCorpus:
    """Parse lines; vocabularies are built here unless given (test-time encoding).

    Lines without labels are skipped and counted. With a fixed label set,
    unknown labels are dropped and lines left without any known label are
    skipped too.
    """
    parsed = []
    skipped = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            labs, toks = parse_classification_line(line)
        except CorpusError as exc:
            raise CorpusError(f"{source}:{lineno}: {exc}") from None
        if not labs:
            skipped += 1
            continue
        parsed.append((labs, toks))
    if skipped:
        log.warning("%s: skipped %d line(s) without labels", source, skipped)

    if words is None:
        words = build_vocab(Counter(t for _, toks in parsed for t in toks), min_count)
    if label_names is None:
        label_names = build_vocab(Counter(l for labs, _ in parsed for l in labs), 1)
    wid = {w: i for i, w in enumerate(words)}
    lid = {l: i for i, l in enumerate(label_names)}

    tok_ptr, lab_ptr, toks_flat, labs_flat = [0], [0], [], []
    for labs, toks in parsed:
        lids = list(dict.fromkeys(lid[l] for l in labs if l in lid))
        if not lids:
            skipped += 1
            continue
        toks_flat.extend(wid[t] for t in toks if t in wid)
        labs_flat.extend(lids)
        tok_ptr.append(len(toks_flat))
        lab_ptr.append(len(labs_flat))
    return ClassificationCorpus(
        words=list(words),
        label_names=list(label_names),
        tok_ptr=np.asarray(tok_ptr, dtype=np.int64),
        toks=np.asarray(toks_flat, dtype=np.int32),
        lab_ptr=np.asarray(lab_ptr, dtype=np.int64),
        labs=np.asarray(labs_flat, dtype=np.int32),
        skipped=skipped,
    )


def load_classification_corpus(path, min_count: int = 1, words=None, label_names=None) -> ClassificationCorpus:
    return classification_from_lines(_read_lines(path), min_count, words, label_names, source=str(path))


# -- language modeling ---------------------------------------------------------------------


def lm_from_lines(lines: Iterable[str], min_count: int = 1, words: Sequence[str] | None = None) -> LMCorpus:
    """Words below ``min_count`` (or missing from ``words``) map to ``<unk>``."""
    sents = [line.split() for line in lines]
    sents = [s for s in sents if s]
    if words is None:
        words = build_vocab(Counter(w for s in sents for w in s), min_count, reserved=(UNK, EOS, BOS))
    wid = {w: i for i, w in enumerate(words)}
    unk = wid[UNK]
    for sym in (EOS, BOS):
        if sym not in wid:
            raise CorpusError(f"vocabulary lacks {sym}")
    ids = [np.asarray([wid.get(w, unk) for w in s], dtype=np.int32) for s in sents]
    return LMCorpus(list(words), ids)


def load_lm_corpus(path, min_count: int = 1, words=None) -> LMCorpus:
    return lm_from_lines(_read_lines(path), min_count, words)


def write_lines(path, lines: Iterable[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
