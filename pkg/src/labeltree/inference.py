"""Queries against a trained model and the two evaluation metrics."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import ClassificationCorpus, CorpusError, LMCorpus
from .model import CLASSIFY, Model, pack_tokens
from .kernels import backend
from .tree import UnknownLabelError

EVAL_CHUNK = 4096


@dataclass
class EvalReport:
    metric: str
    value: float
    n: int
    ms: int

    def to_line(self) -> str:
        return f"metric={self.metric} value={self.value:.6f} n={self.n} ms={self.ms}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def combine(reports: list["EvalReport"]) -> "EvalReport":
        """Count-weighted average of reports for the same accuracy-style metric."""
        if not reports:
            raise ValueError("no reports to combine")
        n = sum(r.n for r in reports)
        value = sum(r.value * r.n for r in reports) / n
        return EvalReport(reports[0].metric, value, n, sum(r.ms for r in reports))


def _label_id(model: Model, label) -> int:
    if isinstance(label, str):
        try:
            return model.label_names.index(label)
        except ValueError:
            raise UnknownLabelError(label) from None
    label = int(label)
    if not 0 <= label < model.n_labels:
        raise UnknownLabelError(label)
    return label


def log_prob(model: Model, inputs, label) -> float:
    """Log-probability of ``label`` given one input (token ids or context window)."""
    lab = _label_id(model, label)
    if model.tree.n_nodes == 0:
        return 0.0
    reps = model.represent([inputs])
    return float(model.log_probs_from_reps(reps, [lab])[0])


def all_log_probs(model: Model, inputs) -> np.ndarray:
    """Log-probabilities of every label for one input."""
    reps = np.repeat(model.represent([inputs]), model.n_labels, axis=0)
    if model.tree.n_nodes == 0:
        return np.zeros(model.n_labels)
    return model.log_probs_from_reps(reps, np.arange(model.n_labels))


def predict_top1(model: Model, inputs) -> int:
    return int(model.predict_from_reps(model.represent([inputs]))[0])


def predict_batch(model: Model, batch) -> np.ndarray:
    out = []
    for s in range(0, len(batch), EVAL_CHUNK):
        out.append(model.predict_from_reps(model.represent(batch[s : s + EVAL_CHUNK])))
    return np.concatenate(out) if out else np.empty(0, np.int32)


def exhaustive_top1(model: Model, inputs) -> int:
    """Argmax by scoring every leaf; ties go to the smallest label id."""
    lp = all_log_probs(model, inputs)
    return int(np.flatnonzero(lp == lp.max())[0])


def _docs(corpus: ClassificationCorpus) -> list[np.ndarray]:
    return [corpus.tokens(e) for e in range(len(corpus))]


def precision_at_1(model: Model, corpus: ClassificationCorpus) -> EvalReport:
    """Share of examples whose top prediction is one of their labels."""
    if len(corpus) == 0:
        raise CorpusError("empty evaluation set")
    t0 = time.perf_counter()
    preds = np.empty(len(corpus), dtype=np.int32)
    for s in range(0, len(corpus), EVAL_CHUNK):
        e = min(len(corpus), s + EVAL_CHUNK)
        ptr = corpus.tok_ptr[s : e + 1] - corpus.tok_ptr[s]
        toks = corpus.toks[corpus.tok_ptr[s] : corpus.tok_ptr[e]]
        reps = backend.bow_reps(model.U, np.ascontiguousarray(ptr), np.ascontiguousarray(toks))
        preds[s:e] = model.predict_from_reps(reps)
    hits = sum(int(preds[e] in corpus.labels(e)) for e in range(len(corpus)))
    ms = int(round(1000 * (time.perf_counter() - t0)))
    return EvalReport("p@1", hits / len(corpus), len(corpus), ms)


def corpus_log_probs(model: Model, corpus: LMCorpus) -> np.ndarray:
    ctx, tgt = corpus.windows(model.context)
    out = np.empty(len(tgt))
    for s in range(0, len(tgt), EVAL_CHUNK):
        reps = backend.ctx_reps(model.U, model.R, np.ascontiguousarray(ctx[s : s + EVAL_CHUNK]))
        out[s : s + len(reps)] = model.log_probs_from_reps(reps, tgt[s : s + EVAL_CHUNK])
    return out


def perplexity(model: Model, corpus: LMCorpus) -> EvalReport:
    """``exp(-mean log p)`` over every word and end-of-sentence marker."""
    if model.mode == CLASSIFY:
        raise ValueError("perplexity needs an LM model")
    if corpus.n_tokens() == 0:
        raise CorpusError("empty evaluation corpus")
    t0 = time.perf_counter()
    lp = corpus_log_probs(model, corpus)
    ppl = math.exp(-float(lp.mean()))
    ms = int(round(1000 * (time.perf_counter() - t0)))
    return EvalReport("perplexity", ppl, len(lp), ms)


__all__ = [
    "EvalReport",
    "all_log_probs",
    "exhaustive_top1",
    "log_prob",
    "pack_tokens",
    "perplexity",
    "precision_at_1",
    "predict_batch",
    "predict_top1",
]
