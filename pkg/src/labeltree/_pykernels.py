"""Pure-Python/numpy kernels. Reference semantics for ``_ckernels.pyx``.

Parameters are float32 arrays updated in place; all arithmetic runs in
float64. Shapes: ``U (V, d)``, ``R (T, d, d)``, ``W (N, M, d)``,
``B (N, M)``, ``children (N, M)`` int32 with ``EMPTY`` for unused slots.
"""
from __future__ import annotations

import numpy as np

EMPTY = np.iinfo(np.int32).min
BACKEND = "python"


def _occupied(children, n):
    return np.flatnonzero(children[n] != EMPTY)


def _node_logits(W, B, n, occ, r):
    return W[n, occ].astype(np.float64) @ r + B[n, occ].astype(np.float64)


def node_log_softmax(W, B, children, n, r):
    """Log-probabilities over occupied slots of node ``n`` (-inf elsewhere)."""
    occ = _occupied(children, n)
    z = _node_logits(W, B, n, occ, r)
    m = z.max()
    s = np.exp(z - m).sum()
    out = np.full(children.shape[1], -np.inf)
    out[occ] = (z - m) - np.log(s)
    return out


def node_softmax(W, B, children, n, r):
    occ = _occupied(children, n)
    z = _node_logits(W, B, n, occ, r)
    e = np.exp(z - z.max())
    out = np.zeros(children.shape[1])
    out[occ] = e / e.sum()
    return out


def bow_reps(U, tok_ptr, toks):
    n = len(tok_ptr) - 1
    out = np.zeros((n, U.shape[1]))
    for e in range(n):
        ids = toks[tok_ptr[e] : tok_ptr[e + 1]]
        if len(ids):
            out[e] = U[ids].astype(np.float64).sum(axis=0)
    return out


def ctx_reps(U, R, ctx):
    out = np.zeros((ctx.shape[0], U.shape[1]))
    R64 = R.astype(np.float64)
    for k in range(ctx.shape[1]):
        out += U[ctx[:, k]].astype(np.float64) @ R64[k].T
    return out


def _walk(W, B, children, r, lab, nodes, slots, length, stat_sum, stat_cnt, lr, log_mode, ada=None, eps=1e-8):
    """Gradient ascent along one label's path; returns d objective / d r."""
    dw = np.zeros_like(r)
    for d in range(length):
        n, t = nodes[d], slots[d]
        occ = _occupied(children, n)
        z = _node_logits(W, B, n, occ, r)
        e = np.exp(z - z.max())
        p = e / e.sum()
        full = np.zeros(children.shape[1])
        full[occ] = p
        stat_sum[lab, d] += full
        stat_cnt[lab, d] += 1.0
        ti = int(np.flatnonzero(occ == t)[0])
        gz = -p
        gz[ti] += 1.0
        if not log_mode:
            gz *= p[ti]
        Wn = W[n, occ].astype(np.float64)
        dw += gz @ Wn
        gW = np.outer(gz, r)
        if ada is None:
            W[n, occ] = Wn + lr * gW
            B[n, occ] = B[n, occ] + lr * gz
        else:
            aW, aB = ada[2], ada[3]
            aW[n, occ] += gW * gW
            aB[n, occ] += gz * gz
            W[n, occ] = Wn + lr * gW / (np.sqrt(aW[n, occ].astype(np.float64)) + eps)
            B[n, occ] = B[n, occ] + lr * gz / (np.sqrt(aB[n, occ].astype(np.float64)) + eps)
    return dw


def train_classify(U, W, B, children, tok_ptr, toks, targets, order, path_nodes, path_slots, path_len,
                   stat_sum, stat_cnt, lr0, lr1, log_mode):
    n = len(order)
    for k in range(n):
        e = order[k]
        lr = lr0 + (lr1 - lr0) * k / n
        lab = targets[e]
        ids = toks[tok_ptr[e] : tok_ptr[e + 1]]
        r = U[ids].astype(np.float64).sum(axis=0) if len(ids) else np.zeros(U.shape[1])
        dw = _walk(W, B, children, r, lab, path_nodes[lab], path_slots[lab], path_len[lab],
                   stat_sum, stat_cnt, lr, log_mode)
        for t in ids:
            U[t] = U[t].astype(np.float64) + lr * dw


def train_lm(U, R, W, B, children, ctx, targets, order, path_nodes, path_slots, path_len,
             stat_sum, stat_cnt, lr0, lr1, log_mode, adagrad, aU, aR, aW, aB):
    n = len(order)
    T = R.shape[0]
    ada = (aU, aR, aW, aB) if adagrad else None
    for k in range(n):
        e = order[k]
        lr = lr0 + (lr1 - lr0) * k / n
        lab = targets[e]
        c = ctx[e]
        Uc = U[c].astype(np.float64)  # (T, d)
        R64 = R.astype(np.float64)
        r = np.zeros(U.shape[1])
        for j in range(T):
            r += R64[j] @ Uc[j]
        dw = _walk(W, B, children, r, lab, path_nodes[lab], path_slots[lab], path_len[lab],
                   stat_sum, stat_cnt, lr, log_mode, ada)
        gU = [R64[j].T @ dw for j in range(T)]
        for j in range(T):
            gR = np.outer(dw, Uc[j])
            if ada is None:
                R[j] = R64[j] + lr * gR
            else:
                aR[j] += gR * gR
                R[j] = R64[j] + lr * gR / (np.sqrt(aR[j].astype(np.float64)) + 1e-8)
        for j in range(T):
            w = c[j]
            if ada is None:
                U[w] = U[w].astype(np.float64) + lr * gU[j]
            else:
                aU[w] += gU[j] * gU[j]
                U[w] = U[w].astype(np.float64) + lr * gU[j] / (np.sqrt(aU[w].astype(np.float64)) + 1e-8)


def log_probs(W, B, children, reps, labels, path_nodes, path_slots, path_len):
    out = np.zeros(len(labels))
    for e in range(len(labels)):
        lab = labels[e]
        r = reps[e]
        acc = 0.0
        for d in range(path_len[lab]):
            acc += node_log_softmax(W, B, children, path_nodes[lab, d], r)[path_slots[lab, d]]
        out[e] = acc
    return out


def predict_bnb(W, B, children, reps, root_label):
    """Branch-and-bound top-1 search; returns label ids and nodes expanded."""
    n = reps.shape[0]
    out = np.empty(n, dtype=np.int32)
    expanded = 0
    if children.shape[0] == 0:
        out[:] = root_label
        return out, 0
    for e in range(n):
        r = reps[e]
        best, best_lab = -np.inf, -1
        stack = [(0, 0.0)]
        while stack:
            node, score = stack.pop()
            if score < best:
                continue
            expanded += 1
            lp = node_log_softmax(W, B, children, node, r)
            # push in ascending probability so the most likely child pops first
            for j in np.argsort(lp, kind="stable"):
                v = children[node, j]
                if v == EMPTY:
                    continue
                s = score + lp[j]
                if s < best:
                    continue
                if v >= 0:
                    stack.append((int(v), s))
                else:
                    lab = -int(v) - 1
                    if s > best or lab < best_lab:
                        best, best_lab = s, lab
        out[e] = best_lab
    return out, expanded
