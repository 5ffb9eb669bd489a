# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``_pykernels``.

Training loops run without the GIL so several Python threads can update
shared parameters concurrently (Hogwild).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64

cdef i32 EMPTY_SLOT = -2147483648
BACKEND = "cython"


cdef inline double _logits(const float[:, :, ::1] W, const float[:, ::1] B, const i32[:, ::1] children,
                           Py_ssize_t n, const double* r, Py_ssize_t d, double* z) noexcept nogil:
    """Fill z with node logits for occupied slots; returns the max logit."""
    cdef Py_ssize_t j, k
    cdef Py_ssize_t M = children.shape[1]
    cdef double acc, m = -INFINITY
    for j in range(M):
        if children[n, j] == EMPTY_SLOT:
            continue
        acc = 0.0
        for k in range(d):
            acc += W[n, j, k] * r[k]
        acc += B[n, j]
        z[j] = acc
        if acc > m:
            m = acc
    return m


cdef inline void _log_softmax(const float[:, :, ::1] W, const float[:, ::1] B, const i32[:, ::1] children,
                              Py_ssize_t n, const double* r, Py_ssize_t d, double* out) noexcept nogil:
    cdef Py_ssize_t j
    cdef Py_ssize_t M = children.shape[1]
    cdef double m = _logits(W, B, children, n, r, d, out)
    cdef double s = 0.0
    for j in range(M):
        if children[n, j] != EMPTY_SLOT:
            s += exp(out[j] - m)
    s = log(s)
    for j in range(M):
        if children[n, j] != EMPTY_SLOT:
            out[j] = (out[j] - m) - s
        else:
            out[j] = -INFINITY


cdef void _walk(float[:, :, ::1] W, float[:, ::1] B, const i32[:, ::1] children,
                const double* r, Py_ssize_t d, i32 lab,
                const i32[:, ::1] path_nodes, const i32[:, ::1] path_slots, i32 length,
                double[:, :, ::1] stat_sum, double[:, ::1] stat_cnt,
                double lr, int log_mode, int adagrad, float[:, :, ::1] aW, float[:, ::1] aB,
                double* p, double* gz, double* dw) noexcept nogil:
    cdef Py_ssize_t M = children.shape[1]
    cdef Py_ssize_t depth, j, k
    cdef i32 n, t
    cdef double m, s, pt, g, w
    for k in range(d):
        dw[k] = 0.0
    for depth in range(length):
        n = path_nodes[lab, depth]
        t = path_slots[lab, depth]
        m = _logits(W, B, children, n, r, d, p)
        s = 0.0
        for j in range(M):
            if children[n, j] != EMPTY_SLOT:
                p[j] = exp(p[j] - m)
                s += p[j]
            else:
                p[j] = 0.0
        for j in range(M):
            p[j] /= s
            stat_sum[lab, depth, j] += p[j]
        stat_cnt[lab, depth] += 1.0
        pt = p[t]
        for j in range(M):
            if children[n, j] == EMPTY_SLOT:
                gz[j] = 0.0
                continue
            g = (1.0 if j == t else 0.0) - p[j]
            if not log_mode:
                g *= pt
            gz[j] = g
        for j in range(M):
            g = gz[j]
            if g == 0.0:
                continue
            for k in range(d):
                dw[k] += g * W[n, j, k]
            if adagrad:
                for k in range(d):
                    w = g * r[k]
                    aW[n, j, k] += w * w
                    W[n, j, k] += lr * w / (sqrt(aW[n, j, k]) + 1e-8)
                aB[n, j] += g * g
                B[n, j] += lr * g / (sqrt(aB[n, j]) + 1e-8)
            else:
                for k in range(d):
                    W[n, j, k] += lr * g * r[k]
                B[n, j] += lr * g


def train_classify(float[:, ::1] U, float[:, :, ::1] W, float[:, ::1] B, const i32[:, ::1] children,
                   const i64[::1] tok_ptr, const i32[::1] toks, const i32[::1] targets, const i64[::1] order,
                   const i32[:, ::1] path_nodes, const i32[:, ::1] path_slots, const i32[::1] path_len,
                   double[:, :, ::1] stat_sum, double[:, ::1] stat_cnt,
                   double lr0, double lr1, int log_mode):
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t M = children.shape[1]
    cdef Py_ssize_t i, k, q
    cdef i64 e
    cdef i32 lab, tok
    cdef double lr
    cdef float[:, :, ::1] noW = np.zeros((1, 1, 1), dtype=np.float32)
    cdef float[:, ::1] noB = np.zeros((1, 1), dtype=np.float32)
    cdef double* buf = <double*> malloc((2 * d + 2 * M) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* r = buf
    cdef double* dw = buf + d
    cdef double* p = buf + 2 * d
    cdef double* gz = buf + 2 * d + M
    try:
        with nogil:
            for i in range(n):
                e = order[i]
                lr = lr0 + (lr1 - lr0) * i / n
                lab = targets[e]
                for k in range(d):
                    r[k] = 0.0
                for q in range(tok_ptr[e], tok_ptr[e + 1]):
                    tok = toks[q]
                    for k in range(d):
                        r[k] += U[tok, k]
                _walk(W, B, children, r, d, lab, path_nodes, path_slots, path_len[lab],
                      stat_sum, stat_cnt, lr, log_mode, 0, noW, noB, p, gz, dw)
                for q in range(tok_ptr[e], tok_ptr[e + 1]):
                    tok = toks[q]
                    for k in range(d):
                        U[tok, k] += lr * dw[k]
    finally:
        free(buf)


def train_lm(float[:, ::1] U, float[:, :, ::1] R, float[:, :, ::1] W, float[:, ::1] B,
             const i32[:, ::1] children, const i32[:, ::1] ctx, const i32[::1] targets, const i64[::1] order,
             const i32[:, ::1] path_nodes, const i32[:, ::1] path_slots, const i32[::1] path_len,
             double[:, :, ::1] stat_sum, double[:, ::1] stat_cnt,
             double lr0, double lr1, int log_mode, int adagrad,
             float[:, ::1] aU, float[:, :, ::1] aR, float[:, :, ::1] aW, float[:, ::1] aB):
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t T = R.shape[0]
    cdef Py_ssize_t M = children.shape[1]
    cdef Py_ssize_t i, j, k, a
    cdef i64 e
    cdef i32 lab, w
    cdef double lr, acc, g
    cdef double* buf = <double*> malloc((2 * d + 2 * M + T * d) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* r = buf
    cdef double* dw = buf + d
    cdef double* p = buf + 2 * d
    cdef double* gz = buf + 2 * d + M
    cdef double* gU = buf + 2 * d + 2 * M
    try:
        with nogil:
            for i in range(n):
                e = order[i]
                lr = lr0 + (lr1 - lr0) * i / n
                lab = targets[e]
                for k in range(d):
                    r[k] = 0.0
                for j in range(T):
                    w = ctx[e, j]
                    for a in range(d):
                        acc = 0.0
                        for k in range(d):
                            acc += <double>R[j, a, k] * U[w, k]
                        r[a] += acc
                _walk(W, B, children, r, d, lab, path_nodes, path_slots, path_len[lab],
                      stat_sum, stat_cnt, lr, log_mode, adagrad, aW, aB, p, gz, dw)
                # dU_w = R_j^T dw, computed before R changes
                for j in range(T):
                    for k in range(d):
                        acc = 0.0
                        for a in range(d):
                            acc += R[j, a, k] * dw[a]
                        gU[j * d + k] = acc
                for j in range(T):
                    w = ctx[e, j]
                    for a in range(d):
                        if dw[a] == 0.0:
                            continue
                        for k in range(d):
                            g = dw[a] * U[w, k]
                            if adagrad:
                                aR[j, a, k] += g * g
                                R[j, a, k] += lr * g / (sqrt(aR[j, a, k]) + 1e-8)
                            else:
                                R[j, a, k] += lr * g
                for j in range(T):
                    w = ctx[e, j]
                    for k in range(d):
                        g = gU[j * d + k]
                        if adagrad:
                            aU[w, k] += g * g
                            U[w, k] += lr * g / (sqrt(aU[w, k]) + 1e-8)
                        else:
                            U[w, k] += lr * g
    finally:
        free(buf)


def bow_reps(const float[:, ::1] U, const i64[::1] tok_ptr, const i32[::1] toks):
    cdef Py_ssize_t n = tok_ptr.shape[0] - 1
    cdef Py_ssize_t d = U.shape[1]
    out_arr = np.zeros((n, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, q, k
    with nogil:
        for e in range(n):
            for q in range(tok_ptr[e], tok_ptr[e + 1]):
                for k in range(d):
                    out[e, k] += U[toks[q], k]
    return out_arr


def ctx_reps(const float[:, ::1] U, const float[:, :, ::1] R, const i32[:, ::1] ctx):
    cdef Py_ssize_t n = ctx.shape[0]
    cdef Py_ssize_t T = ctx.shape[1]
    cdef Py_ssize_t d = U.shape[1]
    out_arr = np.zeros((n, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, j, a, k
    cdef double acc
    with nogil:
        for e in range(n):
            for j in range(T):
                for a in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc += <double>R[j, a, k] * U[ctx[e, j], k]
                    out[e, a] += acc
    return out_arr


def node_log_softmax(const float[:, :, ::1] W, const float[:, ::1] B, const i32[:, ::1] children,
                     Py_ssize_t n, const double[::1] r):
    out_arr = np.empty(children.shape[1])
    cdef double[::1] out = out_arr
    _log_softmax(W, B, children, n, &r[0], r.shape[0], &out[0])
    return out_arr


def log_probs(const float[:, :, ::1] W, const float[:, ::1] B, const i32[:, ::1] children,
              const double[:, ::1] reps, const i32[::1] labels,
              const i32[:, ::1] path_nodes, const i32[:, ::1] path_slots, const i32[::1] path_len):
    cdef Py_ssize_t n = labels.shape[0]
    cdef Py_ssize_t d = reps.shape[1]
    cdef Py_ssize_t M = children.shape[1]
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t e, depth
    cdef i32 lab
    cdef double acc
    cdef double* lp = <double*> malloc(M * sizeof(double))
    if lp == NULL:
        raise MemoryError()
    try:
        with nogil:
            for e in range(n):
                lab = labels[e]
                acc = 0.0
                for depth in range(path_len[lab]):
                    _log_softmax(W, B, children, path_nodes[lab, depth], &reps[e, 0], d, lp)
                    acc += lp[path_slots[lab, depth]]
                out[e] = acc
    finally:
        free(lp)
    return out_arr


def predict_bnb(const float[:, :, ::1] W, const float[:, ::1] B, const i32[:, ::1] children,
                const double[:, ::1] reps, int root_label):
    """Branch-and-bound top-1; children are pushed so the likeliest pops first."""
    cdef Py_ssize_t n = reps.shape[0]
    cdef Py_ssize_t N = children.shape[0]
    cdef Py_ssize_t M = children.shape[1]
    cdef Py_ssize_t d = reps.shape[1]
    out_arr = np.empty(n, dtype=np.int32)
    cdef i32[::1] out = out_arr
    if N == 0:
        out_arr[:] = root_label
        return out_arr, 0
    cdef Py_ssize_t cap = N * M + 1
    cdef i32* st_node = <i32*> malloc(cap * sizeof(i32))
    cdef double* st_score = <double*> malloc(cap * sizeof(double))
    cdef double* lp = <double*> malloc(M * sizeof(double))
    cdef i32* ordr = <i32*> malloc(M * sizeof(i32))
    cdef Py_ssize_t e, top, j, a, b
    cdef i32 node, v, lab, best_lab, tmp
    cdef double score, s, best
    cdef i64 expanded = 0
    if st_node == NULL or st_score == NULL or lp == NULL or ordr == NULL:
        free(st_node); free(st_score); free(lp); free(ordr)
        raise MemoryError()
    try:
        with nogil:
            for e in range(n):
                best = -INFINITY
                best_lab = -1
                top = 0
                st_node[0] = 0
                st_score[0] = 0.0
                top = 1
                while top > 0:
                    top -= 1
                    node = st_node[top]
                    score = st_score[top]
                    if score < best:
                        continue
                    expanded += 1
                    _log_softmax(W, B, children, node, &reps[e, 0], d, lp)
                    # insertion sort of slots by ascending log-prob (stable)
                    for j in range(M):
                        ordr[j] = <i32> j
                    for a in range(1, M):
                        tmp = ordr[a]
                        b = a - 1
                        while b >= 0 and lp[ordr[b]] > lp[tmp]:
                            ordr[b + 1] = ordr[b]
                            b -= 1
                        ordr[b + 1] = tmp
                    for a in range(M):
                        j = ordr[a]
                        v = children[node, j]
                        if v == EMPTY_SLOT:
                            continue
                        s = score + lp[j]
                        if s < best:
                            continue
                        if v >= 0:
                            st_node[top] = v
                            st_score[top] = s
                            top += 1
                        else:
                            lab = -v - 1
                            if s > best or lab < best_lab:
                                best = s
                                best_lab = lab
                out[e] = best_lab
    finally:
        free(st_node); free(st_score); free(lp); free(ordr)
    return out_arr, expanded
