"""Time the compiled kernels against the numpy fallback.

Run ``python benchmarks/bench_kernels.py``. Each kernel is timed on the same
inputs for every available backend and the speed-up over the fallback is
reported. Parameters are copied per run so backends see identical state.
"""
import argparse
import time

import numpy as np

from labeltree.kernels import available_backends
from labeltree.model import Model, init_params, pack_tokens
from labeltree.tree import build_initial_tree


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def setup(K, M, d, V, n, T, seed=0):
    rng = np.random.default_rng(seed)
    tree = build_initial_tree(range(K), M, seed=seed)
    U, R, W, B = init_params(V, d, tree.n_nodes, M, T, seed)
    # non-trivial node weights so branch-and-bound does real work
    W[:] = rng.normal(size=W.shape).astype(np.float32)
    docs = [rng.integers(0, V, size=rng.integers(3, 20)).astype(np.int32) for _ in range(n)]
    ptr, toks = pack_tokens(docs)
    ctx = rng.integers(0, V, size=(n, T)).astype(np.int32)
    targets = rng.integers(0, K, size=n).astype(np.int32)
    m = Model("classify", tree, U, R, W, B, [f"w{i}" for i in range(V)], [f"l{i}" for i in range(K)])
    nodes, slots, lengths = m.paths()
    return dict(tree=tree, U=U, R=R, W=W, B=B, ptr=ptr, toks=toks, ctx=ctx, targets=targets,
                order=np.arange(n, dtype=np.int64), nodes=nodes, slots=slots, lengths=lengths)


def cases(s, K, M):
    def stats():
        return (np.zeros((K, s["nodes"].shape[1], M)), np.zeros((K, s["nodes"].shape[1])))

    def train_classify(be):
        U, W, B = s["U"].copy(), s["W"].copy(), s["B"].copy()
        be.train_classify(U, W, B, s["tree"].children, s["ptr"], s["toks"], s["targets"], s["order"],
                          s["nodes"], s["slots"], s["lengths"], *stats(), 0.1, 0.1, False)

    def train_lm(be):
        U, R, W, B = (s[k].copy() for k in "URWB")
        acc = [np.zeros_like(a) for a in (U, R, W, B)]
        be.train_lm(U, R, W, B, s["tree"].children, s["ctx"], s["targets"], s["order"], s["nodes"], s["slots"],
                    s["lengths"], *stats(), 0.1, 0.1, True, False, *acc)

    def log_probs(be):
        reps = be.bow_reps(s["U"], s["ptr"], s["toks"])
        be.log_probs(s["W"], s["B"], s["tree"].children, reps, s["targets"], s["nodes"], s["slots"], s["lengths"])

    def predict(be):
        reps = be.bow_reps(s["U"], s["ptr"], s["toks"])
        be.predict_bnb(s["W"], s["B"], s["tree"].children, reps, -1)

    return {"train_classify": train_classify, "train_lm": train_lm, "log_probs": log_probs, "predict_bnb": predict}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--labels", type=int, default=1000)
    ap.add_argument("--arity", type=int, default=5)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--vocab", type=int, default=5000)
    ap.add_argument("--examples", type=int, default=2000)
    ap.add_argument("--context", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    s = setup(args.labels, args.arity, args.dim, args.vocab, args.examples, args.context)
    backends = available_backends()
    print(f"K={args.labels} M={args.arity} d={args.dim} n={args.examples} backends={sorted(backends)}")
    print(f"{'kernel':16s}" + "".join(f"{name:>12s}" for name in sorted(backends)) + f"{'speed-up':>10s}")
    for name, fn in cases(s, args.labels, args.arity).items():
        t = {b: best_of(lambda: fn(be), args.repeats) for b, be in backends.items()}
        row = f"{name:16s}" + "".join(f"{t[b] * 1e3:10.1f}ms" for b in sorted(backends))
        if "cython" in t:
            row += f"{t['python'] / t['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
