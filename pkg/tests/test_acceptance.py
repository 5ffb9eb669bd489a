"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts at the stated tolerance. Nothing here is relaxed to make it pass.
"""
import math
import time
from itertools import product

import mpmath
import numpy as np
import pytest

from labeltree.assign import AssignmentProblem, assign_labels, assignment_gain, brute_force_assignment
from labeltree.baselines import huffman_tree
from labeltree.inference import all_log_probs, exhaustive_top1, log_prob, perplexity, precision_at_1, predict_top1
from labeltree.model import CLASSIFY, LM, node_backward, node_forward, path_gradients, path_objective
from labeltree.modelfile import load_model, save_model
from labeltree.objective import (
    SplitDistribution,
    balancedness,
    boosting_node_bound,
    gradient_logp,
    gradient_p,
    objective_max,
    objective_value,
    purity,
)
from labeltree.synthetic import clustered_lm, topic_classification
from labeltree.trainer import TrainConfig, train
from labeltree.tree import validate
from oracles import (
    balanced_pure_split,
    balanced_split,
    central_difference,
    enumerate_trees,
    nested_depths,
    own_term,
    pure_split,
    random_input,
    random_model,
    rel_error,
)

GRID = list(product((2, 3, 5), range(2, 11)))


def batch_splits(rng, n, K, M):
    """n random splits with mixed Dirichlet concentrations, drawn in one go."""
    q = np.concatenate([rng.dirichlet(np.ones(K) * a, size=n // 3 + 1) for a in (0.3, 1.0, 3.0)])[:n]
    P = np.concatenate([rng.dirichlet(np.ones(M) * c, size=(n // 4 + 1, K)) for c in (0.1, 0.5, 1.0, 5.0)])[:n]
    order = rng.permutation(n)
    return q[order], P


def test_criterion_01_objective_bounds(verdict):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_low, worst_high = math.inf, -math.inf
    for M, K in GRID:
        Jstar = objective_max(M)
        q, P = batch_splits(rng, 10_000, K, M)
        for i in range(10_000):
            J = objective_value(SplitDistribution(q[i], P[i]))
            worst_low = min(worst_low, J)
            worst_high = max(worst_high, J - Jstar)
    secs = time.perf_counter() - start
    ok = worst_low >= 0 and worst_high <= 1e-12 and secs < 10
    verdict(1, ok, f"min J={worst_low:.3g}, max J-J*={worst_high:.3g}, {len(GRID)}x10^4 splits in {secs:.1f}s")
    assert ok


def test_criterion_02_maximum_characterisation(verdict):
    rng = np.random.default_rng(102)
    worst_eq, n_strict, worst_strict = 0.0, 0, -math.inf
    for M, K in GRID:
        for _ in range(400):
            s = SplitDistribution(*balanced_pure_split(rng, max(K, M), M))
            worst_eq = max(worst_eq, abs(objective_value(s) - objective_max(M)))
        q, P = batch_splits(rng, 400, K, M)
        for i in range(400):
            s = SplitDistribution(q[i], P[i])
            if purity(s) > 0.01 or abs(balancedness(s) - 1 / M) > 0.01:
                n_strict += 1
                worst_strict = max(worst_strict, objective_value(s) - objective_max(M))
    ok = worst_eq <= 1e-12 and worst_strict < -1e-12
    verdict(2, ok, f"balanced+pure max|J-J*|={worst_eq:.2g}; {n_strict} imperfect splits, max J-J*={worst_strict:.3g}")
    assert ok


def test_criterion_03_pure_splits_balance(verdict):
    rng = np.random.default_rng(103)
    worst = -math.inf
    for _ in range(10_000):
        M, K = int(rng.choice([2, 3, 5])), int(rng.integers(2, 11))
        s = SplitDistribution(*pure_split(rng, K, M))
        gap = max(objective_max(M) - objective_value(s), 0.0)
        worst = max(worst, (1 / M - math.sqrt(M * gap) / 2 - 1e-9) - balancedness(s))
    ok = worst <= 0
    verdict(3, ok, f"10^4 pure splits, max violation {worst:.3g}")
    assert ok


def test_criterion_04_balanced_splits_purity(verdict):
    rng = np.random.default_rng(104)
    bad = {2: 0, 3: 0, 5: 0}
    worst = -math.inf
    per_cell = -(-10_000 // len(GRID))
    for M, K in GRID:
        for _ in range(per_cell):
            s = SplitDistribution(*balanced_split(rng, K, M))
            excess = purity(s) - ((objective_max(M) - objective_value(s)) / 2 + 1e-9)
            worst = max(worst, excess)
            bad[M] += excess > 0
    ok = sum(bad.values()) == 0
    verdict(4, ok, f"{per_cell * len(GRID)} balanced splits, violations by arity {bad}, max excess {worst:.3g}")
    assert ok


def test_criterion_05_greedy_matches_exhaustive(verdict):
    rng = np.random.default_rng(105)
    start = time.perf_counter()
    misses = {("congruence", 2): 0, ("congruence", 3): 0, ("capacity", 2): 0, ("capacity", 3): 0}
    for n in range(1000):
        K, M = int(rng.integers(2, 8)), int(rng.integers(2, 4))
        G = rng.random((K, M))
        assert len(np.unique(G)) == G.size  # tie-free
        if n % 2:
            mode, prob = "capacity", AssignmentProblem(range(K), G, M, capacity=int(rng.integers(-(-K // M), K + 1)))
        else:
            mode, prob = "congruence", AssignmentProblem(range(K), G, M)
        best, _ = brute_force_assignment(prob)
        misses[mode, M] += not math.isclose(assignment_gain(prob, assign_labels(prob)), best, abs_tol=1e-12)
    secs = time.perf_counter() - start
    ok = sum(misses.values()) == 0 and secs < 60
    verdict(5, ok, f"1000 instances, suboptimal (mode, M): {misses}, {secs:.1f}s")
    assert ok


def _objective_fd(rng, log_space):
    """Worst relative error of one objective-gradient form over 100 instances."""
    worst, done = 0.0, 0
    while done < 100:
        M, K = int(rng.integers(2, 6)), int(rng.integers(2, 9))
        q = rng.dirichlet(np.ones(K))
        P = rng.dirichlet(np.ones(M) * 2.0, size=K)
        s = SplitDistribution(q, P)
        G = gradient_logp(s) if log_space else gradient_p(s)
        i, j = int(rng.integers(K)), int(rng.integers(M))
        if abs(P[i, j] - s.p[j]) < 1e-3:
            continue  # too close to the kink of |.|

        def f(x):
            P2 = P.copy()
            P2[i, j] = math.exp(x) if log_space else x
            return own_term(q, P2, i, M)

        x0 = math.log(P[i, j]) if log_space else P[i, j]
        fd = (f(x0 + 1e-5) - f(x0 - 1e-5)) / 2e-5
        worst = max(worst, rel_error(G[i, j], fd))
        done += 1
    return worst


def _node_fd(rng, log_mode):
    worst = 0.0
    for _ in range(100):
        M, d = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        W, b, r = rng.normal(size=(M, d)), rng.normal(size=M), rng.normal(size=d)
        t = int(rng.integers(M))

        def f():
            p = node_forward(W, b, r)[t]
            return math.log(p) if log_mode else p

        gW, gb, gr = (central_difference(f, a) for a in (W, b, r))
        W0, b0 = W.copy(), b.copy()
        dr = node_backward(W, b, r, t, log_mode, lr=1.0)
        worst = max(worst, rel_error(dr, gr), rel_error(W - W0, gW), rel_error(b - b0, gb))
    return worst


def _path_fd(rng, mode, log_mode):
    worst = 0.0
    for _ in range(100):
        K, M = int(rng.integers(2, 10)), int(rng.integers(2, 5))
        m = random_model(rng, K, M, d=3, V=6, mode=mode, T=2, scale=0.7)
        params = [a.astype(np.float64) for a in (m.U, m.R, m.W, m.B)]
        args = (m.tree.children, list(m.tree.path_of(int(rng.integers(K)))), random_input(rng, m, 4), mode, log_mode)
        grads = path_gradients(*params, *args)
        for k, (p, g) in enumerate(zip(params, grads)):
            if mode == CLASSIFY and k == 1:
                continue
            worst = max(worst, rel_error(g, central_difference(lambda: path_objective(*params, *args), p)))
    return worst


def test_criterion_06_gradients(verdict):
    rng = np.random.default_rng(106)
    errs = {
        "objective p": _objective_fd(rng, False),
        "objective log p": _objective_fd(rng, True),
        "node p": _node_fd(rng, False),
        "node log p": _node_fd(rng, True),
    }
    for mode, log_mode in product((CLASSIFY, LM), (False, True)):
        errs[f"{mode} path {'log p' if log_mode else 'p'}"] = _path_fd(rng, mode, log_mode)
    ok = max(errs.values()) <= 1e-4
    verdict(6, ok, "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in errs.items()))
    assert ok


def test_criterion_07_normalisation(verdict):
    rng = np.random.default_rng(107)
    worst, n = 0.0, 0
    for M in (2, 5, 20):
        for K in (2, 3, 50, 312, 999, 1000, *rng.integers(2, 1001, size=4)):
            m = random_model(rng, int(K), M, scale=2.0)
            for _ in range(3):
                worst = max(worst, abs(np.exp(all_log_probs(m, random_input(rng, m))).sum() - 1.0))
                n += 1
    ok = worst <= 1e-9
    verdict(7, ok, f"{n} (model, input) pairs, max |sum-1|={worst:.2g}")
    assert ok


def test_criterion_08_branch_and_bound(verdict):
    rng = np.random.default_rng(108)
    wrong = 0
    for _ in range(1000):
        m = random_model(rng, 312, int(rng.integers(2, 9)), d=6, scale=float(rng.choice([0.3, 1.0, 3.0])))
        x = random_input(rng, m)
        wrong += predict_top1(m, x) != exhaustive_top1(m, x)
    ok = wrong == 0
    verdict(8, ok, f"1000 pairs at K=312, {wrong} disagreements")
    assert ok


def test_criterion_09_huffman(verdict):
    rng = np.random.default_rng(109)
    wrong, n = 0, 0
    for M, K in product((2, 3), range(1, 7)):
        labels = list(range(K))
        depths = np.array([[nested_depths(t)[lab] for lab in labels] for t in enumerate_trees(labels, M)], float)
        for _ in range(100):
            f = rng.random(K) * rng.choice([1.0, 100.0])
            t = huffman_tree(dict(enumerate(f)), M)
            got = sum(f[lab] * t.depth_of(lab) for lab in labels)
            wrong += not math.isclose(got, float((depths @ f).min()), rel_tol=1e-12, abs_tol=1e-12)
            n += 1
    ok = wrong == 0
    verdict(9, ok, f"{n} frequency sets (K<=6, M in 2,3), {wrong} mismatches")
    assert ok


@pytest.mark.slow
def test_criterion_10_language_model_ordering(verdict):
    # Arity 8 at depth 2 holds only 64 leaves; 15 is the smallest arity that fits the 203-word vocabulary.
    task = clustered_lm(n_train=200_000, n_test=20_000, seed=0)
    assert len(task.train.words) > 8**2
    base = dict(mode=LM, arity=15, depth=2, dim=32, context=4, lr=0.1, epochs=5, seed=0)
    ppl, secs = {}, {}
    for kind in ("learned", "random", "flat"):
        r = train(task.train, TrainConfig(tree=kind, **base))
        ppl[kind], secs[kind] = perplexity(r.model, task.test).value, r.seconds
    ok = (ppl["learned"] <= ppl["random"] and ppl["learned"] <= 1.05 * ppl["flat"]
          and max(secs.values()) < 600)
    verdict(10, ok, "perplexity " + ", ".join(f"{k}={v:.3f}" for k, v in ppl.items())
            + f" (M=15, D=2), slowest run {max(secs.values()):.0f}s")
    assert ok


UPDATES = {"p": False, "log p": True}


@pytest.fixture(scope="module")
def classification_runs():
    """Per seed and tree: pick the node update on validation P@1, report test P@1.

    Both trees get the same search, so they share the same budget.
    """
    runs = []
    start = time.perf_counter()
    for seed in range(3):
        task = topic_classification(n_train=100_000, n_test=10_000, n_valid=10_000, seed=seed)
        out = {"K": len(task.train.label_names), "checks": []}
        for kind in ("learned", "huffman"):
            best = None
            for name, log_nodes in UPDATES.items():
                checks = []
                cfg = TrainConfig(tree=kind, arity=5, dim=32, lr=0.1, epochs=5, seed=seed, log_nodes=log_nodes)
                r = train(task.train, cfg, on_rebuild=lambda step, tree, rep: checks.append(rep.ok and validate(tree).ok))
                val = precision_at_1(r.model, task.valid).value
                if kind == "learned":
                    out["checks"].append(checks)
                if best is None or val > best[0]:
                    best = (val, name, precision_at_1(r.model, task.test).value)
            out[kind], out[kind + "_update"] = best[2], best[1]
        runs.append(out)
    for r in runs:
        r["seconds"] = time.perf_counter() - start
    return runs


@pytest.mark.slow
def test_criterion_11_classification_ordering(verdict, classification_runs):
    wins = sum(r["learned"] >= r["huffman"] for r in classification_runs)
    secs = classification_runs[-1]["seconds"]
    ok = wins >= 2 and secs < 600 and all(r["K"] == 1000 for r in classification_runs)
    detail = "; ".join(
        f"seed {i}: learned={r['learned']:.4f} ({r['learned_update']}) huffman={r['huffman']:.4f} ({r['huffman_update']})"
        for i, r in enumerate(classification_runs))
    verdict(11, ok, f"{detail}; {wins}/3 wins, {secs:.0f}s for all runs")
    assert ok


@pytest.mark.slow
def test_criterion_12_rebuilds_well_formed(verdict, classification_runs):
    counts = [len(c) for r in classification_runs for c in r["checks"]]
    bad = sum(not ok for r in classification_runs for c in r["checks"] for ok in c)
    ok = min(counts) >= 50 and bad == 0
    verdict(12, ok, f"rebuilds per run {counts}, {bad} invalid trees")
    assert ok


def test_criterion_13_persistence(verdict, tmp_path):
    rng = np.random.default_rng(113)
    diffs = 0
    for mode in (CLASSIFY, LM):
        m = random_model(rng, 80, 3, d=8, V=80, mode=mode, T=3, scale=2.0)
        save_model(m, tmp_path / f"{mode}.bin")
        m2 = load_model(tmp_path / f"{mode}.bin")
        for _ in range(100):
            x = random_input(rng, m)
            lab = int(rng.integers(80))
            diffs += predict_top1(m, x) != predict_top1(m2, x) or log_prob(m, x, lab) != log_prob(m2, x, lab)
    ok = diffs == 0
    verdict(13, ok, f"2x100 inputs after reload, {diffs} differences")
    assert ok


def test_criterion_14_bound(verdict):
    mpmath.mp.dps = 50
    M, K = 2, 2
    g, kappa = mpmath.mpf("0.5"), mpmath.mpf("0.5")
    ref = float((1 / kappa) ** (16 * (M - 1) * mpmath.log(K) / (mpmath.log(mpmath.e, 2) * M * M * g * g)))
    got = boosting_node_bound(0.5, 0.5, M, K, balanced=True)
    close = abs(got - ref) / ref <= 1e-3 and abs(got - 206.1) / 206.1 <= 1e-3

    monotone = True
    gammas, kappas = np.linspace(0.05, 0.5, 10), np.linspace(0.95, 0.05, 10)
    for M, K, bal in product((2, 3, 5), (2, 10, 1000), (False, True)):
        for kappa in kappas:
            vals = [boosting_node_bound(kappa, g, M, K, bal) for g in gammas]
            monotone &= all(a >= b for a, b in zip(vals, vals[1:]))
        for g in gammas:
            vals = [boosting_node_bound(k, g, M, K, bal) for k in kappas]
            monotone &= all(a <= b for a, b in zip(vals, vals[1:]))
        vals = [boosting_node_bound(0.5, 0.3, M, k, bal) for k in (2, 10, 100, 1000)]
        monotone &= all(a <= b for a, b in zip(vals, vals[1:]))
    ok = close and monotone
    verdict(14, ok, f"bound={got:.4f}, high-precision={ref:.4f}, monotone grid {'ok' if monotone else 'broken'}")
    assert ok
