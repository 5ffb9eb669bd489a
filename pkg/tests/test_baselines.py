import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from labeltree.baselines import expected_depth, flat_tree, huffman_tree, label_frequencies, random_tree
from labeltree.tree import TreeError, validate
from oracles import all_leaf_depths, enumerate_trees, kraft_min_weighted_depth, nested_depths

FREQS = {0: 0.4, 1: 0.3, 2: 0.2, 3: 0.1}


def brute_force_depth(freqs, M):
    labels = sorted(freqs)
    best = min(
        sum(freqs[lab] * d for lab, d in nested_depths(t).items()) for t in enumerate_trees(labels, M)
    )
    return best / sum(freqs.values())


class TestHuffman:
    def test_binary_example(self):
        t = huffman_tree(FREQS, 2)
        assert [t.depth_of(i) for i in range(4)] == [1, 2, 3, 3]
        assert expected_depth(t, FREQS) == pytest.approx(1.9)
        assert brute_force_depth(FREQS, 2) == pytest.approx(1.9)

    def test_ternary_example(self):
        t = huffman_tree(FREQS, 3)
        assert [t.depth_of(i) for i in range(4)] == [1, 1, 2, 2]
        assert expected_depth(t, FREQS) == pytest.approx(1.3)
        assert brute_force_depth(FREQS, 3) == pytest.approx(1.3)

    @pytest.mark.parametrize("M", [2, 3, 5])
    def test_k_equals_m_is_flat(self, M):
        t = huffman_tree({i: float(i + 1) for i in range(M)}, M)
        assert t.n_nodes == 1 and all(t.depth_of(i) == 1 for i in range(M))

    def test_single_label(self):
        t = huffman_tree({4: 1.0}, 3)
        assert t.n_nodes == 0 and t.labels == (4,)

    def test_deterministic_ties(self):
        f = {i: 1.0 for i in range(7)}
        assert huffman_tree(f, 3).same_as(huffman_tree(dict(reversed(list(f.items()))), 3))

    def test_zero_frequencies_allowed(self):
        t = huffman_tree({0: 0.0, 1: 2.0, 2: 0.0}, 2)
        assert validate(t).ok and t.depth_of(1) == 1

    @pytest.mark.parametrize("bad", [{}, {0: 0.0, 1: 0.0}, {0: -1.0, 1: 2.0}])
    def test_bad_tables(self, bad):
        with pytest.raises(TreeError):
            huffman_tree(bad, 2)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            M = int(rng.choice([2, 3]))
            K = int(rng.integers(1, 7))
            freqs = {i: float(x) for i, x in enumerate(rng.integers(1, 50, size=K))}
            t = huffman_tree(freqs, M)
            got = sum(freqs[i] * d for i, d in all_leaf_depths(t).items()) / sum(freqs.values())
            assert got == pytest.approx(expected_depth(t, freqs), abs=1e-12)
            assert got == pytest.approx(kraft_min_weighted_depth(list(freqs.values()), M) / sum(freqs.values()),
                                        abs=1e-12)
            if K <= 5:
                assert got == pytest.approx(brute_force_depth(freqs, M), abs=1e-12)

    @given(st.lists(st.floats(0.01, 100), min_size=1, max_size=60), st.integers(2, 8))
    @settings(max_examples=200, deadline=None)
    def test_valid_and_complete(self, f, M):
        t = huffman_tree(dict(enumerate(f)), M)
        assert validate(t).ok
        assert sorted(t.labels) == list(range(len(f)))


class TestRandomAndFlat:
    def test_same_seed_same_tree(self):
        assert random_tree(range(50), 3, seed=4).same_as(random_tree(range(50), 3, seed=4))
        assert not random_tree(range(50), 3, seed=4).same_as(random_tree(range(50), 3, seed=5))

    def test_many_are_valid(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            K, M, seed = int(rng.integers(1, 80)), int(rng.integers(2, 9)), int(rng.integers(1 << 30))
            D = None
            if rng.random() < 0.3:
                D = 1
                while M**D < K:
                    D += 1
            assert validate(random_tree(range(K), M, D, seed)).ok

    def test_single_label(self):
        assert random_tree([3], 2).n_nodes == 0

    def test_flat(self):
        t = flat_tree(range(6))
        assert t.arity == 6 and t.n_nodes == 1 and t.depth_cap == 1
        assert all(t.depth_of(i) == 1 for i in range(6))
        assert validate(t).ok
        assert flat_tree([2]).n_nodes == 0


def test_label_frequencies():
    assert label_frequencies([0, 2, 2, 1, 2], 4) == {0: 1.0, 1: 1.0, 2: 3.0, 3: 0.0}
