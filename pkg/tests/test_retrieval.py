import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgeret import retrieval as rt
from edgeret.errors import DimMismatch


def test_self_match_ranks_first():
    g = rt.Gallery(np.random.default_rng(0).standard_normal((10, 4)), np.arange(10))
    assert rt.rank(g.features[6], g)[0] == 6


def test_hand_geometry():
    g = rt.Gallery([[0.0, 0.0], [3.0, 4.0]], [0, 1])
    np.testing.assert_array_equal(rt.rank([0.0, 1.0], g), [0, 1])
    # squared distances 1 and 3^2 + 3^2
    np.testing.assert_allclose(rt.distances([[0.0, 1.0]], g), [[1.0, 18.0]])


def test_ties_broken_by_index():
    g = rt.Gallery([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [0, 1, 2, 3])
    np.testing.assert_array_equal(rt.rank([0.0, 0.0], g), [0, 1, 2, 3])


def test_cosine_scale_invariant():
    rng = np.random.default_rng(1)
    g = rt.Gallery(rng.standard_normal((20, 5)), np.arange(20))
    q = rng.standard_normal(5)
    np.testing.assert_array_equal(rt.rank(q, g, "cosine"), rt.rank(3.7 * q, g, "cosine"))


def test_dim_mismatch():
    with pytest.raises(DimMismatch):
        rt.rank(np.zeros(3), rt.Gallery(np.zeros((2, 4)), [0, 1]))


def test_gallery_equals_queries_top1():
    x = np.random.default_rng(2).standard_normal((30, 6))
    labels = np.arange(30) % 7
    assert rt.top_k_accuracy(x, labels, rt.Gallery(x, labels), k=1) == 1.0


def test_rank_three_example():
    # query 0 matches at rank 1, query 1 matches at rank 3
    g = rt.Gallery([[0.0], [1.0], [1.4], [1.9]], [0, 9, 8, 1])
    q = np.array([[0.0], [1.0]])
    assert rt.rank([1.0], g).tolist().index(3) == 2
    assert rt.top_k_accuracy(q, [0, 1], g, k=1) == 0.5
    assert rt.top_k_accuracy(q, [0, 1], g, k=5) == 1.0


def test_average_precision_examples():
    assert rt.average_precision([1, 0, 0]) == 1.0
    assert rt.average_precision([1, 0, 1]) == pytest.approx(5 / 6)
    assert rt.average_precision([0, 1, 0, 1]) == pytest.approx(0.5)
    assert rt.average_precision([0, 0]) == 0.0


def test_skip_tally():
    g = rt.Gallery([[0.0], [1.0]], [0, 1])
    s = rt.evaluate(np.array([[0.0], [5.0]]), [0, 42], g)
    assert s.skipped == 1 and s.n_queries == 1 and s.top1 == 1.0


def _brute_force(queries, labels, feats, glabels):
    top1 = top5 = ap_sum = 0.0
    for q, lab in zip(queries, labels):
        d = [sum((a - b) ** 2 for a, b in zip(q, row)) for row in feats]
        order = sorted(range(len(feats)), key=lambda i: (d[i], i))
        rel = [glabels[i] == lab for i in order]
        top1 += rel[0]
        top5 += any(rel[:5])
        hits, precisions = 0, []
        for r, ok in enumerate(rel, start=1):
            if ok:
                hits += 1
                precisions.append(hits / r)
        ap_sum += sum(precisions) / len(precisions)
    n = len(queries)
    return top1 / n, top5 / n, ap_sum / n


def test_matches_exhaustive_oracle():
    rng = np.random.default_rng(3)
    centers = rng.standard_normal((10, 8)) * 2
    glabels = np.repeat(np.arange(10), 5)
    feats = centers[glabels] + rng.standard_normal((50, 8))
    labels = rng.integers(0, 10, 100)
    queries = centers[labels] + rng.standard_normal((100, 8))
    s = rt.evaluate(queries, labels, rt.Gallery(feats, glabels))
    t1, t5, m = _brute_force(queries.tolist(), labels.tolist(), feats.tolist(), glabels.tolist())
    assert s.top1 == pytest.approx(t1, abs=1e-12)
    assert s.top5 == pytest.approx(t5, abs=1e-12)
    assert s.map == pytest.approx(m, abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_scoring_properties(seed):
    rng = np.random.default_rng(seed)
    n_ids = int(rng.integers(2, 6))
    glabels = rng.integers(0, n_ids, int(rng.integers(n_ids, 15)))
    glabels[:n_ids] = np.arange(n_ids)
    feats = rng.standard_normal((glabels.size, 3))
    g = rt.Gallery(feats, glabels)
    q = rng.standard_normal((8, 3))
    labels = rng.integers(0, n_ids, 8)
    tops = [rt.top_k_accuracy(q, labels, g, k) for k in range(1, glabels.size + 1)]
    assert all(a <= b for a, b in zip(tops, tops[1:]))
    assert tops[-1] == 1.0
    m = rt.mean_average_precision(q, labels, g)
    assert 0.0 <= m <= 1.0
    shift = rng.standard_normal(3) * 10
    np.testing.assert_array_equal(rt.rank_all(q, g), rt.rank_all(q + shift, rt.Gallery(feats + shift, glabels)))
