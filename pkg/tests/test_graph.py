import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from migcn.errors import InputError
from migcn.graph import (build_clip_adjacency, build_cross_modal, build_graph, build_word_adjacency,
                         cosine, write_adjacency_csv)


def test_cosine_examples():
    assert cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)
    assert cosine([0, 0], [1, 1]) == 0.0


def test_chain_pattern_without_semantic_hits():
    raw = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    expected = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1.0]])
    np.testing.assert_array_equal(build_clip_adjacency(raw, 0.7), expected)


def test_identical_nonadjacent_rows_link_with_weight_one():
    raw = np.array([[1.0, 2.0], [-1.0, 1.0], [0.5, -3.0], [1.0, 2.0]])
    adj = build_clip_adjacency(raw, 0.7)
    assert adj[0, 3] == pytest.approx(1.0) and adj[3, 0] == adj[0, 3]


def test_orthogonal_rows_no_semantic_edge():
    raw = np.array([[1.0, 0.0], [5.0, 5.0], [0.0, 1.0]])
    assert build_clip_adjacency(raw, 0.7)[0, 2] == 0.0


def test_overlap_keeps_max_weight():
    raw = np.array([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0]])
    adj = build_clip_adjacency(raw, 0.7)
    assert adj[0, 1] == 1.0


def test_zero_rows_have_no_semantic_edges():
    raw = np.zeros((4, 3))
    adj = build_clip_adjacency(raw, -0.5)
    assert adj[0, 2] == 0.0 and adj[0, 3] == 0.0


def test_edge_family_flags():
    raw = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert build_clip_adjacency(raw, 0.7, temporal=False)[0, 1] == 0.0
    assert build_clip_adjacency(raw, 0.7, temporal=False)[0, 2] == 1.0
    assert build_clip_adjacency(raw, 0.7, semantic=False)[0, 2] == 0.0
    np.testing.assert_array_equal(build_word_adjacency([(1, 2)], np.ones(3), syntactic=False), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 6)), elements=st.floats(-5, 5)),
       st.floats(-0.9, 0.9))
def test_clip_adjacency_properties(raw, theta):
    adj = build_clip_adjacency(raw, theta)
    n = len(raw)
    assert np.array_equal(adj, adj.T)
    assert np.all(np.diag(adj) == 1.0)
    assert np.all((adj >= min(theta, 0.0)) & (adj <= 1.0 + 1e-12))
    # order-free: permuting clips permutes the semantic part
    perm = np.random.default_rng(0).permutation(n)
    sem = build_clip_adjacency(raw, theta, temporal=False)
    # equal up to BLAS summation order
    np.testing.assert_allclose(build_clip_adjacency(raw[perm], theta, temporal=False),
                               sem[np.ix_(perm, perm)], atol=1e-12)


def test_word_adjacency_examples():
    expected = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1.0]])
    np.testing.assert_array_equal(build_word_adjacency([(1, 3)], np.ones(3)), expected)
    mask = np.array([1, 1, 0, 0.0])
    np.testing.assert_array_equal(build_word_adjacency([], mask), np.diag(mask))
    adj = build_word_adjacency([(1, 2), (2, 3)], np.array([1, 1, 1, 0, 0.0]))
    assert np.all(adj[3:] == 0) and np.all(adj[:, 3:] == 0)


def test_cross_modal_single_word_column(rng):
    v, s = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
    a_sv, a_vs = build_cross_modal(v, s, np.array([0, 1, 0.0]))
    np.testing.assert_array_equal(a_sv.value, np.tile([0, 1, 0.0], (4, 1)))
    assert np.all(a_vs.value[[0, 2]] == 0.0)
    np.testing.assert_allclose(a_vs.value[1].sum(), 1.0, atol=1e-12)


def test_cross_modal_uniform_when_dots_equal():
    v, s = np.ones((4, 2)), np.ones((3, 2))
    a_sv, a_vs = build_cross_modal(v, s, np.ones(3))
    np.testing.assert_allclose(a_sv.value, 1 / 3)
    np.testing.assert_allclose(a_vs.value, 1 / 4)


def test_cross_modal_matches_direct_softmax(rng):
    v, s = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    a_sv, a_vs = build_cross_modal(v, s, np.ones(2))
    dots = np.array([[v[i] @ s[j] for j in range(2)] for i in range(3)])
    sm = np.exp(dots) / np.exp(dots).sum(axis=1, keepdims=True)
    smt = np.exp(dots.T) / np.exp(dots.T).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(a_sv.value, sm, atol=1e-14)
    np.testing.assert_allclose(a_vs.value, smt, atol=1e-14)


def test_cross_modal_requires_a_word(rng):
    with pytest.raises(InputError):
        build_cross_modal(rng.normal(size=(3, 2)), rng.normal(size=(2, 2)), np.zeros(2))


def test_cross_modal_weights_are_dynamic(rng):
    v, s = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    mask = np.ones(4)
    a_sv, a_vs = build_cross_modal(v, s, mask)
    v2 = v.copy()
    v2[2] += 0.5
    b_sv, b_vs = build_cross_modal(v2, s, mask)
    changed_rows = np.flatnonzero(np.abs(a_sv.value - b_sv.value).max(axis=1) > 0)
    assert changed_rows.tolist() == [2]
    assert np.abs(a_vs.value - b_vs.value).max() > 0


def test_build_graph_and_csv_dump(tmp_path, rng):
    raw = rng.normal(size=(5, 3))
    g = build_graph(raw, rng.normal(size=(5, 4)), rng.normal(size=(3, 4)), [(1, 2)], np.array([1, 1, 0.0]))
    assert g.a_vv.shape == (5, 5) and g.a_ss.shape == (3, 3)
    assert g.a_sv.shape == (5, 3) and g.a_vs.shape == (3, 5)
    write_adjacency_csv(tmp_path / "a.csv", g.a_sv)
    np.testing.assert_allclose(np.loadtxt(tmp_path / "a.csv", delimiter=","), g.a_sv.value, atol=1e-9)
