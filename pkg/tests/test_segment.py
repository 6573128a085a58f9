"""Ward clustering against a brute-force oracle, plus tree invariants."""

import numpy as np
import pytest

from captree import (
    ClusterStat,
    DimensionMismatch,
    EmptySequence,
    FrameEmbeddingSequence,
    SegmentTree,
    TemporalWardSegmenter,
    build_tree,
    mark_eligibility,
    ward_cost,
)


def oracle_merge_sequence(X):
    """Rescan every adjacent pair each step, recomputing centroids from the
    raw member frames; ties go to the smaller left frame index."""
    X = np.asarray(X, dtype=np.float64)
    clusters = [[i] for i in range(len(X))]
    merges = []
    while len(clusters) > 1:
        best_key, best_j = None, None
        for j in range(len(clusters) - 1):
            a, b = clusters[j], clusters[j + 1]
            mu_a, mu_b = X[a].mean(axis=0), X[b].mean(axis=0)
            diff = mu_a - mu_b
            cost = len(a) * len(b) / (len(a) + len(b)) * float(diff @ diff)
            key = (cost, a[0])
            if best_key is None or key < best_key:
                best_key, best_j = key, j
        j = best_j
        merges.append((clusters[j][0], clusters[j + 1][0], clusters[j + 1][-1] + 1, best_key[0]))
        clusters[j : j + 2] = [clusters[j] + clusters[j + 1]]
    return merges


def make_seq(values, fps=30.0, stride=4, video_id="v"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    ts = [i * stride / fps for i in range(len(arr))]
    return FrameEmbeddingSequence(video_id, ts, arr, arr.shape[1])


def test_ward_cost_identical_singletons():
    a = ClusterStat(1, np.array([3.0, 4.0]))
    b = ClusterStat(1, np.array([3.0, 4.0]))
    assert ward_cost(a, b) == 0.0


def test_ward_cost_singletons_1d():
    assert ward_cost(ClusterStat(1, np.array([0.0])), ClusterStat(1, np.array([2.0]))) == pytest.approx(2.0)


def test_ward_cost_weighted():
    a = ClusterStat(2, np.array([1.0]))
    b = ClusterStat(1, np.array([5.0]))
    assert ward_cost(a, b) == pytest.approx(2 / 3 * 16, rel=1e-12)


def test_ward_cost_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ward_cost(ClusterStat(1, np.zeros(2)), ClusterStat(1, np.zeros(3)))


def test_merge_order_tie_break_left_first():
    seg = TemporalWardSegmenter().fit(np.array([[0.0], [0.0], [10.0], [10.0]]))
    assert seg.merge_ranges_ == [(0, 1, 2), (2, 3, 4), (0, 2, 4)]
    assert seg.merge_costs_.tolist() == [0.0, 0.0, pytest.approx(100.0)]


def test_merge_order_three_frames():
    seg = TemporalWardSegmenter().fit(np.array([[0.0], [1.0], [10.0]]))
    assert seg.merge_ranges_ == [(0, 1, 2), (0, 2, 3)]
    assert seg.merge_costs_[0] == pytest.approx(0.5)
    assert seg.merge_costs_[1] == pytest.approx(2 / 3 * 90.25, rel=1e-12)


def test_oracle_equivalence_small_batch():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(2, 33))
        d = int(rng.integers(1, 5))
        X = rng.normal(size=(n, d))
        seg = TemporalWardSegmenter().fit(X)
        expected = oracle_merge_sequence(X)
        assert seg.merge_ranges_ == [(lo, mid, hi) for lo, mid, hi, _ in expected]
        np.testing.assert_allclose(
            seg.merge_costs_, [c for _, _, _, c in expected], rtol=1e-9, atol=0.0
        )


def test_partition_at_every_stage():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 3))
    seg = TemporalWardSegmenter().fit(X)
    boundaries = set(range(21))
    for lo, mid, hi in seg.merge_ranges_:
        assert mid in boundaries  # both halves exist as current clusters
        assert lo in boundaries and hi in boundaries
        boundaries.discard(mid)
    assert boundaries == {0, 20}


def test_determinism():
    X = np.random.default_rng(9).normal(size=(30, 4))
    a = TemporalWardSegmenter().fit(X)
    b = TemporalWardSegmenter().fit(X)
    assert a.merge_ranges_ == b.merge_ranges_
    assert np.array_equal(a.merge_costs_, b.merge_costs_)


def test_centroid_consistency():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(24, 3))
    seq = make_seq(X)
    tree = build_tree(seq)
    for node in tree.nodes.values():
        if node.children:
            a, b = (tree.nodes[c] for c in node.children)
            mu = lambda nd: X[nd.lo : nd.hi].mean(axis=0)
            wa, wb = a.hi - a.lo, b.hi - b.lo
            expected = (wa * mu(a) + wb * mu(b)) / (wa + wb)
            np.testing.assert_allclose(mu(node), expected, rtol=1e-9)


def test_estimator_params_and_labels():
    seg = TemporalWardSegmenter(n_clusters=2)
    assert seg.get_params() == {"n_clusters": 2}
    seg.fit(np.array([[0.0], [0.1], [5.0], [5.1]]))
    assert seg.labels_.tolist() == [0, 0, 1, 1]


def test_build_tree_single_frame():
    seq = make_seq([1.0])
    tree = build_tree(seq, frame_duration_s=0.5)
    assert len(tree.nodes) == 1
    node = tree.node(tree.root)
    assert (node.lo, node.hi) == (0, 1)
    assert node.end_s == pytest.approx(0.5)


def test_build_tree_single_frame_requires_duration():
    with pytest.raises(ValueError):
        build_tree(make_seq([1.0]))


def test_build_tree_empty_rejected():
    with pytest.raises((EmptySequence, ValueError)):
        seq = FrameEmbeddingSequence("v", [], np.zeros((0, 1)), 1)
        build_tree(seq)


def test_build_tree_timestamps():
    seq = make_seq([0.0, 0.0, 5.0, 5.0], fps=30.0, stride=4)
    tree = build_tree(seq)
    root = tree.node(tree.root)
    assert root.start_s == 0.0
    assert root.end_s == pytest.approx(4 * 4 / 30.0)
    for node in tree.nodes.values():
        if node.children:
            a, b = (tree.nodes[c] for c in node.children)
            assert a.end_s == pytest.approx(b.start_s)
            assert (a.lo, b.hi) == (node.lo, node.hi)


def test_eligibility_boundaries_exact():
    # 0.125 s per frame is exactly representable, so these hit the
    # thresholds with equality
    seq = make_seq(np.arange(40, dtype=float), fps=32.0, stride=4)
    tree = mark_eligibility(build_tree(seq))
    by_span = {}
    for node in tree.nodes.values():
        by_span.setdefault(node.hi - node.lo, node)
    four = by_span.get(4)  # 0.5 s exactly
    if four is not None:
        assert four.duration_s == pytest.approx(0.5)
        assert not four.caption_eligible  # strictly greater than
    thirty_two = by_span.get(32)  # 4.0 s exactly
    if thirty_two is not None:
        assert thirty_two.duration_s == pytest.approx(4.0)
        assert thirty_two.annotation_eligible  # inclusive


def test_eligibility_flags_constructed_boundaries():
    from conftest import manual_tree

    tree = manual_tree("v", (0, 8, [(0, 4), (4, 8)]), frame_duration=0.125)
    for node in tree.nodes.values():
        if node.hi - node.lo == 4:  # exactly 0.5 s
            assert not node.caption_eligible
    tree = manual_tree("v", (0, 9, [(0, 5), (5, 9)]), frame_duration=1.0)
    root = tree.node(tree.root)
    assert root.annotation_eligible and root.caption_eligible
    for c in root.children:
        assert tree.node(c).annotation_eligible  # 5 s and 4 s, inclusive


def test_caption_leaf_marking():
    from conftest import manual_tree

    # root 10 s; children 6 s and 4 s are structural leaves, so they are
    # caption leaves and the root is not
    tree = manual_tree("v", (0, 10, [(0, 6), (6, 10)]), frame_duration=1.0)
    root = tree.node(tree.root)
    assert not root.caption_leaf
    kinds = sorted(tree.node(c).caption_leaf for c in root.children)
    assert kinds == [True, True]


def test_tree_json_roundtrip():
    seq = make_seq(np.random.default_rng(2).normal(size=(12, 2)))
    tree = mark_eligibility(build_tree(seq))
    clone = SegmentTree.from_json_dict(tree.to_json_dict())
    assert clone.root == tree.root
    assert clone.to_json_dict() == tree.to_json_dict()
