import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcnrefine.graph import (
    UNLABELED,
    DegenerateLabelsError,
    EmptyROIError,
    GraphParams,
    assign_labels,
    build_graph,
    build_roi,
    connect,
    diversity,
    dump_graph,
    edge_weight,
    inv_div,
    norm_div,
    read_csr,
    roi_coords,
)
from gcnrefine.uncertainty import bundle_from_maps
from gcnrefine.volume import Volume, binarize, binary_volume

# 40-digit mpmath evaluations of the clamped formula at the float64 inputs
# (1e-6, 1 - 1e-6, 0.368 as stored in binary)
DIV_0_1 = 39.86305452694683049275371
DIV_0_0368 = 7.047677035750727804152372
probs = st.floats(0, 1)


def bundle(expect, ent=None, tau=0.5):
    e = Volume(np.asarray(expect, float), kind="probability")
    h = None if ent is None else Volume(np.asarray(ent, float), kind="probability")
    return bundle_from_maps(e, h, tau)


class TestDiversity:
    @given(probs)
    def test_zero_on_diagonal(self, p):
        assert diversity(p, p) == 0
        assert norm_div(p, p) == 0
        assert inv_div(p, p) == 1

    def test_opposite_extremes(self):
        assert diversity(0.0, 1.0) == pytest.approx(DIV_0_1, rel=1e-12)
        assert inv_div(0.0, 1.0) < 1e-11
        assert np.float32(norm_div(0.0, 1.0)) == np.float32(1.0)

    def test_reference_pair(self):
        assert diversity(0.2, 0.8) == pytest.approx(2.4, rel=1e-13)

    def test_inverse_near_zero_for_0368(self):
        assert diversity(0.0, 0.368) == pytest.approx(DIV_0_0368, rel=1e-12)
        assert inv_div(0.0, 0.368) < 0.05

    @given(probs, probs)
    def test_symmetric_nonnegative(self, p, q):
        assert diversity(p, q) == diversity(q, p)
        assert diversity(p, q) >= 0
        assert abs(norm_div(p, q) + inv_div(p, q) - 1.0) <= 1e-12
        assert 0 <= norm_div(p, q) < 1 or p != q
        assert 0 < inv_div(p, q) <= 1

    def test_increasing_in_gap(self):
        q = np.linspace(0, 1, 201)
        for p in (0.0, 0.3, 1.0):
            d = diversity(p, q)
            left, right = d[q <= p], d[q >= p]
            assert np.all(np.diff(left) < 0) or left.size <= 1
            assert np.all(np.diff(right) > 0) or right.size <= 1

    def test_norm_div_saturates(self):
        q = np.linspace(0, 1, 501)
        nd = norm_div(0.0, q)
        assert np.all(np.diff(nd) >= 0)
        assert norm_div(0.0, 0.2) > 0.9
        assert norm_div(0.0, 0.35) > 0.99
        assert norm_div(0.0, 0.05) < 0.9


class TestEdgeWeight:
    def test_identical_nodes(self):
        p = GraphParams(weighting="w1", lam=0.5, beta=1.0)
        assert edge_weight(0.3, 0.3, 0.7, 0.7, [1, 2, 3], [1, 2, 3], p) == 2.0

    def test_fig6_ordering(self):
        p = GraphParams(weighting="w1", lam=0.5, beta=0.0)
        w = [edge_weight(0.0, q, 0.0, 0.0, [0, 0, 0], [0, 0, 0], p) for q in (1.0, 0.999, 0.368, 0.0)]
        assert w[0] > w[1] > w[2] > w[3] == 0

    def test_w2_is_norm_div(self):
        p = GraphParams(weighting="w2", lam=1.0, beta=0.0)
        assert edge_weight(0.1, 0.7, 0.2, 0.9, [0, 0, 0], [4, 1, 2], p) == norm_div(0.1, 0.7)

    def test_kernels(self):
        p = GraphParams(lam=0.0, beta=1.0, sigma1=0.1, sigma2=10.0)
        w = edge_weight(0.5, 0.5, 0.2, 0.5, [0, 0, 0], [1, 2, 2], p)
        assert w == pytest.approx(np.exp(-0.09 / 0.2) + np.exp(-9 / 20.0), rel=1e-15)

    def test_lambda_zero_collapses(self, rng):
        n = 1000
        args = (rng.random(n), rng.random(n), rng.random(n), rng.random(n),
                rng.integers(0, 30, (n, 3)), rng.integers(0, 30, (n, 3)))
        ws = [edge_weight(*args, GraphParams(weighting=k, lam=0.0, beta=1.0)) for k in ("w1", "w2", "w3")]
        np.testing.assert_array_equal(ws[0], ws[1])
        np.testing.assert_array_equal(ws[0], ws[2])

    @settings(max_examples=50)
    @given(probs, probs, probs, probs, st.sampled_from(["w1", "w2", "w3"]))
    def test_symmetric(self, e1, e2, v1, v2, kind):
        p = GraphParams(weighting=kind)
        a = edge_weight(e1, e2, v1, v2, [1, 2, 3], [4, 0, 2], p)
        b = edge_weight(e2, e1, v2, v1, [4, 0, 2], [1, 2, 3], p)
        assert a == b and a >= 0


class TestROI:
    def test_empty(self):
        with pytest.raises(EmptyROIError):
            build_roi(bundle(np.zeros((4, 4, 4))), GraphParams())

    def test_single_uncertain_voxel(self):
        e = np.zeros((5, 5, 5))
        e[2, 2, 2] = 0.5
        roi = build_roi(bundle(e), GraphParams(dilation_iterations=1))
        assert roi.data.sum() == 27

    def test_contains_expectation_and_uncertain(self, small_case):
        b = small_case["bundle"]
        roi = build_roi(b, GraphParams()).mask()
        assert np.all(roi >= b.uncertain_mask.mask())
        assert np.all(roi >= binarize(b.expectation, 0.5).mask())


class TestLabels:
    def test_all_certain(self):
        e = np.zeros((4, 4, 4))
        e[1:3, 1:3, 1:3] = 1.0
        e[0, 0, 0] = 1.0
        b = bundle(e, np.zeros_like(e))
        roi = binary_volume(np.ones((4, 4, 4)))
        labels = assign_labels(binarize(b.expectation), b, roi)
        assert UNLABELED not in labels
        assert labels.sum() == 9

    def test_all_uncertain(self):
        e = np.full((3, 3, 3), 0.5)
        b = bundle(e)
        with pytest.raises(DegenerateLabelsError):
            assign_labels(binary_volume(e > 0.4), b, binary_volume(np.ones((3, 3, 3))))

    def test_single_class(self):
        e = np.zeros((3, 3, 3))
        b = bundle(e, np.zeros_like(e))
        with pytest.raises(DegenerateLabelsError):
            assign_labels(binary_volume(e), b, binary_volume(np.ones((3, 3, 3))))

    def test_label_fraction(self, small_case):
        b, y = small_case["bundle"], small_case["y"]
        roi = build_roi(b, GraphParams())
        labels = assign_labels(y, b, roi)
        roi_m = roi.mask()
        expected = 1 - (b.uncertain_mask.mask() & roi_m).sum() / roi_m.sum()
        assert np.mean(labels != UNLABELED) == pytest.approx(expected, abs=1e-15)


class TestConnect:
    def roi_of(self, mask):
        v = binary_volume(mask)
        return roi_coords(v), v

    @pytest.mark.parametrize("second,adjacent", [((1, 0, 0), True), ((1, 1, 0), False), ((0, 0, 2), False)])
    def test_two_nodes(self, second, adjacent):
        m = np.zeros((3, 3, 3), bool)
        m[0, 0, 0] = m[second] = True
        coords, roi = self.roi_of(m)
        edges = connect(coords, roi, k_random=0)
        assert len(edges) == (1 if adjacent else 0)

    def test_face_edges_of_block(self):
        coords, roi = self.roi_of(np.ones((3, 4, 5), bool))
        edges = connect(coords, roi, k_random=0)
        assert len(edges) == 2 * 4 * 5 + 3 * 3 * 5 + 3 * 4 * 4

    def test_degree_audit(self):
        m = np.zeros((20, 20, 20), bool)
        m[5:15, 5:15, 5:15] = True
        coords, roi = self.roi_of(m)
        n = len(coords)
        assert n == 1000
        edges = connect(coords, roi, k_random=16, seed=3)
        deg = np.bincount(edges.ravel(), minlength=n)
        assert deg.min() >= 16
        assert len(edges) <= n * (6 + 16)
        assert np.all(edges[:, 0] < edges[:, 1])
        assert len(np.unique(edges, axis=0)) == len(edges)

    def test_excludes_self_and_faces_when_full(self):
        # 5 nodes in a row: each node can draw every non-neighbour
        m = np.zeros((5, 1, 1), bool)
        m[:] = True
        coords, roi = self.roi_of(m)
        edges = connect(coords, roi, k_random=16, seed=0)
        assert len(edges) == 10  # complete graph on 5 nodes

    def test_determinism(self):
        coords, roi = self.roi_of(np.ones((8, 8, 8), bool))
        a = connect(coords, roi, 16, seed=9)
        b = connect(coords, roi, 16, seed=9)
        c = connect(coords, roi, 16, seed=10)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestBuildGraph:
    @pytest.fixture(scope="class")
    @classmethod
    def graph(cls, small_case):
        return build_graph(small_case["v"], small_case["y"], small_case["bundle"], GraphParams(seed=5))

    def test_nodes_are_roi(self, graph, small_case):
        roi = build_roi(small_case["bundle"], GraphParams())
        assert graph.n_nodes == roi.data.sum()
        x, y, z = graph.coords.T
        assert roi.data[x, y, z].all()
        lin = x + 24 * (y + 24 * z)
        assert np.all(np.diff(lin) > 0)

    def test_feature_lookup(self, graph, small_case):
        b = small_case["bundle"]
        v = small_case["v"].data.astype(float)
        roi = graph.roi.mask()
        lo, hi = v[roi].min(), v[roi].max()
        for i in range(0, graph.n_nodes, 97):
            x, y, z = graph.coords[i]
            np.testing.assert_allclose(
                graph.features[i],
                [(v[x, y, z] - lo) / (hi - lo), b.expectation.data[x, y, z], b.entropy.data[x, y, z]],
                rtol=0, atol=1e-15,
            )
        assert graph.features[:, 0].min() == 0 and graph.features[:, 0].max() == 1

    def test_labels_follow_uncertainty(self, graph, small_case):
        x, y, z = graph.coords.T
        unc = small_case["bundle"].uncertain_mask.data[x, y, z].astype(bool)
        np.testing.assert_array_equal(graph.labels == UNLABELED, unc)
        np.testing.assert_array_equal(graph.labels[~unc], small_case["y"].data[x, y, z][~unc])

    def test_adjacency_symmetric(self, graph):
        a = graph.adjacency
        assert (a != a.T).nnz == 0
        assert not a.diagonal().any()
        assert a.data.min() >= 0

    def test_unlabeled_nodes_connected(self, graph):
        deg = np.diff(graph.adjacency.indptr)
        assert deg[graph.labels == UNLABELED].min() >= 1

    def test_weights_match_edge_weight(self, graph):
        p = GraphParams(seed=5)
        a = graph.adjacency.tocoo()
        f, c = graph.features, graph.coords
        w = edge_weight(f[a.row, 1], f[a.col, 1], f[a.row, 0], f[a.col, 0], c[a.row], c[a.col], p)
        np.testing.assert_array_equal(a.data, w)

    def test_all_certain_graph(self):
        e = np.zeros((6, 6, 6))
        e[2:4, 2:4, 2:4] = 1.0
        b = bundle(e, np.zeros_like(e))
        y = e > 0.5
        y[2, 2, 2] = False  # a confident disagreement keeps both classes labeled
        g = build_graph(Volume(e + 0.1), binary_volume(y), b, GraphParams())
        assert (g.labels == UNLABELED).sum() == 0

    def test_deterministic(self, small_case):
        args = (small_case["v"], small_case["y"], small_case["bundle"], GraphParams(seed=5))
        a, b = build_graph(*args), build_graph(*args)
        np.testing.assert_array_equal(a.coords, b.coords)
        assert (a.adjacency != b.adjacency).nnz == 0
        np.testing.assert_array_equal(a.adjacency.data, b.adjacency.data)

    def test_dims_mismatch(self, small_case):
        with pytest.raises(ValueError):
            build_graph(Volume(np.zeros((3, 3, 3))), small_case["y"], small_case["bundle"])

    def test_dump_roundtrip(self, graph, tmp_path):
        dump_graph(graph, tmp_path, GraphParams(seed=5))
        a = read_csr(tmp_path / "graph.csr")
        assert (a != graph.adjacency).nnz == 0
        assert (tmp_path / "graph.json").read_text().count('"nodes"') == 1
