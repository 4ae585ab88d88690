import math

import numpy as np
import pytest

from sparg import autodiff as ad
from sparg.data import n_edges
from sparg.gcn import FcnParams, GraphInput, GcnParams, build_graph, classify, cross_entropy, fcn_classify
from conftest import numeric_grad, rel_err


def _set(params, arrays):
    for name, v in arrays.items():
        params[name].value = np.asarray(v, dtype=float)


def test_zero_reconstruction_gives_identity_adjacency():
    g = build_graph(np.zeros(6), 4)
    np.testing.assert_array_equal(g.adj_norm.value, np.eye(4))


def test_single_edge_k2():
    g = build_graph(np.array([1.0]), 2)
    np.testing.assert_allclose(g.adj_norm.value, np.full((2, 2), 0.5))
    np.testing.assert_array_equal(g.node_features.value, [[0, 1], [1, 0]])


def test_adjacency_symmetric_and_finite():
    x = np.random.default_rng(0).normal(size=(3, n_edges(7)))
    a = build_graph(x, 7).adj_norm.value
    assert np.all(np.isfinite(a))
    np.testing.assert_allclose(a, np.swapaxes(a, -1, -2), atol=1e-15)


def test_build_graph_rejects_non_finite_and_wrong_length():
    with pytest.raises(ValueError):
        build_graph(np.array([np.nan, 0, 0]), 3)
    with pytest.raises(ValueError):
        build_graph(np.zeros(4), 3)


def test_classify_k2_hand_example():
    p = GcnParams(2, seed=0)
    _set(p, {
        "gc1.w": [[1, 0], [0, -1]], "gc1.b": [0, 0.1],
        "gc2.w": [[1, 1], [0, 1]], "gc2.b": [0, 0],
        "fc1.w": [[2, 0], [0, -1]], "fc1.b": [0, 0.5],
        "fc2.w": [[1, -1], [1, 1]], "fc2.b": [0.1, 0],
    })
    # A_hat = [[.625,.375],[.375,.625]]; A_hat X = [[.225,.375],[.375,.225]]
    # H1 = [[.225,0],[.375,0]]; H2 rows .28125 and .31875 (both columns); pooled (.3,.3)
    # fc1 -> relu(.6, .2); fc2 -> (.9, -.4)
    logits = classify(build_graph(np.array([0.6]), 2), p)
    np.testing.assert_allclose(logits.value, [0.9, -0.4], atol=1e-14)


def test_zero_weights_give_output_bias():
    p = GcnParams(4, seed=0)
    for t in p.parameters():
        t.value = np.zeros_like(t.value)
    p["fc2.b"].value = np.array([0.3, -0.2])
    logits = classify(build_graph(np.random.default_rng(0).normal(size=6), 4), p)
    np.testing.assert_array_equal(logits.value, [0.3, -0.2])


def test_permutation_invariance():
    k = 6
    rng = np.random.default_rng(4)
    g = build_graph(rng.uniform(-1, 1, n_edges(k)), k)
    perm = rng.permutation(k)
    # relabel nodes: rows of the features, rows and columns of the adjacency
    x = g.node_features.value[perm]
    a = g.adj_norm.value[np.ix_(perm, perm)]
    p = GcnParams(k, seed=1)
    before = classify(g, p).value
    after = classify(GraphInput(ad.Tensor(x), ad.Tensor(a)), p).value
    np.testing.assert_allclose(before, after, atol=1e-13)


def test_classify_shape_mismatch():
    with pytest.raises(ValueError):
        classify(build_graph(np.zeros(6), 4), GcnParams(5))


def test_gcn_gradients_match_finite_differences():
    k = 4
    rng = np.random.default_rng(6)
    x = rng.uniform(-1, 1, (3, n_edges(k)))
    y = np.array([0, 1, 1])
    p = GcnParams(k, seed=2)
    xt = ad.Tensor(x, requires_grad=True)

    def loss(xin):
        return cross_entropy(classify(build_graph(xin, k), p), y)

    ad.backward(loss(xt))
    grads = {n: t.grad.copy() for n, t in p.tensors.items()}
    for name, t in p.tensors.items():
        def f(v, t=t):
            old = t.value
            t.value = v
            with ad.no_grad():
                out = loss(ad.Tensor(x)).item()
            t.value = old
            return out
        assert rel_err(grads[name], numeric_grad(f, t.value.copy())) <= 1e-4, name

    def fx(v):
        with ad.no_grad():
            return loss(ad.Tensor(v)).item()
    assert rel_err(xt.grad, numeric_grad(fx, x.copy())) <= 1e-4


# ----------------------------------------------------------- cross-entropy


def test_cross_entropy_examples():
    assert cross_entropy(np.array([[0.3, 0.3]]), np.array([0])).item() == pytest.approx(math.log(2), abs=1e-12)
    z = np.array([[10.0, -10.0]])
    assert cross_entropy(z, np.array([0])).item() == pytest.approx(math.log1p(math.exp(-20)), abs=1e-12)
    assert cross_entropy(z, np.array([0])).item() == pytest.approx(2.06e-9, rel=1e-2)
    assert cross_entropy(z, np.array([1])).item() == pytest.approx(20.0 + math.log1p(math.exp(-20)), abs=1e-12)


def test_cross_entropy_stable_for_large_logits():
    z = np.array([[1e3, -1e3], [-1e3, 1e3]])
    out = cross_entropy(z, np.array([1, 1]))
    assert np.isfinite(out.item()) and out.item() == pytest.approx(1e3)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((1, 2)), np.array([2]))


# --------------------------------------------------------------------- FCN


def test_fcn_zero_weights_and_shape():
    p = FcnParams(10, seed=0)
    for t in p.parameters():
        t.value = np.zeros_like(t.value)
    p["fc4.b"].value = np.array([1.0, 2.0])
    np.testing.assert_array_equal(fcn_classify(np.ones(10), p).value, [1.0, 2.0])
    assert fcn_classify(np.ones((5, 10)), FcnParams(10)).shape == (5, 2)


def test_fcn_matches_hand_forward():
    p = FcnParams(6, seed=3)
    x = np.random.default_rng(2).uniform(-1, 1, 6)
    h = x
    for i in range(1, 5):
        w, b = p[f"fc{i}.w"].value, p[f"fc{i}.b"].value
        h = np.array([sum(h[a] * w[a, j] for a in range(w.shape[0])) + b[j] for j in range(w.shape[1])])
        if i < 4:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(fcn_classify(x, p).value, h, atol=1e-13)


def test_fcn_rejects_wrong_length():
    with pytest.raises(ValueError):
        fcn_classify(np.zeros(5), FcnParams(6))
