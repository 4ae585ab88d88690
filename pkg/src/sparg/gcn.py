"""Dense GCN classifier on reconstructed connectomes, and the FCN baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import edge_index, n_edges
from .nn import ParamSet, dense, glorot

GCN_WIDTH = 2
FCN_WIDTHS = (64, 16, 4, 2)
HIDDEN_BIAS_INIT = 0.1


@dataclass
class GraphInput:
    node_features: ad.Tensor  # (..., k, k)
    adj_norm: ad.Tensor  # (..., k, k)


_scatter_cache: dict[int, np.ndarray] = {}


def _scatter(k: int) -> np.ndarray:
    """(E, k*k) 0/1 matrix placing each edge at (i, j) and (j, i)."""
    p = _scatter_cache.get(k)
    if p is None:
        iu, ju = edge_index(k)
        p = np.zeros((n_edges(k), k * k))
        e = np.arange(len(iu))
        p[e, iu * k + ju] = 1.0
        p[e, ju * k + iu] = 1.0
        _scatter_cache[k] = p
    return p


def build_graph(xhat, k: int) -> GraphInput:
    """Node features are the rebuilt symmetric matrix (zero diagonal).

    Adjacency is ``|x| + I`` normalized as ``D^-1/2 (|x| + I) D^-1/2``.
    """
    x = xhat if isinstance(xhat, ad.Tensor) else ad.Tensor(xhat)
    if x.shape[-1] != n_edges(k):
        raise ValueError(f"build_graph: expected {n_edges(k)} edges for k={k}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x.value)):
        raise ValueError("build_graph: reconstruction has non-finite entries")
    lead = x.shape[:-1]
    mat = ad.reshape(ad.matmul(x, ad.Tensor(_scatter(k))), lead + (k, k))
    a = ad.add(ad.absolute(mat), ad.Tensor(np.eye(k)))
    deg = ad.tsum(a, axis=-1)
    dinv = ad.exp(ad.scale(ad.log(deg), -0.5))
    a = ad.hadamard(a, ad.reshape(dinv, lead + (k, 1)))
    a = ad.hadamard(a, ad.reshape(dinv, lead + (1, k)))
    return GraphInput(mat, a)


class GcnParams(ParamSet):
    """Two graph convolutions (k->2, 2->2) and a two-layer head (2->2, 2->2)."""

    def __init__(self, k: int, seed: int = 0, arrays: dict[str, np.ndarray] | None = None):
        self.k = k
        w = GCN_WIDTH
        layout = {"gc1": (k, w), "gc2": (w, w), "fc1": (w, w), "fc2": (w, 2)}
        if arrays is None:
            rng = np.random.default_rng(seed)
            arrays = {}
            for name, (fi, fo) in layout.items():
                arrays[f"{name}.w"] = glorot(rng, fi, fo)
                # 2-unit ReLU layers die easily at init; start them in the active region
                arrays[f"{name}.b"] = np.full(fo, 0.0 if name == "fc2" else HIDDEN_BIAS_INIT)
        for name, (fi, fo) in layout.items():
            if arrays[f"{name}.w"].shape != (fi, fo) or arrays[f"{name}.b"].shape != (fo,):
                raise ValueError(f"gcn: parameter {name} has the wrong shape")
        super().__init__(arrays, "gcn")

    def layer(self, name):
        return self[f"{name}.w"], self[f"{name}.b"]


def classify(graph: GraphInput, params: GcnParams) -> ad.Tensor:
    """Logits of shape (..., 2); node embeddings are mean-pooled before the head."""
    x, a = graph.node_features, graph.adj_norm
    if x.shape[-1] != params.k or a.shape[-1] != params.k or x.shape != a.shape:
        raise ValueError(
            f"classify: features {x.shape} / adjacency {a.shape} do not match k={params.k}"
        )
    h = ad.relu(dense(ad.matmul(a, x), *params.layer("gc1")))
    h = ad.relu(dense(ad.matmul(a, h), *params.layer("gc2")))
    pooled = ad.mean(h, axis=-2)
    h = ad.relu(dense(pooled, *params.layer("fc1")))
    return dense(h, *params.layer("fc2"))


def cross_entropy(logits, labels) -> ad.Tensor:
    """Mean of ``-log softmax(logits)[label]`` via a shifted log-sum-exp."""
    z = logits if isinstance(logits, ad.Tensor) else ad.Tensor(logits)
    y = np.asarray(labels)
    if z.shape[-1] != 2:
        raise ValueError(f"cross_entropy: expected 2 logits, got shape {z.shape}")
    if y.shape != z.shape[:-1]:
        raise ValueError(f"cross_entropy: labels shape {y.shape} does not match logits {z.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"cross_entropy: labels must be 0 or 1, got {np.unique(y)}")
    # the shift is a constant; gradients are unaffected
    shift = ad.Tensor(z.value.max(axis=-1, keepdims=True))
    zs = ad.sub(z, shift)
    lse = ad.log(ad.tsum(ad.exp(zs), axis=-1))
    onehot = np.eye(2)[y.astype(int)]
    picked = ad.tsum(ad.hadamard(zs, ad.Tensor(onehot)), axis=-1)
    nll = ad.sub(lse, picked)
    return ad.mean(nll) if nll.value.ndim else nll


class FcnParams(ParamSet):
    """Four dense layers E -> 64 -> 16 -> 4 -> 2."""

    def __init__(self, n_edges: int, seed: int = 0, arrays: dict[str, np.ndarray] | None = None):
        self.n_edges = n_edges
        widths = (n_edges,) + FCN_WIDTHS
        layout = {f"fc{i + 1}": (widths[i], widths[i + 1]) for i in range(len(FCN_WIDTHS))}
        if arrays is None:
            rng = np.random.default_rng(seed)
            arrays = {}
            for name, (fi, fo) in layout.items():
                arrays[f"{name}.w"] = glorot(rng, fi, fo)
                arrays[f"{name}.b"] = np.zeros(fo)
        for name, (fi, fo) in layout.items():
            if arrays[f"{name}.w"].shape != (fi, fo) or arrays[f"{name}.b"].shape != (fo,):
                raise ValueError(f"fcn: parameter {name} has the wrong shape")
        self.layers = list(layout)
        super().__init__(arrays, "fcn")

    def layer(self, name):
        return self[f"{name}.w"], self[f"{name}.b"]


def fcn_classify(xhat, params: FcnParams) -> ad.Tensor:
    x = xhat if isinstance(xhat, ad.Tensor) else ad.Tensor(xhat)
    if x.shape[-1] != params.n_edges:
        raise ValueError(f"fcn_classify: expected {params.n_edges} edges, got {x.shape[-1]}")
    h = x
    for i, name in enumerate(params.layers):
        h = dense(h, *params.layer(name))
        if i < len(params.layers) - 1:
            h = ad.relu(h)
    return h
