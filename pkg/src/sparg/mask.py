"""Global trainable edge mask with an ElasticNet penalty and post-hoc binarization."""

from __future__ import annotations

import csv
import math

import numpy as np

from . import autodiff as ad
from .data import edge_index, k_from_edges

DEFAULT_OCCLUSION_GRID = (0.0, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99)


class SparseMask:
    """One parameter per unordered edge; the diagonal is never part of the input.

    In continuous mode the applied value is ``sigmoid(logit)``. In binary mode
    ``kept`` (a boolean vector) is applied as 0/1.
    """

    def __init__(
        self,
        logits,
        mode: str = "continuous",
        kept: np.ndarray | None = None,
        occlusion_ratio: float = 0.0,
    ):
        if mode not in ("continuous", "binary"):
            raise ValueError(f"unknown mask mode {mode!r}")
        self.logits = logits if isinstance(logits, ad.Tensor) else ad.Tensor(logits, requires_grad=True, name="mask.logits")
        self.logits.name = self.logits.name or "mask.logits"
        self.mode = mode
        if mode == "binary":
            if kept is None or kept.shape != self.logits.shape:
                raise ValueError("binary masks need a kept vector of length E")
            kept = np.asarray(kept, dtype=bool)
        self.kept = kept
        self.occlusion_ratio = float(occlusion_ratio)

    @classmethod
    def zeros(cls, n_edges: int) -> "SparseMask":
        return cls(np.zeros(n_edges))

    @property
    def n_edges(self) -> int:
        return self.logits.shape[0]

    @property
    def k(self) -> int:
        return k_from_edges(self.n_edges)

    def values(self) -> ad.Tensor:
        """The mask actually applied: differentiable in continuous mode, constant in binary mode."""
        if self.mode == "binary":
            return ad.Tensor(self.kept.astype(np.float64))
        return ad.sigmoid(self.logits)

    def numpy_values(self) -> np.ndarray:
        if self.mode == "binary":
            return self.kept.astype(np.float64)
        return ad._sigmoid(self.logits.value)

    def kept_edges(self) -> np.ndarray:
        if self.mode != "binary":
            raise ValueError("kept_edges is defined for binary masks only")
        return np.flatnonzero(self.kept)

    def copy(self) -> "SparseMask":
        return SparseMask(
            ad.Tensor(self.logits.value.copy(), requires_grad=self.logits.requires_grad, name="mask.logits"),
            self.mode,
            None if self.kept is None else self.kept.copy(),
            self.occlusion_ratio,
        )


def apply_mask(x, mask: SparseMask) -> ad.Tensor:
    """Edge-wise product ``x * m`` over a (batch of) canonical edge vectors."""
    x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    if x.shape[-1] != mask.n_edges:
        raise ValueError(
            f"apply_mask: input has {x.shape[-1]} edges (k={_k_or_none(x.shape[-1])}) "
            f"but the mask has {mask.n_edges} (k={mask.k})"
        )
    return ad.hadamard(x, mask.values())


def _k_or_none(n):
    try:
        return k_from_edges(n)
    except ValueError:
        return None


def elasticnet_penalty(mask: SparseMask, lambda_mix: float = 0.5) -> ad.Tensor:
    """``lambda_mix * sum|m| + (1 - lambda_mix) / 2 * sum m**2``, each unordered edge once."""
    if mask.mode != "continuous":
        raise ValueError("the ElasticNet penalty applies to continuous masks only")
    if not 0.0 <= lambda_mix <= 1.0:
        raise ValueError(f"lambda_mix must lie in [0, 1], got {lambda_mix}")
    m = mask.values()
    l1 = ad.tsum(ad.absolute(m))
    l2 = ad.tsum(ad.square(m))
    return ad.add(ad.scale(l1, lambda_mix), ad.scale(l2, (1.0 - lambda_mix) / 2.0))


def keep_count(n_edges: int, occlusion_ratio: float) -> int:
    return n_edges - math.floor(occlusion_ratio * n_edges)


def top_edges(scores: np.ndarray, occlusion_ratio: float) -> np.ndarray:
    """Boolean keep-vector for the largest scores; ties go to the lower edge index."""
    if not 0.0 <= occlusion_ratio < 1.0:
        raise ValueError(f"occlusion ratio must lie in [0, 1), got {occlusion_ratio}")
    scores = np.asarray(scores, dtype=np.float64)
    n = keep_count(scores.shape[0], occlusion_ratio)
    order = np.argsort(-scores, kind="stable")
    kept = np.zeros(scores.shape[0], dtype=bool)
    kept[order[:n]] = True
    return kept


def binarize(mask: SparseMask, occlusion_ratio: float) -> SparseMask:
    """Keep the ``E - floor(ratio * E)`` edges with the largest mask values."""
    if mask.mode != "continuous":
        raise ValueError("binarize expects a continuous mask")
    kept = top_edges(mask.numpy_values(), occlusion_ratio)
    logits = ad.Tensor(mask.logits.value.copy(), name="mask.logits")
    return SparseMask(logits, "binary", kept, occlusion_ratio)


def threshold_of(mask: SparseMask, occlusion_ratio: float) -> float:
    """The mask value at the cut: the smallest kept m."""
    kept = top_edges(mask.numpy_values(), occlusion_ratio)
    return float(mask.numpy_values()[kept].min())


# ------------------------------------------------------------------ CSV I/O


def write_mask_csv(path, mask: SparseMask) -> None:
    iu, ju = edge_index(mask.k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mask.mode == "binary":
            w.writerow(["i", "j", "kept"])
            for i, j, keep in zip(iu, ju, mask.kept):
                w.writerow([int(i), int(j), int(keep)])
        else:
            w.writerow(["i", "j", "m"])
            for i, j, m in zip(iu, ju, mask.numpy_values()):
                w.writerow([int(i), int(j), repr(float(m))])


def read_mask_csv(path) -> SparseMask:
    """Read a mask CSV written by :func:`write_mask_csv`.

    A continuous mask comes back with logits ``log(m / (1 - m))``; a binary one
    with zero logits and the stored keep-vector.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if header not in (["i", "j", "kept"], ["i", "j", "m"]):
        raise ValueError(f"{path}: header must be 'i,j,kept' or 'i,j,m', got {header}")
    k = k_from_edges(len(rows))
    iu, ju = edge_index(k)
    pos = {(int(i), int(j)): e for e, (i, j) in enumerate(zip(iu, ju))}
    vals = np.zeros(len(rows))
    for r in rows:
        key = (int(r[0]), int(r[1]))
        if key not in pos:
            raise ValueError(f"{path}: ({r[0]},{r[1]}) is not an upper-triangle edge for k={k}")
        vals[pos[key]] = float(r[2])
    if header[2] == "kept":
        kept = vals != 0
        ratio = 1.0 - kept.sum() / len(kept)
        return SparseMask(np.zeros(len(rows)), "binary", kept, ratio)
    m = np.clip(vals, 1e-300, 1 - 1e-16)
    return SparseMask(np.log(m) - np.log1p(-m))

