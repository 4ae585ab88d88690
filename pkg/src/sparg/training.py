"""Joint training of mask, autoencoder and classifier; variants, CV and grid search.

One iteration takes a labeled step (all four loss terms) followed by an
unlabeled step on the OOD pool (classification term dropped, classifier not
run). Early stopping monitors validation balanced accuracy, with validation
loss as a tie-breaker, and restores the best epoch.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import Dataset, FoldSplit
from .evaluation import balanced_accuracy, confusion_matrix
from .gcn import FcnParams, GcnParams, build_graph, classify, cross_entropy, fcn_classify
from .mask import DEFAULT_OCCLUSION_GRID, SparseMask, apply_mask, binarize, elasticnet_penalty, top_edges
from .vae import DEFAULT_LATENT, VaeParams, decode, encode, kl_loss, mse_loss, reparameterize

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.1, 0.25, 0.5)
TERMS = ("lambda1", "lambda2", "lambda3", "lambda4")
MASK_GCN_RATIO = 0.7


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    mask: str | None  # "trainable", "fixed" or None
    autoencoder: str | None  # "vae", "ae" or None
    classifier: str  # "gcn" or "fcn"
    unlabeled: bool
    terms: tuple[str, ...]  # loss weights that apply (grid-searched)
    lambda_mix: float | None = None  # forced ElasticNet mix, None = from config


VARIANTS: dict[str, VariantSpec] = {
    "sparg": VariantSpec("trainable", "vae", "gcn", True, TERMS),
    "sparg_labeled_only": VariantSpec("trainable", "vae", "gcn", False, TERMS),
    "sparg_ae": VariantSpec("trainable", "ae", "gcn", True, ("lambda1", "lambda2", "lambda4")),
    "sparg_no_sparsity": VariantSpec(None, "vae", "gcn", True, ("lambda2", "lambda3", "lambda4")),
    "gcn_plain": VariantSpec(None, None, "gcn", False, ()),
    "fcn_plain": VariantSpec(None, None, "fcn", False, ()),
    "mask_gcn": VariantSpec("fixed", None, "gcn", False, ()),
    "lasso": VariantSpec("trainable", None, "gcn", False, ("lambda1", "lambda4"), 1.0),
    "elasticnet_baseline": VariantSpec("trainable", None, "gcn", False, ("lambda1", "lambda4")),
    "frobenius": VariantSpec("trainable", None, "gcn", False, ("lambda1", "lambda4"), 0.0),
}


def variant_spec(variant: str) -> VariantSpec:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class LossWeights:
    # the KL weight sits below the search grid: with E=120 summed squared errors
    # are small and any larger weight collapses the posterior
    lambda1: float = 0.1
    lambda2: float = 0.5
    lambda3: float = 0.001
    lambda4: float = 0.5
    lambda_mix: float = 0.5

    def __post_init__(self):
        for name in TERMS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ValueError("lambda_mix must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "sparg"
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 3e-4
    batch_size: int = 16
    max_epochs: int = 500
    patience: int = 20
    occlusion_grid: tuple[float, ...] = DEFAULT_OCCLUSION_GRID
    seed: int = 0
    fine_tune_after_binarize: bool = False
    fine_tune_epochs: int = 50
    masked_residual_mse: bool = False
    latent_dim: int = DEFAULT_LATENT

    def __post_init__(self):
        variant_spec(self.variant)
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("lr, batch_size, max_epochs and patience must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        for r in self.occlusion_grid:
            if not 0.0 <= r < 1.0:
                raise ValueError(f"occlusion ratio {r} outside [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["occlusion_grid"] = list(self.occlusion_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        if "occlusion_grid" in d:
            d["occlusion_grid"] = tuple(float(r) for r in d["occlusion_grid"])
        return cls(**d)


# -------------------------------------------------------------------- model


class Model:
    """Parameters of one variant: optional mask and autoencoder, a classifier."""

    def __init__(self, variant: str, k: int, config: TrainConfig, mask: SparseMask | None = None,
                 vae: VaeParams | None = None, gcn: GcnParams | None = None,
                 fcn: FcnParams | None = None, mask_scores: np.ndarray | None = None):
        self.variant = variant
        self.spec = variant_spec(variant)
        self.k = k
        self.config = config
        self.mask = mask
        self.vae = vae
        self.gcn = gcn
        self.fcn = fcn
        self.mask_scores = mask_scores

    @classmethod
    def initialize(cls, config: TrainConfig, k: int) -> "Model":
        spec = variant_spec(config.variant)
        E = k * (k - 1) // 2
        seed = config.seed
        mask = SparseMask.zeros(E) if spec.mask == "trainable" else None
        vae = None
        if spec.autoencoder is not None:
            vae = VaeParams(E, config.latent_dim, seed=_subseed(seed, 1))
        gcn = GcnParams(k, seed=_subseed(seed, 2)) if spec.classifier == "gcn" else None
        fcn = FcnParams(E, seed=_subseed(seed, 3)) if spec.classifier == "fcn" else None
        return cls(config.variant, k, config, mask, vae, gcn, fcn)

    @property
    def n_edges(self) -> int:
        return self.k * (self.k - 1) // 2

    def lambda_mix(self) -> float:
        forced = self.spec.lambda_mix
        return self.config.weights.lambda_mix if forced is None else forced

    def parameters(self, include_mask: bool = True) -> list[ad.Tensor]:
        ps = []
        if include_mask and self.mask is not None and self.spec.mask == "trainable" and self.mask.mode == "continuous":
            ps.append(self.mask.logits)
        for part in (self.vae, self.gcn, self.fcn):
            if part is not None:
                ps.extend(part.parameters())
        return ps

    def snapshot(self) -> dict[str, np.ndarray]:
        snap = {}
        if self.mask is not None:
            snap["mask.logits"] = self.mask.logits.value.copy()
        for part in (self.vae, self.gcn, self.fcn):
            if part is not None:
                snap.update({k: v.copy() for k, v in part.named_arrays().items()})
        return snap

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        if self.mask is not None:
            self.mask.logits.value = snap["mask.logits"].copy()
        for part in (self.vae, self.gcn, self.fcn):
            if part is not None:
                for name, t in part.tensors.items():
                    t.value = snap[f"{part.prefix}.{name}"].copy()

    def with_mask(self, mask: SparseMask | None) -> "Model":
        """Shallow view sharing network parameters but applying ``mask``."""
        return Model(self.variant, self.k, self.config, mask, self.vae, self.gcn, self.fcn, self.mask_scores)

    def clone(self) -> "Model":
        from copy import deepcopy

        return deepcopy(self)


def _subseed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


@dataclass
class Forward:
    xprime: ad.Tensor
    xhat: ad.Tensor
    mu: ad.Tensor | None
    logvar: ad.Tensor | None
    logits: ad.Tensor | None


def forward(model: Model, X: np.ndarray, rng: np.random.Generator | None = None,
            with_classifier: bool = True) -> Forward:
    """x -> x' (mask) -> x_hat (autoencoder) -> logits.

    With ``rng`` the VAE samples its latent; without it z = mu.
    """
    x = ad.Tensor(X)
    xp = apply_mask(x, model.mask) if model.mask is not None else x
    mu = logvar = None
    if model.vae is not None:
        mu, logvar = encode(model.vae, xp)
        if model.spec.autoencoder == "vae" and rng is not None:
            z = reparameterize(mu, logvar, rng.standard_normal(mu.shape))
        else:
            z = mu
        xhat = decode(model.vae, z)
    else:
        xhat = xp
    logits = None
    if with_classifier:
        if model.gcn is not None:
            logits = classify(build_graph(xhat, model.k), model.gcn)
        else:
            logits = fcn_classify(xhat, model.fcn)
    return Forward(xp, xhat, mu, logvar, logits)


def effective_weights(model: Model) -> dict[str, float]:
    """Loss weights after applying the variant's semantics."""
    w = model.config.weights
    spec = model.spec
    if spec.mask != "trainable" and spec.autoencoder is None:
        return {"lambda1": 0.0, "lambda2": 0.0, "lambda3": 0.0, "lambda4": 1.0}
    return {
        "lambda1": w.lambda1 if spec.mask == "trainable" else 0.0,
        "lambda2": w.lambda2 if spec.autoencoder is not None else 0.0,
        "lambda3": w.lambda3 if spec.autoencoder == "vae" else 0.0,
        "lambda4": w.lambda4,
    }


def compute_losses(model: Model, fwd: Forward, labels=None) -> dict[str, ad.Tensor]:
    """Loss components and their weighted total for one forward pass.

    ``labels=None`` marks an unlabeled step: the classification term is 0.
    """
    lw = effective_weights(model)
    zero = ad.Tensor(0.0)
    ls = zero
    if model.spec.mask == "trainable" and model.mask.mode == "continuous":
        ls = elasticnet_penalty(model.mask, model.lambda_mix())
    mse = kl = zero
    if model.vae is not None:
        weights = None
        if model.config.masked_residual_mse and model.mask is not None:
            weights = model.mask.values()
        mse = mse_loss(fwd.xprime, fwd.xhat, weights)
        if model.spec.autoencoder == "vae":
            kl = kl_loss(fwd.mu, fwd.logvar)
    ce = zero if labels is None else cross_entropy(fwd.logits, labels)
    total = ad.scale(ls, lw["lambda1"])
    total = ad.add(total, ad.scale(mse, lw["lambda2"]))
    total = ad.add(total, ad.scale(kl, lw["lambda3"]))
    total = ad.add(total, ad.scale(ce, lw["lambda4"]))
    return {"L_S": ls, "L_MSE": mse, "L_KL": kl, "L_CE": ce, "total": total}


def weighted_total(model: Model, components: dict[str, float]) -> float:
    """Recompute the joint loss from its components, in the same order as training."""
    lw = effective_weights(model)
    t = components["L_S"] * lw["lambda1"]
    t = t + components["L_MSE"] * lw["lambda2"]
    t = t + components["L_KL"] * lw["lambda3"]
    t = t + components["L_CE"] * lw["lambda4"]
    return t


# ---------------------------------------------------------------- inference


def predict_logits(model: Model, X: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        return forward(model, X).logits.value


def predict(model: Model, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_logits(model, X), axis=-1)


def evaluate_split(model: Model, dataset: Dataset, ids) -> dict:
    y = dataset.labels_of(ids)
    pred = predict(model, dataset.edges(ids))
    return {
        "balacc": balanced_accuracy(pred, y),
        "confusion": confusion_matrix(pred, y).tolist(),
        "n": len(ids),
    }


def validation_loss(model: Model, X: np.ndarray, y: np.ndarray) -> float:
    with ad.no_grad():
        fwd = forward(model, X)
        return compute_losses(model, fwd, y)["total"].item()


# ----------------------------------------------------------------- training


@dataclass
class TrainedModel:
    model: Model
    config: TrainConfig
    history: list[dict]
    best_epoch: int
    fold: int | None = None

    @property
    def mask(self) -> SparseMask | None:
        return self.model.mask


HISTORY_FIELDS = ("epoch", "L_S", "L_MSE", "L_KL", "L_CE", "total", "val_balacc", "val_loss")


def _check_finite(losses: dict[str, ad.Tensor], epoch: int, step: str) -> None:
    bad = {k: v.item() for k, v in losses.items() if not np.isfinite(v.value).all()}
    if bad:
        raise TrainingDivergence(f"non-finite loss at epoch {epoch} ({step} step): {bad}")


def _fit(model: Model, dataset: Dataset, fold: FoldSplit, max_epochs: int, train_mask: bool,
         rng_tag: int = 0, on_epoch=None) -> tuple[list[dict], int]:
    cfg = model.config
    if not fold.train:
        raise ValueError("the labeled training set is empty")
    Xl = dataset.edges(fold.train)
    yl = dataset.labels_of(fold.train)
    use_unlabeled = model.spec.unlabeled and len(fold.train_unlabeled) > 0
    Xu = dataset.edges(fold.train_unlabeled) if use_unlabeled else None
    Xv = dataset.edges(fold.val)
    yv = dataset.labels_of(fold.val)

    params = model.parameters(include_mask=train_mask)
    opt = ad.Adam(params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(_subseed(cfg.seed, 10 + rng_tag))
    noise_rng = np.random.default_rng(_subseed(cfg.seed, 20 + rng_tag))
    sample_rng = noise_rng if model.spec.autoencoder == "vae" else None

    u_order: list[int] = []
    ub = min(cfg.batch_size, len(Xu)) if use_unlabeled else 0

    def next_unlabeled() -> np.ndarray:
        nonlocal u_order
        idx = []
        while len(idx) < ub:
            if not u_order:
                u_order = list(shuffle_rng.permutation(len(Xu)))
            idx.append(u_order.pop(0))
        return Xu[idx]

    def take_step(X, y) -> dict[str, float]:
        fwd = forward(model, X, rng=sample_rng, with_classifier=y is not None)
        losses = compute_losses(model, fwd, y)
        _check_finite(losses, epoch, "labeled" if y is not None else "unlabeled")
        ad.backward(losses["total"])
        opt.step([p for p in params if p.grad is not None])
        return {k: v.item() for k, v in losses.items()}

    history: list[dict] = []
    best_key = None
    best_epoch = 0
    best_snap = model.snapshot()
    stale = 0
    for epoch in range(1, max_epochs + 1):
        order = shuffle_rng.permutation(len(Xl))
        sums = dict.fromkeys(("L_S", "L_MSE", "L_KL", "L_CE"), 0.0)
        n_steps = 0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start: start + cfg.batch_size]
            comps = take_step(Xl[b], yl[b])
            for key in sums:
                sums[key] += comps[key]
            n_steps += 1
            if use_unlabeled:
                comps = take_step(next_unlabeled(), None)
                for key in sums:
                    sums[key] += comps[key]
                n_steps += 1
        row = {"epoch": epoch}
        row.update({k: v / n_steps for k, v in sums.items()})
        row["total"] = weighted_total(model, row)
        val_pred = predict(model, Xv)
        row["val_balacc"] = balanced_accuracy(val_pred, yv)
        row["val_loss"] = validation_loss(model, Xv, yv)
        if not math.isfinite(row["val_loss"]):
            raise TrainingDivergence(f"non-finite validation loss at epoch {epoch}")
        history.append(row)
        if on_epoch is not None:
            on_epoch(row, model)
        key = (row["val_balacc"], -row["val_loss"])
        if best_key is None or key > best_key:
            best_key, best_epoch, stale = key, epoch, 0
            best_snap = model.snapshot()
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.restore(best_snap)
    return history, best_epoch


def train(config: TrainConfig, fold: FoldSplit, dataset: Dataset, on_epoch=None) -> TrainedModel:
    """Train one variant on one fold; the best validation epoch is restored.

    ``on_epoch(row, model)`` is called after every epoch with the history row.
    """
    model = Model.initialize(config, dataset.k)
    if model.spec.mask == "fixed":
        scores = np.abs(dataset.edges(fold.train)).mean(axis=0)
        model.mask_scores = scores
        model.mask = SparseMask(np.zeros(len(scores)), "binary", top_edges(scores, MASK_GCN_RATIO),
                                MASK_GCN_RATIO)
    history, best_epoch = _fit(model, dataset, fold, config.max_epochs, train_mask=True, on_epoch=on_epoch)
    log.info("%s fold %s: best epoch %d of %d", config.variant, fold.fold, best_epoch, len(history))
    return TrainedModel(model, config, history, best_epoch, fold.fold)


def run_variant(variant: str, config: TrainConfig, fold: FoldSplit, dataset: Dataset) -> TrainedModel:
    variant_spec(variant)
    return train(replace(config, variant=variant), fold, dataset)


def allowed_ratios(variant: str, ratios) -> tuple[float, ...]:
    """Occlusion ratios a variant can be evaluated at."""
    spec = variant_spec(variant)
    if spec.mask == "trainable":
        return tuple(ratios)
    if spec.mask == "fixed":
        return (MASK_GCN_RATIO,)
    return (0.0,)


def masked_model(tm: TrainedModel, ratio: float) -> Model:
    """The trained model with its mask binarized at ``ratio``."""
    model = tm.model
    spec = model.spec
    if spec.mask == "trainable":
        return model.with_mask(binarize(model.mask, ratio))
    if spec.mask == "fixed":
        kept = top_edges(model.mask_scores, ratio)
        return model.with_mask(SparseMask(np.zeros(len(kept)), "binary", kept, ratio))
    if ratio != 0:
        raise ValueError(f"variant {model.variant} has no mask; only occlusion ratio 0 applies")
    return model


def fold_mask_scale(model: Model, mask_values: np.ndarray) -> None:
    """Rescale the first encoder layer so a binary mask reproduces the continuous one.

    Training drives every mask value well below 1 and the encoder compensates
    with large input weights; swapping in 0/1 values then inflates activations by
    orders of magnitude. Multiplying each kept edge's encoder row by its
    continuous value makes ``b * x`` through the new weights equal ``m * x``
    through the old ones on the kept edges, a function-preserving warm start
    for fine-tuning. Operates in place on ``model`` (a clone).
    """
    w = model.vae["enc1.w"]
    scale = np.where(model.mask.kept, mask_values, 1.0)
    w.value = w.value * scale[:, None]


def binarize_and_evaluate(tm: TrainedModel, ratio: float, fold: FoldSplit, dataset: Dataset,
                          fine_tune: bool | None = None) -> dict:
    """Binarize at ``ratio``, optionally fine-tune with the mask frozen, and score all splits."""
    model = masked_model(tm, ratio)
    fine_tune = tm.config.fine_tune_after_binarize if fine_tune is None else fine_tune
    if fine_tune and model.mask is not None and (model.vae is not None or model.gcn is not None):
        model = model.clone()
        if model.vae is not None and tm.model.spec.mask == "trainable":
            fold_mask_scale(model, tm.model.mask.numpy_values())
        _fit(model, dataset, fold, tm.config.fine_tune_epochs, train_mask=False, rng_tag=100)
    out = {"ratio": float(ratio)}
    for split, ids in (("val", fold.val), ("id", fold.test_id), ("ood", fold.test_ood)):
        if not ids:
            out[f"{split}_balacc"] = float("nan")
            continue
        res = evaluate_split(model, dataset, ids)
        out[f"{split}_balacc"] = res["balacc"]
        out[f"{split}_confusion"] = res["confusion"]
    out["n_kept"] = int(model.mask.kept.sum()) if model.mask is not None and model.mask.mode == "binary" else model.n_edges
    return out


def select_ratio(tm: TrainedModel, fold: FoldSplit, dataset: Dataset, ratios=None) -> tuple[float, list[dict]]:
    """Best ratio by validation balanced accuracy; ties prefer the sparser mask."""
    ratios = allowed_ratios(tm.model.variant, tm.config.occlusion_grid if ratios is None else ratios)
    rows = [binarize_and_evaluate(tm, r, fold, dataset) for r in ratios]
    best = max(rows, key=lambda r: (r["val_balacc"], r["ratio"]))
    return best["ratio"], rows


# -------------------------------------------------------------- grid search


@dataclass
class GridResult:
    best_config: TrainConfig
    best_ratio: float
    scores: list[dict]


def weight_grid(variant: str, values=LAMBDA_GRID, tie: bool = False, base: LossWeights | None = None):
    """Candidate LossWeights for the terms that matter to ``variant``.

    ``values`` is one sequence shared by every term, or a mapping from term
    name to its own sequence (terms left out keep the ``base`` value).
    """
    base = base or LossWeights()
    terms = variant_spec(variant).terms
    if isinstance(values, dict):
        unknown = set(values) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown loss terms in grid: {sorted(unknown)}")
        per_term = {t: tuple(values.get(t, (getattr(base, t),))) for t in terms}
    else:
        per_term = {t: tuple(values) for t in terms}
    if not terms:
        return [base]
    if tie:
        lengths = {len(v) for v in per_term.values()}
        if len(lengths) != 1:
            raise ValueError("a tied grid needs the same number of values for every term")
        n = lengths.pop()
        return [replace(base, **{t: per_term[t][i] for t in terms}) for i in range(n)]
    combos = itertools.product(*(per_term[t] for t in terms))
    return [replace(base, **dict(zip(terms, combo))) for combo in combos]


def grid_search(base: TrainConfig, fold: FoldSplit, dataset: Dataset, weights=None,
                ratios=None, tie: bool = False, jobs: int = 1) -> GridResult:
    """Exhaustive search over loss weights x occlusion ratios on the validation split."""
    candidates = list(weights) if weights is not None else weight_grid(base.variant, tie=tie)
    if not candidates:
        raise ValueError("empty weight grid")
    ratios = allowed_ratios(base.variant, base.occlusion_grid if ratios is None else ratios)
    if not ratios:
        raise ValueError("empty occlusion grid")
    configs = [replace(base, weights=w) for w in candidates]
    results = _map(_grid_cell, [(c, fold, dataset, ratios) for c in configs], jobs)
    scores = [row for rows in results for row in rows]
    best = max(scores, key=_grid_key)
    best_cfg = replace(base, weights=LossWeights(**{t: best[t] for t in TERMS}, lambda_mix=base.weights.lambda_mix))
    return GridResult(best_cfg, best["ratio"], scores)


def _grid_key(row):
    # highest validation accuracy, then higher ratio, then lexicographically smallest weights
    return (row["val_balacc"], row["ratio"], tuple(-row[t] for t in TERMS))


def _grid_cell(args):
    config, fold, dataset, ratios = args
    tm = train(config, fold, dataset)
    rows = []
    for r in ratios:
        e = binarize_and_evaluate(tm, r, fold, dataset)
        row = {t: getattr(config.weights, t) for t in TERMS}
        row.update(ratio=float(r), val_balacc=e["val_balacc"], id_balacc=e["id_balacc"],
                   ood_balacc=e["ood_balacc"], best_epoch=tm.best_epoch)
        rows.append(row)
    return rows


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------- cross-validation


@dataclass
class CVResult:
    models: list[TrainedModel]
    folds: list[dict]
    id_mean: float
    id_std: float
    ood_mean: float
    ood_std: float

    def summary(self) -> dict:
        return {
            "folds": self.folds,
            "id_balacc_mean": self.id_mean, "id_balacc_std": self.id_std,
            "ood_balacc_mean": self.ood_mean, "ood_balacc_std": self.ood_std,
        }


def aggregate(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=0))


def _cv_fold(args):
    config, fold, dataset = args
    tm = train(config, fold, dataset)
    ratio, _ = select_ratio(tm, fold, dataset)
    entry = binarize_and_evaluate(tm, ratio, fold, dataset)
    return tm, entry


def cross_validate(config: TrainConfig, dataset: Dataset, folds: list[FoldSplit], jobs: int = 1) -> CVResult:
    """Train on every fold, pick the occlusion ratio on validation, report test accuracy."""
    results = _map(_cv_fold, [(config, f, dataset) for f in folds], jobs)
    models = [tm for tm, _ in results]
    entries = []
    for f, (tm, e) in zip(folds, results):
        entries.append({"fold": f.fold, "ratio": e["ratio"], "val_balacc": e["val_balacc"],
                        "id_balacc": e["id_balacc"], "ood_balacc": e["ood_balacc"],
                        "best_epoch": tm.best_epoch})
    id_mean, id_std = aggregate([e["id_balacc"] for e in entries])
    ood_mean, ood_std = aggregate([e["ood_balacc"] for e in entries])
    return CVResult(models, entries, id_mean, id_std, ood_mean, ood_std)
