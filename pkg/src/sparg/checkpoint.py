"""Single-file model checkpoints: a JSON header line followed by raw doubles.

Layout::

    <header JSON, one line>\\n<payload>

The header holds ``format``, ``version``, the resolved ``config``, ``meta``
(variant, k, best epoch, fold, history) and a ``tensors`` list of
``{"name", "shape", "offset"}`` entries. ``offset`` counts float64 values from
the start of the payload; every tensor is stored row-major, little-endian.
Tensor names: ``mask.logits``, ``mask.scores`` (fixed masks only),
``vae.*``, ``gcn.*``, ``fcn.*``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gcn import FcnParams, GcnParams
from .mask import SparseMask, top_edges
from .training import MASK_GCN_RATIO, Model, TrainConfig, TrainedModel, variant_spec
from .vae import VaeParams

FORMAT = "sparg-checkpoint"
VERSION = 1
FILENAME = "model.ckpt"


def _resolve(path, for_write: bool) -> Path:
    p = Path(path)
    if p.suffix == ".ckpt":
        return p
    if for_write or p.is_dir():
        return p / FILENAME
    return p


def save_checkpoint(tm: TrainedModel, path) -> Path:
    """Write ``tm`` to ``path`` (a ``.ckpt`` file, or a directory receiving ``model.ckpt``)."""
    target = _resolve(path, for_write=True)
    target.parent.mkdir(parents=True, exist_ok=True)
    model = tm.model
    arrays: dict[str, np.ndarray] = {}
    if model.mask is not None:
        arrays["mask.logits"] = model.mask.logits.value
    if model.mask_scores is not None:
        arrays["mask.scores"] = np.asarray(model.mask_scores)
    for part in (model.vae, model.gcn, model.fcn):
        if part is not None:
            arrays.update(part.named_arrays())
    entries, offset = [], 0
    for name, a in arrays.items():
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += int(a.size)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": tm.config.to_dict(),
        "meta": {
            "variant": model.variant,
            "k": model.k,
            "best_epoch": tm.best_epoch,
            "fold": tm.fold,
            "history": tm.history,
        },
        "tensors": entries,
    }
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    with open(target, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    return target


def load_checkpoint(path) -> TrainedModel:
    """Inverse of :func:`save_checkpoint`; the mask comes back in continuous mode."""
    source = _resolve(path, for_write=False)
    try:
        raw = source.read_bytes()
    except FileNotFoundError:
        raise ValueError(f"checkpoint not found: {source}") from None
    cut = raw.find(b"\n")
    if cut < 0:
        raise ValueError(f"{source}: missing checkpoint header")
    try:
        header = json.loads(raw[:cut])
    except json.JSONDecodeError as err:
        raise ValueError(f"{source}: unreadable checkpoint header: {err}") from None
    if header.get("format") != FORMAT:
        raise ValueError(f"{source}: not a checkpoint (format {header.get('format')!r})")
    if header.get("version") != VERSION:
        raise ValueError(f"{source}: unsupported checkpoint version {header.get('version')}")
    payload = np.frombuffer(raw[cut + 1:], dtype="<f8")
    arrays = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=int))
        if t["offset"] + n > payload.size:
            raise ValueError(f"{source}: payload too short for tensor {t['name']}")
        arrays[t["name"]] = payload[t["offset"]: t["offset"] + n].reshape(t["shape"]).astype(np.float64)

    config = TrainConfig.from_dict(header["config"])
    meta = header["meta"]
    k = int(meta["k"])
    spec = variant_spec(meta["variant"])

    def group(prefix):
        return {n[len(prefix) + 1:]: a for n, a in arrays.items() if n.startswith(prefix + ".")}

    mask = scores = None
    if spec.mask == "trainable":
        mask = SparseMask(arrays["mask.logits"])
    elif spec.mask == "fixed":
        scores = arrays["mask.scores"]
        mask = SparseMask(np.zeros(len(scores)), "binary", top_edges(scores, MASK_GCN_RATIO), MASK_GCN_RATIO)
    E = k * (k - 1) // 2
    vae = VaeParams(E, config.latent_dim, arrays=group("vae")) if spec.autoencoder else None
    gcn = GcnParams(k, arrays=group("gcn")) if spec.classifier == "gcn" else None
    fcn = FcnParams(E, arrays=group("fcn")) if spec.classifier == "fcn" else None
    model = Model(meta["variant"], k, config, mask, vae, gcn, fcn, scores)
    return TrainedModel(model, config, meta["history"], int(meta["best_epoch"]), meta["fold"])
