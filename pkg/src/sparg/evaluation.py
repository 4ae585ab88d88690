"""Metrics and report artifacts: balanced accuracy, sweeps, network counts, heatmaps."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import edge_index
from .mask import SparseMask


def confusion_matrix(predictions, labels, n_classes: int = 2) -> np.ndarray:
    """``cm[true, predicted]`` counts."""
    p = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if p.shape != y.shape:
        raise ValueError(f"predictions ({p.shape}) and labels ({y.shape}) differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (y, p), 1)
    return cm


def balanced_accuracy(predictions, labels) -> float:
    """Mean per-class recall over the classes present in ``labels``."""
    p = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if p.shape != y.shape:
        raise ValueError(f"predictions ({p.shape}) and labels ({y.shape}) differ in length")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("balanced accuracy needs both classes among the labels")
    return float(np.mean([np.mean(p[y == c] == c) for c in classes]))


def support_recovery(mask: SparseMask, planted) -> tuple[float, float, bool]:
    """Precision and recall of the kept edges against a planted edge set.

    The third value flags an empty kept set, where precision is reported as 0.
    """
    planted = set(int(e) for e in planted)
    if not planted:
        raise ValueError("planted edge set is empty")
    kept = set(mask.kept_edges().tolist())
    hit = len(kept & planted)
    if not kept:
        return 0.0, 0.0, True
    return hit / len(kept), hit / len(planted), False


def edge_overlap(mask: SparseMask, edges) -> int:
    return len(set(mask.kept_edges().tolist()) & set(int(e) for e in edges))


def network_report(mask: SparseMask, networks: Sequence[str]) -> tuple[list[str], np.ndarray]:
    """Count kept edges per (network, network) pair.

    Returns the sorted network names and a symmetric integer matrix; edges
    inside one network land on the diagonal, so the upper triangle including
    the diagonal sums to the number of kept edges.
    """
    if mask.mode != "binary":
        raise ValueError("network_report needs a binary mask")
    k = mask.k
    if len(networks) != k:
        raise ValueError(f"parcel map covers {len(networks)} parcels, mask has k={k}")
    for p, name in enumerate(networks):
        if name is None or name == "":
            raise ValueError(f"parcel {p} is not mapped to a network")
    names = sorted(set(networks))
    pos = {n: i for i, n in enumerate(names)}
    counts = np.zeros((len(names), len(names)), dtype=int)
    iu, ju = edge_index(k)
    for e in mask.kept_edges():
        a, b = pos[networks[iu[e]]], pos[networks[ju[e]]]
        counts[a, b] += 1
        if a != b:
            counts[b, a] += 1
    return names, counts


def write_network_csv(path, names: Sequence[str], counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network_a", "network_b", "count"])
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                w.writerow([a, b, int(counts[i, j])])


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ratio", "id_balacc", "ood_balacc"])
        for r in rows:
            w.writerow([repr(float(r["ratio"])), repr(float(r["id_balacc"])), repr(float(r["ood_balacc"]))])


def write_confusion_csv(path, confusions: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "class", "predicted", "count"])
        for split, cm in confusions.items():
            cm = np.asarray(cm)
            for c in range(cm.shape[0]):
                for p in range(cm.shape[1]):
                    w.writerow([split, c, p, int(cm[c, p])])


def occlusion_sweep(model, ratios, fold, dataset) -> list[dict]:
    """ID/OOD test balanced accuracy of ``model`` binarized at each ratio."""
    from .training import binarize_and_evaluate

    rows = []
    for r in ratios:
        entry = binarize_and_evaluate(model, r, fold, dataset)
        rows.append({"ratio": float(r), "id_balacc": entry["id_balacc"], "ood_balacc": entry["ood_balacc"]})
    return rows


# ------------------------------------------------------------------ heatmap


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _color(t: float) -> str:
    # white -> dark blue, linear in t
    lo, hi = np.array([255, 255, 255]), np.array([8, 48, 107])
    rgb = np.rint(lo + (hi - lo) * t).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def emit_heatmap(matrix, path, row_labels=None, col_labels=None, title: str = "") -> tuple[Path, Path]:
    """Write ``path`` (SVG, one rect per cell, linear color scale) and ``path`` with .csv."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D matrix, got shape {m.shape}")
    n_rows, n_cols = m.shape
    rows = list(row_labels) if row_labels is not None else [str(i) for i in range(n_rows)]
    cols = list(col_labels) if col_labels is not None else [str(j) for j in range(n_cols)]
    path = Path(path)
    svg_path = path if path.suffix == ".svg" else path.with_suffix(".svg")
    csv_path = svg_path.with_suffix(".csv")

    vals = m.astype(np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo

    cell, left, top = 24, 8 + 7 * max(len(s) for s in rows), 40 + 7 * max(len(s) for s in cols)
    legend_w = 40
    width = left + cell * n_cols + legend_w + 60
    height = top + cell * n_rows + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
    ]
    if title:
        parts.append(f'<text x="4" y="12" font-size="12">{_esc(title)}</text>')
    for i in range(n_rows):
        for j in range(n_cols):
            t = 0.0 if span == 0 else (vals[i, j] - lo) / span
            parts.append(
                f'<rect class="cell" x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{_color(t)}"><title>{_esc(rows[i])} / {_esc(cols[j])}: '
                f"{_fmt(m[i, j])}</title></rect>"
            )
    for i, lab in enumerate(rows):
        parts.append(
            f'<text x="{left - 4}" y="{top + i * cell + cell * 0.65:.1f}" text-anchor="end">{_esc(lab)}</text>'
        )
    for j, lab in enumerate(cols):
        x = left + j * cell + cell * 0.6
        parts.append(
            f'<text x="{x:.1f}" y="{top - 4}" transform="rotate(-60 {x:.1f} {top - 4})">{_esc(lab)}</text>'
        )
    # color scale
    lx = left + cell * n_cols + 16
    steps = 10
    for s in range(steps):
        t = 1.0 - s / (steps - 1)
        parts.append(
            f'<rect class="legend" x="{lx}" y="{top + s * 12}" width="12" height="12" fill="{_color(t)}"/>'
        )
    parts.append(f'<text x="{lx + 16}" y="{top + 9}">{_esc(_fmt_num(hi))}</text>')
    parts.append(f'<text x="{lx + 16}" y="{top + (steps - 1) * 12 + 9}">{_esc(_fmt_num(lo))}</text>')
    parts.append("</svg>")
    svg_path.write_text("\n".join(parts) + "\n")

    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + cols)
        for i in range(n_rows):
            w.writerow([rows[i]] + [_fmt(v) for v in m[i]])
    return svg_path, csv_path


def _fmt_num(v: float) -> str:
    return f"{v:.4g}"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def read_heatmap_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0][1:]
    labels = [r[0] for r in rows[1:]]
    raw = [r[1:] for r in rows[1:]]
    is_int = all("." not in v and "e" not in v.lower() and "n" not in v.lower() for r in raw for v in r)
    arr = np.array([[int(v) if is_int else float(v) for v in r] for r in raw])
    return labels, cols, arr
