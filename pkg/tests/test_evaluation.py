import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparg.evaluation import (
    balanced_accuracy, confusion_matrix, emit_heatmap, network_report, occlusion_sweep, read_heatmap_csv,
    support_recovery, write_network_csv,
)
from sparg.mask import SparseMask
from sparg.training import TrainConfig, train


def _binary(kept):
    kept = np.asarray(kept, dtype=bool)
    return SparseMask(np.zeros(len(kept)), "binary", kept)


def test_balanced_accuracy_examples():
    assert balanced_accuracy([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert balanced_accuracy([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    assert balanced_accuracy([0, 1, 1, 0], [0, 1, 1, 1]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)


def test_balanced_accuracy_needs_two_classes():
    with pytest.raises(ValueError):
        balanced_accuracy([0, 1], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=40), st.randoms())
def test_balanced_accuracy_invariances(pairs, rnd):
    labels = [y for y, _ in pairs]
    preds = [p for _, p in pairs]
    if len(set(labels)) < 2:
        return
    base = balanced_accuracy(preds, labels)
    assert 0.0 <= base <= 1.0
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    assert balanced_accuracy([preds[i] for i in order], [labels[i] for i in order]) == pytest.approx(base)
    assert balanced_accuracy([1 - p for p in preds], [1 - y for y in labels]) == pytest.approx(base)


def test_confusion_totals():
    cm = confusion_matrix([0, 1, 1, 0, 1], [0, 1, 0, 0, 1])
    assert cm.sum() == 5 and cm.tolist() == [[2, 1], [0, 2]]


# ---------------------------------------------------------- network report


def test_network_report_no_edges():
    names, counts = network_report(_binary([False] * 6), ["a", "a", "b", "b"])
    assert names == ["a", "b"] and counts.sum() == 0


def test_network_report_single_cross_edge():
    # k=4 edges: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3); keep (1,2)
    names, counts = network_report(_binary([0, 0, 0, 1, 0, 0]), ["Vis", "Vis", "DMN", "DMN"])
    assert names == ["DMN", "Vis"]
    assert counts.tolist() == [[0, 1], [1, 0]]


def test_network_report_full_mask_counts_every_edge_once():
    names, counts = network_report(_binary([1] * 6), ["a", "a", "b", "b"])
    assert np.array_equal(counts, counts.T)
    assert int(np.triu(counts).sum()) == 6
    assert counts.tolist() == [[1, 4], [4, 1]]


def test_network_report_rejects_unmapped():
    with pytest.raises(ValueError):
        network_report(_binary([1] * 6), ["a", "", "b", "b"])
    with pytest.raises(ValueError):
        network_report(_binary([1] * 6), ["a", "b", "b"])


def test_network_csv(tmp_path):
    write_network_csv(tmp_path / "n.csv", ["a", "b"], np.array([[1, 2], [2, 0]]))
    assert (tmp_path / "n.csv").read_text().splitlines() == [
        "network_a,network_b,count", "a,a,1", "a,b,2", "b,a,2", "b,b,0"]


# --------------------------------------------------------- support recovery


def test_support_recovery_examples():
    assert support_recovery(_binary([1, 1, 0, 0]), [0, 1]) == (1.0, 1.0, False)
    assert support_recovery(_binary([1, 1, 1, 1]), [0, 1]) == (0.5, 1.0, False)
    assert support_recovery(_binary([0, 0, 1, 1]), [0, 1]) == (0.0, 0.0, False)
    assert support_recovery(_binary([0, 0, 0, 0]), [0, 1]) == (0.0, 0.0, True)
    with pytest.raises(ValueError):
        support_recovery(_binary([1, 0]), [])


# ------------------------------------------------------------------ heatmap


def test_heatmap_cells_and_csv_roundtrip(tmp_path):
    m = np.array([[1, 2], [3, 4]])
    svg, csv_path = emit_heatmap(m, tmp_path / "h.svg", ["r0", "r1"], ["c0", "c1"])
    text = svg.read_text()
    assert text.count('class="cell"') == 4
    rows, cols, back = read_heatmap_csv(csv_path)
    assert rows == ["r0", "r1"] and cols == ["c0", "c1"]
    np.testing.assert_array_equal(back, m)


def test_heatmap_float_roundtrip_exact(tmp_path):
    m = np.random.default_rng(0).normal(size=(3, 2))
    _, csv_path = emit_heatmap(m, tmp_path / "f.svg")
    np.testing.assert_array_equal(read_heatmap_csv(csv_path)[2], m)


def test_heatmap_constant_matrix_single_color(tmp_path):
    svg, _ = emit_heatmap(np.full((3, 3), 7), tmp_path / "c.svg")
    fills = re.findall(r'class="cell"[^>]*fill="(#[0-9a-f]{6})"', svg.read_text())
    assert len(fills) == 9 and len(set(fills)) == 1


# ----------------------------------------------------------------- sweep


def test_occlusion_sweep_rows_and_determinism(small_dataset, small_fold):
    tm = train(TrainConfig(max_epochs=2, seed=0), small_fold, small_dataset)
    ratios = (0.0, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99)
    rows = occlusion_sweep(tm, ratios, small_fold, small_dataset)
    assert [r["ratio"] for r in rows] == list(ratios)
    assert rows == occlusion_sweep(tm, ratios, small_fold, small_dataset)
