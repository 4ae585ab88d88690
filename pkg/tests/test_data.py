import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparg.data import (
    DataValidationError, Dataset, SiteSpec, Subject, SyntheticConfig, edge_index, flatten_upper,
    generate_synthetic, k_from_edges, load_dataset, make_folds, n_edges, read_parcel_map, save_dataset,
    unflatten_upper, write_matrix,
)


def _write_manifest(root, mats, k=None):
    (root / "matrices").mkdir()
    subjects = []
    for i, m in enumerate(mats):
        write_matrix(root / "matrices" / f"s{i}.csv", m)
        subjects.append({"id": f"s{i}", "site": "x", "label": i % 2, "path": f"matrices/s{i}.csv",
                         "split_hint": "id"})
    (root / "manifest.json").write_text(json.dumps({"k": k or mats[0].shape[0], "subjects": subjects}))
    return root / "manifest.json"


def _valid(k, seed=0):
    rng = np.random.default_rng(seed)
    m = unflatten_upper(rng.uniform(-0.5, 0.5, n_edges(k)), k)
    np.fill_diagonal(m, 1.0)
    return m


# ----------------------------------------------------------- edge indexing


def test_flatten_order_k3():
    m = np.array([[1, 0.1, 0.2], [0.1, 1, 0.3], [0.2, 0.3, 1]])
    np.testing.assert_array_equal(flatten_upper(m), [0.1, 0.2, 0.3])


def test_edge_count_k64():
    assert n_edges(64) == 2016
    assert len(edge_index(64)[0]) == 2016
    assert k_from_edges(2016) == 64


@settings(max_examples=30, deadline=None)
@given(k=st.integers(2, 12), seed=st.integers(0, 1000))
def test_unflatten_roundtrip(k, seed):
    m = _valid(k, seed)
    back = unflatten_upper(flatten_upper(m), k)
    off = ~np.eye(k, dtype=bool)
    np.testing.assert_array_equal(back[off], m[off])
    assert np.all(np.diag(back) == 0)
    np.testing.assert_array_equal(back, back.T)


def test_unflatten_rejects_wrong_length():
    with pytest.raises(ValueError):
        unflatten_upper(np.zeros(5), 4)


def test_edge_order_is_row_major_upper():
    iu, ju = edge_index(4)
    assert list(zip(iu.tolist(), ju.tolist())) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


# ----------------------------------------------------------------- loading


def test_load_two_subjects(tmp_path):
    ds = load_dataset(_write_manifest(tmp_path, [_valid(4, 0), _valid(4, 1)]))
    assert len(ds) == 2 and ds.k == 4
    assert ds.X.shape == (2, 6)


def test_load_rejects_asymmetric_with_subject_id(tmp_path):
    bad = _valid(4)
    bad[0, 1], bad[1, 0] = 0.5, 0.4
    with pytest.raises(DataValidationError) as err:
        load_dataset(_write_manifest(tmp_path, [_valid(4), bad]))
    assert err.value.subject_id == "s1"
    assert "s1" in str(err.value)


def test_load_rejects_mixed_k(tmp_path):
    with pytest.raises(DataValidationError):
        load_dataset(_write_manifest(tmp_path, [_valid(4), _valid(3)]))


def test_load_rejects_bad_diagonal_and_range(tmp_path):
    diag = _valid(3)
    diag[1, 1] = 0.9
    with pytest.raises(DataValidationError, match="diagonal"):
        load_dataset(_write_manifest(tmp_path, [diag]))
    big = _valid(3)
    big[0, 2] = big[2, 0] = 1.5
    sub = tmp_path / "b"
    sub.mkdir()
    with pytest.raises(DataValidationError):
        load_dataset(_write_manifest(sub, [big]))


def test_load_missing_manifest(tmp_path):
    with pytest.raises(DataValidationError):
        load_dataset(tmp_path / "nothing.json")


def test_dataset_arrays_are_read_only(small_dataset):
    with pytest.raises(ValueError):
        small_dataset.X[0, 0] = 2.0


def test_save_and_reload_roundtrip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.ids == small_dataset.ids
    np.testing.assert_array_equal(back.X, small_dataset.X)
    assert back.planted == small_dataset.planted
    assert back.parcel_map == small_dataset.parcel_map


def test_parcel_map_rejects_unmapped(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("parcel,network\n0,a\n2,b\n")
    with pytest.raises(DataValidationError, match="not mapped"):
        read_parcel_map(p, 3)


# --------------------------------------------------------------- synthetic


def test_synthetic_is_deterministic(tmp_path):
    cfg = SyntheticConfig(k=5, sites=(SiteSpec("a", 6), SiteSpec("o", 4, ood=True)),
                          n_informative=2, n_nuisance=3)
    save_dataset(generate_synthetic(cfg), tmp_path / "1")
    save_dataset(generate_synthetic(cfg), tmp_path / "2")
    for f in sorted((tmp_path / "1").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "2" / f.relative_to(tmp_path / "1")).read_bytes()


def test_synthetic_matrices_are_valid(small_dataset):
    for s in small_dataset.subjects:
        m = s.matrix
        assert np.array_equal(m, m.T) and np.all(np.diag(m) == 1)
        assert m.min() >= -1 and m.max() <= 1


def test_synthetic_planted_sets_disjoint(small_dataset):
    inf, nu = set(small_dataset.planted["informative"]), set(small_dataset.planted["nuisance"])
    assert len(inf) == 3 and len(nu) == 4 and not inf & nu


def test_synthetic_class_gap_on_informative_edges():
    cfg = SyntheticConfig(k=6, sites=(SiteSpec("a", 400),), n_informative=3, n_nuisance=0,
                          delta=0.4, noise=0.1)
    ds = generate_synthetic(cfg)
    inf = ds.planted["informative"]
    gap = ds.X[ds.labels == 1][:, inf].mean(0) - ds.X[ds.labels == 0][:, inf].mean(0)
    # class means differ by delta up to sampling error (sd ~ 0.1 * sqrt(2/200))
    np.testing.assert_allclose(gap, 0.4, atol=0.04)


def test_synthetic_site_bias_only_on_ood_nuisance():
    cfg = SyntheticConfig(k=6, sites=(SiteSpec("a", 300), SiteSpec("o", 300, ood=True)),
                          n_informative=0, n_nuisance=4, site_bias=0.3, noise=0.1)
    ds = generate_synthetic(cfg)
    nu = ds.planted["nuisance"]
    shift = ds.X[ds.ood].mean(0) - ds.X[~ds.ood].mean(0)
    np.testing.assert_allclose(np.abs(shift[nu]), 0.3, atol=0.04)
    rest = np.setdiff1d(np.arange(ds.n_edges), nu)
    assert np.abs(shift[rest]).max() < 0.04


def test_synthetic_rejects_too_many_edges():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(k=4, n_informative=4, n_nuisance=3))


def test_synthetic_config_roundtrip():
    cfg = SyntheticConfig(seed=3)
    assert SyntheticConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# ------------------------------------------------------------------- folds


def _id_ood_dataset(n_id, n_ood):
    subjects = [Subject(f"i{j}", "s", j % 2, _valid(3, j)) for j in range(n_id)]
    subjects += [Subject(f"o{j}", "t", None, _valid(3, 1000 + j), ood=True) for j in range(n_ood)]
    return Dataset(subjects)


def test_folds_80_20_on_100_labeled():
    ds = _id_ood_dataset(100, 50)
    folds = make_folds(ds, seed=0, test_fraction=0.0)
    assert len(folds) == 5
    for f in folds:
        assert len(f.train) == 80 and len(f.val) == 20
        assert len(f.train_unlabeled) == 10 and len(f.test_ood) == 40


def test_validation_sets_partition_the_pool():
    ds = _id_ood_dataset(100, 50)
    folds = make_folds(ds, seed=1)
    vals = [set(f.val) for f in folds]
    pool = set(folds[0].train) | set(folds[0].val)
    assert set().union(*vals) == pool
    assert sum(len(v) for v in vals) == len(pool)
    test = set(folds[0].test_id)
    assert len(test) == 20 and not test & pool


def test_fold_splits_disjoint_and_stratified():
    ds = _id_ood_dataset(100, 50)
    for f in make_folds(ds, seed=2):
        assert not set(f.train) & set(f.val)
        assert not set(f.train_unlabeled) & set(f.test_ood)
        y = ds.labels_of(f.val)
        assert abs(int(y.sum()) - len(y) / 2) <= 1


def test_folds_reproducible():
    ds = _id_ood_dataset(40, 10)
    assert make_folds(ds, seed=4) == make_folds(ds, seed=4)
    assert make_folds(ds, seed=4) != make_folds(ds, seed=5)


def test_folds_reject_small_datasets():
    with pytest.raises(DataValidationError):
        make_folds(_id_ood_dataset(6, 10))
    with pytest.raises(DataValidationError):
        make_folds(_id_ood_dataset(20, 3))
