"""Connectivity-matrix datasets: on-disk format, synthetic generator, CV folds.

On-disk layout (a dataset directory)::

    manifest.json      {"k": int, "subjects": [{"id", "site", "label", "path", "split_hint"}]}
    matrices/<id>.csv  k lines of k comma-separated decimals
    planted.json       optional, synthetic only: {"informative": [...], "nuisance": [...]}
    parcels.csv        optional parcel->network map, header "parcel,network"

Matrices are consumed as given; no Fisher z-transform is applied.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

VALIDATION_TOL = 1e-9


class DataValidationError(ValueError):
    """Raised for malformed datasets; ``subject_id`` names the offender when known."""

    def __init__(self, message: str, subject_id: str | None = None):
        super().__init__(message if subject_id is None else f"subject {subject_id}: {message}")
        self.subject_id = subject_id


# ------------------------------------------------------------- edge indexing


def n_edges(k: int) -> int:
    return k * (k - 1) // 2


def edge_index(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column arrays of the canonical edge order: (i, j), i < j, by i then j."""
    return np.triu_indices(k, 1)


def k_from_edges(n: int) -> int:
    k = int(round((1 + np.sqrt(1 + 8 * n)) / 2))
    if n_edges(k) != n:
        raise ValueError(f"{n} is not a triangular edge count k(k-1)/2")
    return k


def flatten_upper(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    iu, ju = edge_index(m.shape[-1])
    return m[..., iu, ju]


def unflatten_upper(vector, k: int) -> np.ndarray:
    """Symmetric k x k matrix from an edge vector; the diagonal is 0."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[-1] != n_edges(k):
        raise ValueError(f"edge vector length {v.shape[-1]} != k(k-1)/2 = {n_edges(k)} for k={k}")
    out = np.zeros(v.shape[:-1] + (k, k))
    iu, ju = edge_index(k)
    out[..., iu, ju] = v
    out[..., ju, iu] = v
    return out


def validate_matrix(m: np.ndarray, subject_id: str | None = None) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataValidationError(f"matrix is not square (shape {m.shape})", subject_id)
    if not np.all(np.isfinite(m)):
        raise DataValidationError("matrix has non-finite entries", subject_id)
    if np.max(np.abs(m - m.T)) > VALIDATION_TOL:
        i, j = np.unravel_index(np.argmax(np.abs(m - m.T)), m.shape)
        raise DataValidationError(
            f"matrix is not symmetric: ({i},{j})={m[i, j]!r} but ({j},{i})={m[j, i]!r}", subject_id
        )
    if np.max(np.abs(np.diag(m) - 1.0)) > VALIDATION_TOL:
        raise DataValidationError("diagonal entries must equal 1", subject_id)
    if np.max(np.abs(m)) > 1.0 + VALIDATION_TOL:
        raise DataValidationError("entries must lie in [-1, 1]", subject_id)


# ------------------------------------------------------------------ dataset


@dataclass(frozen=True)
class Subject:
    id: str
    site: str
    label: int | None
    matrix: np.ndarray
    ood: bool = False


class Dataset:
    """Immutable collection of subjects sharing a parcel count ``k``.

    ``X`` holds the canonical upper-triangle edge vectors, one row per subject.
    """

    def __init__(
        self,
        subjects: list[Subject],
        planted: dict[str, list[int]] | None = None,
        parcel_map: list[str] | None = None,
    ):
        if not subjects:
            raise DataValidationError("dataset has no subjects")
        k = subjects[0].matrix.shape[0]
        seen = set()
        for s in subjects:
            if s.matrix.shape != (k, k):
                raise DataValidationError(
                    f"parcel count {s.matrix.shape[0]} differs from k={k}", s.id
                )
            if s.id in seen:
                raise DataValidationError("duplicate subject id", s.id)
            seen.add(s.id)
            validate_matrix(s.matrix, s.id)
        self.subjects = tuple(subjects)
        self.k = k
        self.planted = planted
        self.parcel_map = parcel_map
        self.ids = tuple(s.id for s in subjects)
        self._pos = {sid: i for i, sid in enumerate(self.ids)}
        X = flatten_upper(np.stack([s.matrix for s in subjects]))
        X.setflags(write=False)
        self.X = X
        labels = np.array([-1 if s.label is None else s.label for s in subjects])
        labels.setflags(write=False)
        self.labels = labels
        self.ood = np.array([s.ood for s in subjects])

    @property
    def n_edges(self) -> int:
        return n_edges(self.k)

    def __len__(self) -> int:
        return len(self.subjects)

    def rows(self, ids) -> np.ndarray:
        return np.array([self._pos[i] for i in ids], dtype=int)

    def edges(self, ids) -> np.ndarray:
        return self.X[self.rows(ids)]

    def labels_of(self, ids) -> np.ndarray:
        y = self.labels[self.rows(ids)]
        if np.any(y < 0):
            raise DataValidationError("requested labels for unlabeled subjects")
        return y

    def id_subjects(self) -> list[Subject]:
        return [s for s in self.subjects if not s.ood]

    def ood_subjects(self) -> list[Subject]:
        return [s for s in self.subjects if s.ood]


def load_dataset(path) -> Dataset:
    """Load a dataset from a manifest file or a directory containing manifest.json."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    root = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DataValidationError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as err:
        raise DataValidationError(f"manifest is not valid JSON: {err}") from None
    for key in ("k", "subjects"):
        if key not in manifest:
            raise DataValidationError(f"manifest lacks field {key!r}")
    k = int(manifest["k"])
    subjects = []
    for entry in manifest["subjects"]:
        sid = str(entry["id"])
        hint = entry.get("split_hint", "id")
        if hint not in ("id", "ood"):
            raise DataValidationError(f"split_hint must be 'id' or 'ood', got {hint!r}", sid)
        label = entry.get("label")
        if label is not None and label not in (0, 1):
            raise DataValidationError(f"label must be 0, 1 or null, got {label!r}", sid)
        m = read_matrix(root / entry["path"], sid)
        if m.shape != (k, k):
            raise DataValidationError(f"matrix is {m.shape[0]}x{m.shape[1]}, manifest says k={k}", sid)
        validate_matrix(m, sid)
        subjects.append(Subject(sid, str(entry["site"]), label, m, hint == "ood"))
    planted = None
    if (root / "planted.json").exists():
        planted = json.loads((root / "planted.json").read_text())
    parcel_map = None
    if (root / "parcels.csv").exists():
        parcel_map = read_parcel_map(root / "parcels.csv", k)
    return Dataset(subjects, planted=planted, parcel_map=parcel_map)


def read_matrix(path, subject_id: str | None = None) -> np.ndarray:
    try:
        rows = [line for line in Path(path).read_text().splitlines() if line.strip()]
        m = np.array([[float(v) for v in line.split(",")] for line in rows], dtype=np.float64)
    except FileNotFoundError:
        raise DataValidationError(f"matrix file not found: {path}", subject_id) from None
    except ValueError as err:
        raise DataValidationError(f"unparseable matrix file {path}: {err}", subject_id) from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataValidationError(f"matrix file {path} is not square", subject_id)
    return m


def write_matrix(path, m: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "matrices").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset.subjects:
        rel = f"matrices/{s.id}.csv"
        write_matrix(out / rel, s.matrix)
        entries.append(
            {"id": s.id, "site": s.site, "label": s.label, "path": rel,
             "split_hint": "ood" if s.ood else "id"}
        )
    manifest = {"k": dataset.k, "subjects": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    if dataset.planted is not None:
        (out / "planted.json").write_text(json.dumps(dataset.planted) + "\n")
    if dataset.parcel_map is not None:
        write_parcel_map(out / "parcels.csv", dataset.parcel_map)
    return out


# --------------------------------------------------------- parcel -> network


def read_parcel_map(path, k: int | None = None) -> list[str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["parcel", "network"]:
            raise DataValidationError(f"{path}: header must be 'parcel,network'")
        mapping: dict[int, str] = {}
        for row in reader:
            p = int(row["parcel"])
            if p in mapping:
                raise DataValidationError(f"{path}: parcel {p} mapped twice")
            mapping[p] = row["network"].strip()
    n = k if k is not None else len(mapping)
    missing = [p for p in range(n) if p not in mapping]
    if missing:
        raise DataValidationError(f"{path}: parcels {missing[:5]} are not mapped")
    extra = [p for p in mapping if not 0 <= p < n]
    if extra:
        raise DataValidationError(f"{path}: parcels {extra[:5]} are out of range for k={n}")
    return [mapping[p] for p in range(n)]


def write_parcel_map(path, networks: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parcel", "network"])
        for p, name in enumerate(networks):
            w.writerow([p, name])


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SiteSpec:
    name: str
    n_subjects: int
    ood: bool = False
    class_balance: float | None = None  # overrides SyntheticConfig.class_balance


@dataclass(frozen=True)
class SyntheticConfig:
    k: int = 16
    sites: tuple[SiteSpec, ...] = (
        SiteSpec("id0", 100), SiteSpec("id1", 100), SiteSpec("id2", 100), SiteSpec("id3", 100),
        SiteSpec("ood0", 50, ood=True), SiteSpec("ood1", 50, ood=True),
    )
    class_balance: float = 0.5
    n_informative: int = 10
    delta: float = 0.5
    n_nuisance: int = 40
    site_bias: float = 0.4
    noise: float = 0.15
    n_networks: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.sites:
            raise ValueError("at least one site is required")
        if self.n_informative < 0 or self.n_nuisance < 0:
            raise ValueError("edge counts must be non-negative")
        if self.n_informative + self.n_nuisance > n_edges(self.k):
            raise ValueError(
                f"{self.n_informative} informative + {self.n_nuisance} nuisance edges exceed "
                f"k(k-1)/2 = {n_edges(self.k)}"
            )
        if self.noise < 0 or self.delta < 0 or self.site_bias < 0:
            raise ValueError("noise, delta and site_bias must be non-negative")
        if self.n_networks < 1:
            raise ValueError("n_networks must be positive")
        names = [s.name for s in self.sites]
        if len(set(names)) != len(names):
            raise ValueError("site names must be unique")
        for s in self.sites:
            bal = self.class_balance if s.class_balance is None else s.class_balance
            if not 0.0 <= bal <= 1.0:
                raise ValueError(f"class balance {bal} outside [0, 1]")
            if s.n_subjects < 1:
                raise ValueError(f"site {s.name} needs at least one subject")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        if "sites" in d:
            d["sites"] = tuple(SiteSpec(**s) for s in d["sites"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sites"] = [asdict(s) for s in self.sites]
        return d


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Site-shifted synthetic connectomes with planted informative edges.

    Each subject's upper triangle starts as i.i.d. Normal(0, noise). Informative
    edges get +delta/2 (class 1) or -delta/2 (class 0). Subjects from OOD sites
    get +/-site_bias on the nuisance edges, the sign fixed per (site, edge).
    Entries are clipped to [-1, 1], mirrored, and the diagonal set to 1. The
    result is not forced to be positive semi-definite.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    E = n_edges(cfg.k)
    perm = rng.permutation(E)
    informative = np.sort(perm[: cfg.n_informative])
    nuisance = np.sort(perm[cfg.n_informative: cfg.n_informative + cfg.n_nuisance])
    subjects = []
    for site in cfg.sites:
        site_sign = rng.choice([-1.0, 1.0], size=len(nuisance))
        bal = cfg.class_balance if site.class_balance is None else site.class_balance
        n1 = int(round(site.n_subjects * bal))
        labels = rng.permutation(np.r_[np.ones(n1, int), np.zeros(site.n_subjects - n1, int)])
        noise = rng.normal(0.0, cfg.noise, size=(site.n_subjects, E))
        for idx, (y, v) in enumerate(zip(labels, noise)):
            v = v.copy()
            v[informative] += cfg.delta / 2 if y == 1 else -cfg.delta / 2
            if site.ood:
                v[nuisance] += cfg.site_bias * site_sign
            np.clip(v, -1.0, 1.0, out=v)
            m = unflatten_upper(v, cfg.k)
            np.fill_diagonal(m, 1.0)
            subjects.append(Subject(f"{site.name}_{idx:04d}", site.name, int(y), m, site.ood))
    networks = [f"net{p * cfg.n_networks // cfg.k}" for p in range(cfg.k)]
    planted = {"informative": informative.tolist(), "nuisance": nuisance.tolist()}
    return Dataset(subjects, planted=planted, parcel_map=networks)


# -------------------------------------------------------------------- folds


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    test_id: tuple[str, ...]
    train_unlabeled: tuple[str, ...]
    test_ood: tuple[str, ...]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


N_FOLDS = 5


def _stratified_chunks(ids: list[str], labels: list[int], n: int, rng) -> list[list[str]]:
    chunks: list[list[str]] = [[] for _ in range(n)]
    offset = 0
    for cls in sorted(set(labels)):
        members = [i for i, y in zip(ids, labels) if y == cls]
        members = [members[j] for j in rng.permutation(len(members))]
        for j, sid in enumerate(members):
            chunks[(offset + j) % n].append(sid)
        offset += len(members)
    return chunks


def make_folds(dataset: Dataset, seed: int = 0, test_fraction: float = 0.2) -> list[FoldSplit]:
    """Five stratified folds.

    A stratified ``test_fraction`` of the labeled ID subjects is held out as
    the ID test set, shared by all folds. The remaining ID pool is split into
    five stratified chunks; fold f validates on chunk f and trains on the
    other four (80/20). OOD subjects are split into five chunks; fold f uses
    chunk f (20%) as unlabeled training data and tests on the rest (80%).
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    id_subj = [s for s in dataset.id_subjects() if s.label is not None]
    ood_subj = dataset.ood_subjects()
    for cls in (0, 1):
        count = sum(s.label == cls for s in id_subj)
        if count < N_FOLDS:
            raise DataValidationError(
                f"need at least {N_FOLDS} labeled ID subjects of class {cls}, found {count}"
            )
    if len(ood_subj) < N_FOLDS:
        raise DataValidationError(f"need at least {N_FOLDS} OOD subjects, found {len(ood_subj)}")

    ids = [s.id for s in id_subj]
    labels = [s.label for s in id_subj]
    test_set: set[str] = set()
    if test_fraction > 0:
        for cls in (0, 1):
            members = [i for i, y in zip(ids, labels) if y == cls]
            n_test = int(round(test_fraction * len(members)))
            test_set.update(members[j] for j in rng.permutation(len(members))[:n_test])
    pool = [(i, y) for i, y in zip(ids, labels) if i not in test_set]
    chunks = _stratified_chunks([i for i, _ in pool], [y for _, y in pool], N_FOLDS, rng)
    ood_ids = [s.id for s in ood_subj]
    ood_ids = [ood_ids[j] for j in rng.permutation(len(ood_ids))]
    ood_chunks = [ood_ids[f::N_FOLDS] for f in range(N_FOLDS)]
    test_id = tuple(i for i in ids if i in test_set)

    folds = []
    for f in range(N_FOLDS):
        train = tuple(sid for g in range(N_FOLDS) if g != f for sid in chunks[g])
        folds.append(
            FoldSplit(
                fold=f,
                train=train,
                val=tuple(chunks[f]),
                test_id=test_id,
                train_unlabeled=tuple(ood_chunks[f]),
                test_ood=tuple(sid for g in range(N_FOLDS) if g != f for sid in ood_chunks[g]),
            )
        )
    return folds


def write_fold(path, fold: FoldSplit) -> None:
    Path(path).write_text(json.dumps(fold.to_dict(), indent=1) + "\n")

