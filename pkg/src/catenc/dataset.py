"""Data model, CSV ingestion, category indexing, group statistics and fold planning."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

MISSING_TOKENS = ("", "NA")


class DataWarning(UserWarning):
    """Non-fatal data issues: dropped rows, unseen categories, degenerate fits."""


class IngestError(ValueError):
    """CSV could not be turned into a usable dataset."""


@dataclass(frozen=True)
class CategoryIndex:
    """Bijection between raw category labels and dense ids 0..M-1.

    Ids are assigned in lexicographic label order so encodings are
    reproducible across runs and machines.
    """

    id_to_label: tuple[str, ...]
    label_to_id: dict[str, int] = field(repr=False)

    @classmethod
    def from_labels(cls, labels) -> "CategoryIndex":
        ordered = tuple(sorted(set(labels)))
        return cls(ordered, {lab: i for i, lab in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.id_to_label)


@dataclass(frozen=True)
class Dataset:
    """Continuous features x (n,p), dense category ids g (n,), outcome y (n,)."""

    x: np.ndarray
    g: np.ndarray
    y: np.ndarray
    m: int
    labels: CategoryIndex
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        g = np.ascontiguousarray(self.g, dtype=np.int64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"x must be a non-empty 2-d matrix, got shape {x.shape}")
        n = x.shape[0]
        if g.shape != (n,) or y.shape != (n,):
            raise ValueError("x, g and y must agree on the number of rows")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise ValueError("non-finite entries in x or y")
        if self.m != len(self.labels):
            raise ValueError("m must equal the number of indexed labels")
        present = np.bincount(g, minlength=self.m) if g.size else np.zeros(self.m)
        if g.min(initial=0) < 0 or g.max(initial=0) >= self.m or (present == 0).any():
            raise ValueError("g must cover every id in [0, m-1]")
        for arr in (x, g, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class FoldPlan:
    assignments: np.ndarray
    k_folds: int
    seed: int

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


@dataclass(frozen=True)
class GroupStats:
    """Per-category feature sums/means (p,M) plus counts and outcome means."""

    means: np.ndarray
    sums: np.ndarray
    counts: np.ndarray
    y_means: np.ndarray


def _parse_cell(cell: str) -> float | None:
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return None
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, categorical_column: str, target_column: str) -> Dataset:
    """Read an RFC-4180 CSV with a header row into a Dataset.

    All columns other than `categorical_column` and `target_column` become
    features. Rows with a missing or non-numeric cell in any used column are
    dropped; the drop count is reported through a DataWarning.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise IngestError(f"input file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header row required") from None
        for col in (categorical_column, target_column):
            if col not in header:
                raise IngestError(f"{path}: column {col!r} not in header {header}")
        cat_idx = header.index(categorical_column)
        tgt_idx = header.index(target_column)
        feat_idx = [i for i in range(len(header)) if i not in (cat_idx, tgt_idx)]
        if not feat_idx:
            raise IngestError(f"{path}: no feature columns besides {categorical_column!r} and {target_column!r}")

        rows, cats, ys = [], [], []
        n_dropped = 0
        for record in reader:
            if len(record) != len(header):
                n_dropped += 1
                continue
            label = record[cat_idx].strip()
            target = _parse_cell(record[tgt_idx])
            feats = [_parse_cell(record[i]) for i in feat_idx]
            if label in MISSING_TOKENS or target is None or any(v is None for v in feats):
                n_dropped += 1
                continue
            rows.append(feats)
            cats.append(label)
            ys.append(target)

    if n_dropped:
        warnings.warn(f"{path}: dropped {n_dropped} row(s) with missing or non-numeric cells", DataWarning)
    if not rows:
        raise IngestError(f"{path}: no usable rows after dropping incomplete ones")

    labels = CategoryIndex.from_labels(cats)
    g = np.array([labels.label_to_id[c] for c in cats], dtype=np.int64)
    return Dataset(
        x=np.asarray(rows, dtype=np.float64),
        g=g,
        y=np.asarray(ys, dtype=np.float64),
        m=len(labels),
        labels=labels,
        feature_names=tuple(header[i] for i in feat_idx),
    )


def stratified_kfold(ds: Dataset, k_folds: int, seed: int) -> FoldPlan:
    """Assign rows to folds, shuffling within each category then round-robin.

    The round-robin cursor carries over from one category to the next so the
    overall fold sizes stay balanced, not just the per-category ones.
    """
    if k_folds < 2:
        raise ValueError(f"k_folds must be >= 2, got {k_folds}")
    if k_folds > ds.n:
        raise ValueError(f"k_folds={k_folds} exceeds the number of rows ({ds.n})")
    rng = np.random.default_rng(seed)
    assignments = np.empty(ds.n, dtype=np.int64)
    cursor = 0
    for cat in range(ds.m):
        rows = np.flatnonzero(ds.g == cat)
        rows = rows[rng.permutation(rows.size)]
        for r in rows:
            assignments[r] = cursor % k_folds
            cursor += 1
    return FoldPlan(assignments=assignments, k_folds=k_folds, seed=seed)


def group_stats(ds: Dataset) -> GroupStats:
    """Per-category sums/means of x (columns of a p-by-M matrix) and means of y."""
    sums = np.zeros((ds.p, ds.m))
    counts = np.zeros(ds.m, dtype=np.int64)
    y_sums = np.zeros(ds.m)
    for cat in range(ds.m):
        rows = np.flatnonzero(ds.g == cat)
        counts[cat] = rows.size
        sums[:, cat] = ds.x[rows].sum(axis=0)
        y_sums[cat] = ds.y[rows].sum()
    means = sums / counts
    return GroupStats(means=means, sums=sums, counts=counts, y_means=y_sums / counts)


def subset(ds: Dataset, rows) -> Dataset:
    """Dataset restricted to `rows`, with categories re-indexed over the labels present."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot build an empty dataset")
    kept = [ds.labels.id_to_label[i] for i in ds.g[rows]]
    labels = CategoryIndex.from_labels(kept)
    g = np.array([labels.label_to_id[c] for c in kept], dtype=np.int64)
    return Dataset(
        x=ds.x[rows],
        g=g,
        y=ds.y[rows],
        m=len(labels),
        labels=labels,
        feature_names=ds.feature_names,
    )
