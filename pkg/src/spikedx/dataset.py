"""Labelled tabular data: ingestion, feature filtering/ranking, rebalancing and folds."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    AllFeaturesRemoved,
    AlreadyAboveTarget,
    DatasetError,
    EmptyDataset,
    KTooLarge,
    LengthMismatch,
    MissingHeader,
    NonNumericFeature,
    NotBinary,
    TooFewSamplesPerClass,
    UnknownLabelValue,
)

log = logging.getLogger(__name__)

DEFAULT_VARIANCE_THRESHOLD = 0.002
DEFAULT_MI_BINS = 8


@dataclass
class OmicsDataset:
    sample_ids: list[str]
    features: np.ndarray
    feature_names: list[str]
    labels: np.ndarray
    num_classes: int = 2
    synthetic: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.feature_names = [str(s) for s in self.feature_names]
        n = len(self.sample_ids)
        if self.synthetic is None:
            self.synthetic = np.zeros(n, dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool)
        if self.features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        if not (self.features.shape[0] == len(self.labels) == n == len(self.synthetic)):
            raise LengthMismatch(
                f"row count mismatch: features {self.features.shape[0]}, "
                f"labels {len(self.labels)}, ids {n}"
            )
        if self.features.shape[1] != len(self.feature_names):
            raise LengthMismatch("feature column count differs from feature_names")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise UnknownLabelValue(f"labels must lie in 0..{self.num_classes - 1}")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("non-finite feature values")

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, rows) -> OmicsDataset:
        rows = np.asarray(rows, dtype=int)
        return OmicsDataset(
            [self.sample_ids[i] for i in rows],
            self.features[rows],
            list(self.feature_names),
            self.labels[rows],
            self.num_classes,
            self.synthetic[rows],
        )

    def select_features(self, cols) -> OmicsDataset:
        cols = np.asarray(cols, dtype=int)
        return replace(
            self,
            features=self.features[:, cols],
            feature_names=[self.feature_names[c] for c in cols],
        )

    def original(self) -> OmicsDataset:
        """Rows not produced by oversampling."""
        return self.subset(np.flatnonzero(~self.synthetic))


@dataclass(frozen=True)
class CsvSchema:
    id_column: str = "sample_id"
    label_column: str = "label"
    synthetic_column: str = "synthetic"
    num_classes: int = 2


def load_csv(path, schema: CsvSchema = CsvSchema()) -> OmicsDataset:
    """Read a dataset laid out as ``sample_id, <features...>, label[, synthetic]``.

    Rows holding ``nan``/``inf`` values are dropped with a warning; blank or
    unparsable cells raise :class:`NonNumericFeature` carrying the 1-based file
    line and 0-based column index.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != schema.id_column:
            raise MissingHeader(f"{path}: first row must be a header starting with {schema.id_column!r}")
        header = [h.strip() for h in header]
        has_synth = header[-1] == schema.synthetic_column
        label_col = len(header) - 2 if has_synth else len(header) - 1
        if label_col < 1 or header[label_col] != schema.label_column:
            raise MissingHeader(f"{path}: header must end with {schema.label_column!r}")
        feat_cols = list(range(1, label_col))
        ids, rows, labels, synth = [], [], [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise NonNumericFeature(line_no, min(len(rec), len(header) - 1), "", "<missing cell>")
            values = []
            for c in feat_cols:
                cell = rec[c].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise NonNumericFeature(line_no, c, header[c], cell) from None
            try:
                y = int(rec[label_col].strip())
            except ValueError:
                raise UnknownLabelValue(f"{path}: line {line_no}: label {rec[label_col]!r} is not an integer") from None
            if not 0 <= y < schema.num_classes:
                raise UnknownLabelValue(f"{path}: line {line_no}: label {y} outside 0..{schema.num_classes - 1}")
            if not all(math.isfinite(v) for v in values):
                log.warning("%s: dropping line %d with non-finite feature values", path, line_no)
                continue
            ids.append(rec[0].strip())
            rows.append(values)
            labels.append(y)
            synth.append(has_synth and rec[-1].strip() in ("1", "true", "True"))
    if not rows:
        raise EmptyDataset(f"{path}: no usable data rows")
    d = OmicsDataset(
        ids,
        np.array(rows, dtype=float).reshape(len(rows), len(feat_cols)),
        [header[c] for c in feat_cols],
        np.array(labels),
        schema.num_classes,
        np.array(synth, dtype=bool),
    )
    missing = np.flatnonzero(d.class_counts() == 0)
    if missing.size:
        raise EmptyDataset(f"{path}: no samples for class(es) {missing.tolist()}")
    return d


def write_csv(d: OmicsDataset, path, include_synthetic: bool | None = None) -> None:
    if include_synthetic is None:
        include_synthetic = bool(d.synthetic.any())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["sample_id", *d.feature_names, "label"]
        if include_synthetic:
            header.append("synthetic")
        w.writerow(header)
        for i in range(d.n_samples):
            row = [d.sample_ids[i], *(repr(float(v)) for v in d.features[i]), int(d.labels[i])]
            if include_synthetic:
                row.append(int(d.synthetic[i]))
            w.writerow(row)


def variance_filter(d: OmicsDataset, threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> OmicsDataset:
    """Keep the columns whose sample variance (ddof=1) is at least ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if threshold == 0:
        return d
    if d.n_samples < 2:
        var = np.zeros(d.n_features)
    else:
        var = d.features.var(axis=0, ddof=1)
    keep = np.flatnonzero(var >= threshold)
    if keep.size == 0:
        raise AllFeaturesRemoved(f"no feature has variance >= {threshold}")
    return d.select_features(keep)


def discretize(x, bins: int = DEFAULT_MI_BINS) -> np.ndarray:
    """Equal-frequency binning; tied values always share a bin."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.astype(int)
    r = rankdata(x, method="min") - 1
    return np.minimum((r * bins) // x.size, bins - 1).astype(int)


def mutual_information(x: Sequence[Hashable], y: Sequence[Hashable]) -> float:
    """Empirical mutual information in bits between two discrete sequences."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"lengths differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n == 0:
        raise LengthMismatch("mutual information needs at least one sample")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    xi = xi.ravel()
    yi = yi.ravel()
    joint = np.zeros((xi.max() + 1, yi.max() + 1), dtype=np.int64)
    np.add.at(joint, (xi, yi), 1)
    cx = joint.sum(axis=1)
    cy = joint.sum(axis=0)
    nz = np.nonzero(joint)
    c = joint[nz]
    # integer ratio so a factorizing table gives log2(1) == 0 exactly
    ratio = (c * n) / (cx[nz[0]] * cy[nz[1]])
    mi = float(np.sum(c / n * np.log2(ratio)))
    return max(mi, 0.0)


def mrmr_rank(d: OmicsDataset, k: int, bins: int = DEFAULT_MI_BINS) -> list[int]:
    """Greedy mRMR ordering (relevance minus mean redundancy, equal weight).

    Ties go to the lowest feature index, so ``mrmr_rank(d, 5)`` is always the
    first five entries of ``mrmr_rank(d, 10)``.
    """
    if d.n_samples == 0 or d.n_features == 0:
        raise EmptyDataset("mrmr_rank needs a non-empty dataset")
    if not 1 <= k <= d.n_features:
        raise KTooLarge(f"k={k} but only {d.n_features} features")
    disc = np.column_stack([discretize(d.features[:, j], bins) for j in range(d.n_features)])
    relevance = np.array([mutual_information(disc[:, j], d.labels) for j in range(d.n_features)])
    redundancy_sum = np.zeros(d.n_features)
    selected: list[int] = []
    remaining = np.ones(d.n_features, dtype=bool)
    for step in range(k):
        if step == 0:
            score = relevance.copy()
        else:
            score = relevance - redundancy_sum / step
        score[~remaining] = -np.inf
        best = int(np.argmax(score))
        selected.append(best)
        remaining[best] = False
        for j in np.flatnonzero(remaining):
            redundancy_sum[j] += mutual_information(disc[:, j], disc[:, best])
    return selected


@dataclass(frozen=True)
class ClassBalance:
    minority_count: int
    majority_count: int
    alpha: float
    minority_class: int = 1
    majority_class: int = 0


def alpha_ratio(d: OmicsDataset) -> ClassBalance:
    """Minority/majority ratio; on a tie class 0 is reported as minority."""
    if d.num_classes != 2:
        raise NotBinary(f"alpha ratio defined for binary labels, got {d.num_classes} classes")
    c0, c1 = (int(c) for c in d.class_counts())
    minority = 0 if c0 <= c1 else 1
    cm, cM = (c0, c1) if minority == 0 else (c1, c0)
    if cM == 0:
        raise EmptyDataset("no samples")
    return ClassBalance(cm, cM, cm / cM, minority, 1 - minority)


def smote_replicate(d: OmicsDataset, target_alpha: float, rng: np.random.Generator) -> OmicsDataset:
    """Oversample the minority class by duplication up to ``target_alpha``.

    Duplicates are appended after the original rows and flagged in
    ``synthetic``; original rows are untouched.
    """
    if not 0 < target_alpha <= 1:
        raise ValueError("target_alpha must lie in (0, 1]")
    bal = alpha_ratio(d)
    if bal.alpha > target_alpha + 1e-12:
        raise AlreadyAboveTarget(f"alpha {bal.alpha:.4f} already above target {target_alpha}")
    wanted = math.ceil(target_alpha * bal.majority_count - 1e-9)
    extra = wanted - bal.minority_count
    if extra <= 0:
        return d
    pool = np.flatnonzero(d.labels == bal.minority_class)
    if pool.size == 0:
        raise EmptyDataset("minority class has no samples to replicate")
    picks = pool[rng.integers(0, pool.size, size=extra)]
    ids = list(d.sample_ids) + [f"{d.sample_ids[p]}#dup{i}" for i, p in enumerate(picks)]
    return OmicsDataset(
        ids,
        np.vstack([d.features, d.features[picks]]),
        list(d.feature_names),
        np.concatenate([d.labels, d.labels[picks]]),
        d.num_classes,
        np.concatenate([d.synthetic, np.ones(extra, dtype=bool)]),
    )


@dataclass(frozen=True)
class FoldSplit:
    k: int
    fold_assignments: np.ndarray = field(repr=False)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignments != fold)


def stratified_kfold(d: OmicsDataset, k: int, rng: np.random.Generator) -> FoldSplit:
    """Deal each class's shuffled samples round-robin across folds.

    The dealing position carries over from one class to the next, which keeps
    overall fold sizes within one of each other.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    counts = d.class_counts()
    if np.any(counts < k):
        raise TooFewSamplesPerClass(f"class counts {counts.tolist()} but k={k}")
    folds = np.empty(d.n_samples, dtype=int)
    pos = 0
    for c in range(d.num_classes):
        idx = np.flatnonzero(d.labels == c)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (pos + np.arange(idx.size)) % k
        pos += idx.size
    return FoldSplit(k, folds)


def gen_synthetic(
    n_majority: int,
    n_minority: int,
    n_features: int,
    separation: float,
    rng: np.random.Generator,
    n_informative: int | None = None,
) -> OmicsDataset:
    """Class-conditional unit-variance Gaussians, label 0 = majority.

    The minority mean is shifted by ``separation`` on each of the first
    ``n_informative`` coordinates (all of them by default); the remaining
    columns are pure noise.
    """
    if min(n_majority, n_minority, n_features) <= 0:
        raise ValueError("counts must be positive")
    if separation < 0:
        raise ValueError("separation must be non-negative")
    if n_informative is None:
        n_informative = n_features
    labels = np.r_[np.zeros(n_majority, dtype=int), np.ones(n_minority, dtype=int)]
    shift = np.zeros(n_features)
    shift[:n_informative] = separation
    x = rng.standard_normal((labels.size, n_features)) + labels[:, None] * shift
    order = rng.permutation(labels.size)
    return OmicsDataset(
        [f"s{i:04d}" for i in range(labels.size)],
        x[order],
        [f"f{j:02d}" for j in range(n_features)],
        labels[order],
        2,
    )
