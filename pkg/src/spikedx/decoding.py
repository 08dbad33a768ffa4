"""Population decoders mapping output spike counts to class predictions.

All argmax operations break ties towards the lowest index (neuron or class).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AllZeroResponse, EmptyResponses, LengthMismatch, NoAssignedNeurons

log = logging.getLogger(__name__)

DECODERS = ("wta", "population_vector", "class_average", "firing_average", "logistic")


@dataclass
class ResponseMatrix:
    counts: np.ndarray  # (n_stimuli, n_neurons) spike counts
    labels: np.ndarray  # (n_stimuli,)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.labels.shape[0]:
            raise LengthMismatch("one label per response row required")
        if self.counts.size and self.counts.min() < 0:
            raise ValueError("spike counts must be non-negative")

    @property
    def n_neurons(self) -> int:
        return self.counts.shape[1]

    def rows(self, idx) -> ResponseMatrix:
        idx = np.asarray(idx, dtype=int)
        return ResponseMatrix(self.counts[idx], self.labels[idx])


@dataclass
class AssignmentVector:
    Z: np.ndarray  # preferred class per neuron
    class_counts: np.ndarray  # neurons per class
    M: np.ndarray  # (n_neurons, n_classes) class-split spike sums

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def mode_collapse(self) -> bool:
        """Every neuron carries the same class."""
        return int(np.count_nonzero(self.class_counts)) <= 1

    def assignment_alpha(self, minority_class: int = 1) -> float:
        """Minority-assigned over majority-assigned neurons; 0 under collapse."""
        if self.mode_collapse:
            return 0.0
        return float(self.class_counts[minority_class] / self.class_counts[1 - minority_class])


def build_assignment(R: ResponseMatrix, num_classes: int = 2) -> AssignmentVector:
    if R.counts.shape[0] == 0:
        raise EmptyResponses("cannot assign classes without responses")
    num_classes = max(num_classes, int(R.labels.max()) + 1)
    M = np.zeros((R.n_neurons, num_classes), dtype=np.int64)
    for c in range(num_classes):
        M[:, c] = R.counts[R.labels == c].sum(axis=0)
    Z = np.argmax(M, axis=1)
    return AssignmentVector(Z, np.bincount(Z, minlength=num_classes), M)


def _as_z(Z) -> tuple[np.ndarray, int]:
    if isinstance(Z, AssignmentVector):
        return Z.Z, Z.num_classes
    Z = np.asarray(Z, dtype=int)
    return Z, int(Z.max(initial=0)) + 1


def _check(r, Z) -> np.ndarray:
    r = np.asarray(r)
    if r.shape != Z.shape:
        raise LengthMismatch(f"response length {r.shape} != assignment length {Z.shape}")
    return r


def decode_wta(r, Z) -> int:
    """Class of the single most active neuron."""
    Z, _ = _as_z(Z)
    r = _check(r, Z)
    if not np.any(r):
        raise AllZeroResponse("no output neuron spiked")
    return int(Z[int(np.argmax(r))])


def class_sums(r, Z, num_classes: int) -> np.ndarray:
    return np.bincount(Z, weights=np.asarray(r, dtype=float), minlength=num_classes)


def decode_population_vector(r, Z) -> int:
    """Class with the largest summed response over its assigned neurons."""
    Z, C = _as_z(Z)
    r = _check(r, Z)
    if not np.any(r):
        raise AllZeroResponse("no output neuron spiked")
    return int(np.argmax(class_sums(r, Z, C)))


def decode_class_average(r, Z) -> int:
    """Class with the highest mean response per assigned neuron.

    Classes without assigned neurons are left out of the argmax; if only one
    class is represented (mode collapse) that class is returned.
    """
    Z, C = _as_z(Z)
    r = _check(r, Z)
    if not np.any(r):
        raise AllZeroResponse("no output neuron spiked")
    n_c = np.bincount(Z, minlength=C)
    present = n_c > 0
    if not present.any():
        raise NoAssignedNeurons("no neuron carries a class")
    if present.sum() == 1:
        log.debug("class averaging under mode collapse; predicting the only assigned class")
    means = np.full(C, -np.inf)
    means[present] = class_sums(r, Z, C)[present] / n_c[present]
    return int(np.argmax(means))


@dataclass
class FiringAverage:
    F: np.ndarray


def compute_firing_average(R_train: ResponseMatrix) -> FiringAverage:
    if R_train.counts.shape[0] == 0:
        raise EmptyResponses("firing average needs at least one training response")
    return FiringAverage(R_train.counts.mean(axis=0))


def _argmax_tol(scores: np.ndarray, rel: float = 1e-9) -> int:
    """Lowest index whose score is within rounding noise of the maximum."""
    top = float(np.max(scores))
    return int(np.flatnonzero(scores >= top - rel * max(1.0, abs(top)))[0])


def decode_firing_average(r, Z, F) -> int:
    """Class maximising the summed deviation ``r_n - F_n`` of its neurons.

    A class with no assigned neurons scores 0 (empty sum), so scores of
    represented classes may fall below it.  Scores are float sums of
    fractional deviations, so near-equal scores count as a tie.
    """
    Z, C = _as_z(Z)
    r = _check(r, Z)
    F = np.asarray(getattr(F, "F", F), dtype=float)
    if F.shape != Z.shape:
        raise LengthMismatch("firing average length differs from assignment length")
    return _argmax_tol(class_sums(r - F, Z, C))


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float = 0.0
    eta: float = 0.05
    updates_seen: int = 0
    input_scale: float = 1.0  # responses are multiplied by this before use

    @classmethod
    def zeros(cls, n: int, eta: float = 0.05, input_scale: float = 1.0) -> LogisticModel:
        return cls(np.zeros(n), 0.0, eta, 0, input_scale)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def logistic_update(m: LogisticModel, r, y: int) -> LogisticModel:
    """One online cross-entropy gradient step (in place; returns ``m``)."""
    x = np.asarray(r, dtype=float) * m.input_scale
    err = y - _sigmoid(float(m.w @ x) + m.b)
    m.w = m.w + m.eta * err * x
    m.b = m.b + m.eta * err
    m.updates_seen += 1
    return m


def logistic_predict(m: LogisticModel, r) -> tuple[float, int]:
    x = np.asarray(r, dtype=float) * m.input_scale
    p = _sigmoid(float(m.w @ x) + m.b)
    return p, int(p >= 0.5)


def write_assignment(Z: AssignmentVector, F: FiringAverage | None, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["neuron_index", "assigned_class", "F_n"])
        for n, z in enumerate(Z.Z):
            w.writerow([n, int(z), "" if F is None else repr(float(F.F[n]))])


def read_assignment(path, num_classes: int = 2) -> tuple[np.ndarray, FiringAverage | None]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    Z = np.array([int(r["assigned_class"]) for r in rows], dtype=int)
    F = None
    if rows and all(r["F_n"] != "" for r in rows):
        F = FiringAverage(np.array([float(r["F_n"]) for r in rows]))
    return Z, F


def write_responses(R: ResponseMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"n{i}" for i in range(R.n_neurons)] + ["label"])
        for row, y in zip(R.counts, R.labels):
            w.writerow([*(int(v) for v in row), int(y)])


def read_responses(path) -> ResponseMatrix:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    return ResponseMatrix(data[:, :-1], data[:, -1])
