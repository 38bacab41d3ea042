"""Dataset containers, text-format ingestion, and synthetic generators."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp

from .errors import DataError, InvalidParameterError, LibsvmParseError


@dataclass
class GroupedDataset:
    """Feature matrix with +-1 labels and a partition into groups."""

    features: np.ndarray
    labels: np.ndarray
    group_of: np.ndarray
    n_groups: int
    group_index: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        self.group_of = np.asarray(self.group_of, dtype=int)
        if not self.group_index:
            self.group_index = [np.flatnonzero(self.group_of == g) for g in range(self.n_groups)]
        if any(len(rows) == 0 for rows in self.group_index):
            raise DataError("grouped dataset contains an empty group")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise DataError("labels must be +-1")

    @property
    def n_samples(self):
        return len(self.labels)


@dataclass
class PaucDataset:
    """Positive and negative feature matrices plus the TPR lower bound."""

    positives: np.ndarray
    negatives: np.ndarray
    alpha: float

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=float)
        self.negatives = np.asarray(self.negatives, dtype=float)
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if len(self.positives) * (1.0 - self.alpha) < 1.0:
            raise InvalidParameterError("n_pos * (1 - alpha) must be at least 1")


def _lines(stream):
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def parse_libsvm(stream):
    """Parse sparse 'label idx:val ...' text (1-based, strictly increasing
    indices per line).  Returns (csr_matrix, labels); the width is the
    largest index seen.  Blank lines are skipped; malformed input raises
    with the offending line number."""
    labels = []
    data, indices, indptr = [], [], [0]
    max_index = 0
    for line_no, raw in enumerate(_lines(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise LibsvmParseError(line_no, f"non-numeric label {tokens[0]!r}")
        prev = 0
        for tok in tokens[1:]:
            try:
                idx_str, val_str = tok.split(":", 1)
                idx = int(idx_str)
                val = float(val_str)
            except ValueError:
                raise LibsvmParseError(line_no, f"malformed token {tok!r}")
            if idx < 1:
                raise LibsvmParseError(line_no, f"index {idx} must be >= 1")
            if idx <= prev:
                raise LibsvmParseError(line_no, f"indices not strictly increasing at {idx}")
            prev = idx
            indices.append(idx - 1)
            data.append(val)
            max_index = max(max_index, idx)
        indptr.append(len(indices))
    mat = sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=int), np.asarray(indptr, dtype=int)),
        shape=(len(labels), max_index),
    )
    return mat, np.asarray(labels)


def dump_libsvm(features, labels, stream):
    """Serialize rows in the same sparse text format (17-digit floats)."""
    mat = sp.csr_matrix(features)
    for i, label in enumerate(labels):
        row = mat.getrow(i)
        parts = [f"{label:.17g}"]
        parts += [f"{j + 1}:{v:.17g}" for j, v in zip(row.indices, row.data)]
        stream.write(" ".join(parts) + "\n")


def load_libsvm(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh)


def load_grouped_csv(stream, group_column, label_column="label", min_group_size=1):
    """Read a header-bearing CSV into a GroupedDataset.

    The group column is categorical (first-appearance order); the label
    column must be +-1 or {0, 1} (remapped to -1/+1); every other column is
    a float feature.  Groups smaller than `min_group_size` are discarded;
    singleton groups that survive trigger a warning."""
    reader = csv.DictReader(_lines(stream))
    if reader.fieldnames is None:
        raise DataError("empty CSV: no header row")
    for col in (group_column, label_column):
        if col not in reader.fieldnames:
            raise DataError(f"missing column {col!r}")
    feature_cols = [c for c in reader.fieldnames if c not in (group_column, label_column)]
    if not feature_cols:
        raise DataError("no feature columns")

    rows, labels, group_names = [], [], []
    name_to_id = {}
    group_of = []
    for row in reader:
        try:
            rows.append([float(row[c]) for c in feature_cols])
        except ValueError as exc:
            raise DataError(f"non-numeric feature value: {exc}")
        labels.append(float(row[label_column]))
        name = row[group_column]
        if name not in name_to_id:
            name_to_id[name] = len(group_names)
            group_names.append(name)
        group_of.append(name_to_id[name])

    labels = np.asarray(labels)
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
    elif not set(np.unique(labels)) <= {-1.0, 1.0}:
        raise DataError("labels must be +-1 or {0, 1}")

    features = np.asarray(rows, dtype=float)
    group_of = np.asarray(group_of)
    keep = [g for g in range(len(group_names))
            if np.count_nonzero(group_of == g) >= min_group_size]
    if not keep:
        raise DataError("no group meets the minimum size")
    if len(keep) < len(group_names):
        mask = np.isin(group_of, keep)
        features, labels, group_of = features[mask], labels[mask], group_of[mask]
        remap = {g: i for i, g in enumerate(keep)}
        group_of = np.asarray([remap[g] for g in group_of])
        group_names = [group_names[g] for g in keep]
    for g, name in enumerate(group_names):
        if np.count_nonzero(group_of == g) == 1:
            warnings.warn(f"group {name!r} has a single sample", stacklevel=2)
    return GroupedDataset(features=features, labels=labels, group_of=group_of,
                          n_groups=len(group_names))


def build_synthetic_gdro(n_groups, d, samples_per_group, heterogeneity, rng,
                         flip_prob=0.02, margin_scale=3.0):
    """Per-group Gaussian feature clusters labeled by group-specific
    hyperplanes whose spread from a common direction scales with
    `heterogeneity` (0 = one shared hyperplane and identical clusters)."""
    if n_groups < 1 or d < 1 or samples_per_group < 1:
        raise InvalidParameterError("n_groups, d, samples_per_group must be positive")
    base_w = rng.standard_normal(d)
    base_w /= np.linalg.norm(base_w)
    feats, labels, group_of = [], [], []
    for g in range(n_groups):
        w_g = base_w + heterogeneity * rng.standard_normal(d)
        w_g /= np.linalg.norm(w_g)
        center = heterogeneity * rng.standard_normal(d)
        x = center + rng.standard_normal((samples_per_group, d))
        prob = 0.5 * (1.0 + np.tanh(0.5 * margin_scale * (x @ w_g)))
        y = np.where(rng.random(samples_per_group) < prob, 1.0, -1.0)
        flips = rng.random(samples_per_group) < flip_prob
        y[flips] = -y[flips]
        feats.append(x)
        labels.append(y)
        group_of.append(np.full(samples_per_group, g))
    return GroupedDataset(
        features=np.vstack(feats), labels=np.concatenate(labels),
        group_of=np.concatenate(group_of), n_groups=n_groups,
    )


def build_synthetic_pauc(n_pos, n_neg, d, separation, alpha, rng):
    """Gaussian positives shifted from negatives by `separation` along a
    random direction."""
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    pos = separation * direction + rng.standard_normal((n_pos, d))
    neg = rng.standard_normal((n_neg, d))
    return PaucDataset(positives=pos, negatives=neg, alpha=alpha)


def grouped_to_csv(data, stream, group_names=None):
    """Inverse of load_grouped_csv for synthetic emission."""
    d = data.features.shape[1]
    writer = csv.writer(stream)
    writer.writerow([f"f{j}" for j in range(d)] + ["label", "group"])
    for i in range(data.n_samples):
        name = data.group_of[i] if group_names is None else group_names[data.group_of[i]]
        writer.writerow([f"{v:.17g}" for v in data.features[i]]
                        + [f"{data.labels[i]:.0f}", f"g{name}"])
