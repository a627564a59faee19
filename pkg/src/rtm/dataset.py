"""Feature/label containers and the dense and sparse text loaders.

Files store one sample per line. In memory a feature matrix is k x n:
features along rows, samples along columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, FormatError, MissingFileError, ParseError, ValidationError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"feature matrix needs k >= 1 and n >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            r, c = np.argwhere(~np.isfinite(v))[0]
            raise ValidationError(f"non-finite feature value at feature {r}, sample {c}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_rows(cls, rows) -> "FeatureMatrix":
        """Build from a samples-as-rows array (the on-disk orientation)."""
        return cls(np.asarray(rows, dtype=np.float64).T)


@dataclass(frozen=True)
class LabelSet:
    class_ids: np.ndarray
    n_classes: int
    label_map: Mapping[int, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        ids = np.asarray(self.class_ids)
        if ids.ndim != 1 or ids.size == 0:
            raise DimensionError("class ids must be a non-empty vector")
        if not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise ValidationError("class ids must be integers")
        ids = ids.astype(np.int64)
        if self.n_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.n_classes}")
        _check_range(ids, self.n_classes)
        object.__setattr__(self, "class_ids", _frozen(ids))

    @property
    def n(self) -> int:
        return self.class_ids.shape[0]

    @property
    def C(self) -> int:
        return self.n_classes

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot(self.class_ids, self.n_classes)

    @classmethod
    def from_ids(cls, ids, n_classes: int | None = None) -> "LabelSet":
        ids = np.asarray(ids, dtype=np.int64)
        if n_classes is None:
            n_classes = max(int(ids.max()) + 1, 2) if ids.size else 2
        return cls(ids, n_classes)


@dataclass(frozen=True)
class DomainPair:
    source: FeatureMatrix
    source_labels: LabelSet
    target: FeatureMatrix
    target_labels: LabelSet | None = None
    task_name: str = "task"

    def __post_init__(self):
        if self.source.k != self.target.k:
            raise DimensionError(
                f"source has {self.source.k} features but target has {self.target.k}"
            )
        if self.source_labels.n != self.source.n:
            raise DimensionError(
                f"{self.source_labels.n} source labels for {self.source.n} source samples"
            )
        if self.target_labels is not None and self.target_labels.n != self.target.n:
            raise DimensionError(
                f"{self.target_labels.n} target labels for {self.target.n} target samples"
            )


def _check_range(ids: np.ndarray, C: int):
    bad = np.flatnonzero((ids < 0) | (ids >= C))
    if bad.size:
        i = bad[0]
        raise ValidationError(f"class id {ids[i]} at position {i} is outside [0, {C - 1}]")


def one_hot(class_ids, C: int) -> np.ndarray:
    """C x n indicator matrix with a single 1 per column at row ``class_ids[i]``."""
    ids = np.asarray(class_ids, dtype=np.int64).ravel()
    _check_range(ids, C)
    out = np.zeros((C, ids.size))
    out[ids, np.arange(ids.size)] = 1.0
    return out


def _open_text(path) -> list[str]:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"no such file: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def _parse_float(cell: str, line_no: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"line {line_no}: cannot parse {cell.strip()!r} as a number") from None


def load_labels(path) -> np.ndarray:
    ids = []
    for line_no, line in enumerate(_open_text(path), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            ids.append(int(s, 10))
        except ValueError:
            raise ParseError(f"{path}: line {line_no}: {s!r} is not a base-10 integer") from None
    return np.asarray(ids, dtype=np.int64)


def load_dense(features_path, labels_path=None, n_classes: int | None = None):
    """Read a comma-separated sample-per-line file.

    Returns ``(FeatureMatrix, LabelSet | None)``. An optional first line
    starting with ``#`` is skipped. Blank lines are ignored.
    """
    lines = _open_text(features_path)
    rows = []
    width = None
    for line_no, line in enumerate(lines, start=1):
        if line_no == 1 and line.startswith("#"):
            continue
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise FormatError(
                f"{features_path}: row {line_no} has {len(cells)} values, expected {width}"
            )
        row = [_parse_float(c, line_no) for c in cells]
        bad = [j for j, v in enumerate(row) if not math.isfinite(v)]
        if bad:
            raise ValidationError(f"{features_path}: row {line_no} column {bad[0] + 1} is not finite")
        rows.append(row)
    if not rows:
        raise FormatError(f"{features_path}: no samples")
    Z = FeatureMatrix.from_rows(rows)

    if labels_path is None:
        return Z, None
    ids = load_labels(labels_path)
    if ids.size != Z.n:
        raise DimensionError(f"{ids.size} labels for {Z.n} samples")
    return Z, LabelSet.from_ids(ids, n_classes)


def load_sparse(path, n_features: int | None = None, label_map: Mapping[int, int] | None = None):
    """Read ``<label> <index>:<value> ...`` lines (1-based, strictly increasing indices).

    Labels are remapped to contiguous ids in first-occurrence order unless
    ``label_map`` is given, in which case it is extended with unseen labels.
    ``n_features`` pads k up to a common width (e.g. to match a paired file).
    """
    lines = _open_text(path)
    mapping: dict[int, int] = dict(label_map or {})
    raw_labels = []
    entries = []
    k = 0
    for line_no, line in enumerate(lines, start=1):
        s = line.split("#", 1)[0].split()
        if not s:
            continue
        try:
            lab = int(float(s[0]))
        except ValueError:
            raise ParseError(f"{path}: line {line_no}: bad label {s[0]!r}") from None
        idx, vals = [], []
        prev = 0
        for tok in s[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise FormatError(f"{path}: line {line_no}: expected index:value, got {tok!r}")
            try:
                i = int(key)
            except ValueError:
                raise ParseError(f"{path}: line {line_no}: bad index {key!r}") from None
            if i < 1:
                raise FormatError(f"{path}: line {line_no}: index {i} < 1")
            if i <= prev:
                raise FormatError(f"{path}: line {line_no}: indices not strictly increasing at {i}")
            v = _parse_float(val, line_no)
            if not math.isfinite(v):
                raise ValidationError(f"{path}: line {line_no}: non-finite value at index {i}")
            prev = i
            idx.append(i - 1)
            vals.append(v)
        k = max(k, prev)
        raw_labels.append(lab)
        entries.append((idx, vals))
    if not entries:
        raise FormatError(f"{path}: no samples")
    if n_features is not None:
        if n_features < k:
            raise DimensionError(f"{path}: index {k} exceeds requested width {n_features}")
        k = n_features
    if k < 1:
        raise FormatError(f"{path}: no feature indices")

    X = np.zeros((k, len(entries)))
    for col, (idx, vals) in enumerate(entries):
        X[idx, col] = vals
    for lab in raw_labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
    ids = np.array([mapping[lab] for lab in raw_labels], dtype=np.int64)
    labels = LabelSet(ids, max(len(mapping), 2), label_map=dict(mapping))
    return FeatureMatrix(X), labels


def write_dense(path, Z: FeatureMatrix):
    """Inverse of ``load_dense`` at 17 significant digits, so reloading is exact."""
    with open(path, "w", encoding="utf-8") as f:
        for col in Z.values.T:
            f.write(",".join(format(v, ".17g") for v in col) + "\n")


def write_labels(path, ids: Sequence[int]):
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(f"{int(i)}\n" for i in ids)


def standardize(source: FeatureMatrix, *others: FeatureMatrix, eps: float = 1e-12):
    """Z-score every feature with the source mean/std and apply it to all matrices.

    Constant source features are centred but left unscaled.
    """
    mu = source.values.mean(axis=1, keepdims=True)
    sd = source.values.std(axis=1, keepdims=True)
    sd = np.where(sd > eps, sd, 1.0)
    return tuple(FeatureMatrix((m.values - mu) / sd) for m in (source, *others))


def append_constant(Z: FeatureMatrix, value: float = 1.0) -> FeatureMatrix:
    return FeatureMatrix(np.vstack([Z.values, np.full((1, Z.n), value)]))
