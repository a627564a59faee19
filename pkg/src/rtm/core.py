"""Marginalized dropout moments, the closed-form RTM solve, and prediction.

Weights are stored C x k and applied as ``W @ Z``. With dropout rate p the
expected moments over all corruptions are

    P = (1 - p) * Y Z^T
    Q = (1 - p)^2 * Z Z^T, with the diagonal replaced by (1 - p) * diag(Z Z^T)

and the model is ``W = P (Q + alpha I)^-1``. Alpha is added to the
unnormalized scatter, so its effective strength grows with 1/n.
"""

from __future__ import annotations

import datetime as _dt
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .dataset import FeatureMatrix, LabelSet, _frozen
from .errors import DimensionError, FormatError, MissingFileError, NumericError, ValidationError

MODEL_HEADER = "rtm-model v1"


@dataclass(frozen=True)
class RtmConfig:
    p: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.p < 1.0):
            raise ValidationError(f"dropout probability p must be in [0, 1), got {self.p}")
        if not (self.alpha > 0.0) or not np.isfinite(self.alpha):
            raise ValidationError(f"alpha must be a positive finite number, got {self.alpha}")


@dataclass(frozen=True)
class MomentPair:
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        if Q.shape[0] != Q.shape[1] or P.shape[1] != Q.shape[0]:
            raise DimensionError(f"P {P.shape} and Q {Q.shape} are not C x k and k x k")
        _check_symmetric(Q)
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "Q", _frozen(Q))


@dataclass(frozen=True)
class Provenance:
    task: str = ""
    n: int = 0
    k: int = 0
    C: int = 0
    method: str = "marginalized"
    rng: str | None = None
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        compare=False,
    )


@dataclass(frozen=True)
class LinearModel:
    W: np.ndarray
    config: RtmConfig
    trained_on: Provenance = field(default_factory=Provenance, compare=False)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        if not np.all(np.isfinite(W)):
            raise NumericError("model weights contain non-finite values")
        object.__setattr__(self, "W", _frozen(W))

    @property
    def C(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]


def _features(Z) -> np.ndarray:
    if isinstance(Z, FeatureMatrix):
        return Z.values
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DimensionError(f"features must be a k x n matrix, got shape {Z.shape}")
    return Z


def _labels(Y) -> np.ndarray:
    """One-hot C x n matrix from a LabelSet or an explicit matrix."""
    if isinstance(Y, LabelSet):
        return Y.one_hot
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise DimensionError(f"label matrix must be C x n, got shape {Y.shape}")
    return Y


def _check_p(p: float):
    if not (0.0 <= p < 1.0):
        raise ValidationError(f"dropout probability p must be in [0, 1), got {p}")


def _check_symmetric(Q: np.ndarray, rtol: float = 1e-12):
    scale = np.max(np.abs(Q)) if Q.size else 0.0
    if np.max(np.abs(Q - Q.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise ValidationError("second-moment matrix is not symmetric")


def scatter(Z) -> np.ndarray:
    """Z Z^T, forced exactly symmetric."""
    Z = _features(Z)
    S = Z @ Z.T
    return 0.5 * (S + S.T)


def cross_moment(Z, Y, p: float) -> np.ndarray:
    Z, Y = _features(Z), _labels(Y)
    _check_p(p)
    if Z.shape[1] != Y.shape[1]:
        raise DimensionError(f"{Z.shape[1]} samples but {Y.shape[1]} labels")
    return (1.0 - p) * (Y @ Z.T)


def second_moment(Z, p: float) -> np.ndarray:
    Z = _features(Z)
    _check_p(p)
    S = scatter(Z)
    Q = (1.0 - p) ** 2 * S
    np.fill_diagonal(Q, (1.0 - p) * np.diag(S))
    return Q


def moments(Z, Y, p: float) -> MomentPair:
    return MomentPair(cross_moment(Z, Y, p), second_moment(Z, p))


def solve_weights(P, Q, alpha: float) -> np.ndarray:
    """Solve ``W (Q + alpha I) = P`` by Cholesky.

    Raises NumericError naming the first leading minor that is not positive.
    """
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    k = Q.shape[0]
    if Q.shape != (k, k) or P.shape[1] != k:
        raise DimensionError(f"P {P.shape} incompatible with Q {Q.shape}")
    if not np.any(P):
        return np.zeros_like(P)
    A = Q + alpha * np.eye(k)
    c, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NumericError(f"Q + alpha*I is not positive definite: leading minor {info} fails")
    if info < 0:
        raise NumericError(f"Cholesky factorization rejected argument {-info}")
    # A symmetric, so W A = P  <=>  A W^T = P^T
    Wt, info = lapack.dpotrs(c, P.T, lower=1)
    if info != 0:
        raise NumericError(f"Cholesky back-substitution failed (info={info})")
    return np.ascontiguousarray(Wt.T)


def _provenance(Z, Y, task, method="marginalized", rng=None) -> Provenance:
    return Provenance(task=task, n=Z.shape[1], k=Z.shape[0], C=Y.shape[0], method=method, rng=rng)


def train_rtm(Z, Y, config: RtmConfig, task: str = "") -> LinearModel:
    Zv, Yv = _features(Z), _labels(Y)
    P = cross_moment(Zv, Yv, config.p)
    Q = second_moment(Zv, config.p)
    W = solve_weights(P, Q, config.alpha)
    return LinearModel(W, config, _provenance(Zv, Yv, task))


def train_ridge(Z, Y, alpha: float, task: str = "") -> LinearModel:
    """Uncorrupted ridge baseline ``(Y Z^T)(Z Z^T + alpha I)^-1``."""
    Zv, Yv = _features(Z), _labels(Y)
    if Zv.shape[1] != Yv.shape[1]:
        raise DimensionError(f"{Zv.shape[1]} samples but {Yv.shape[1]} labels")
    W = solve_weights(Yv @ Zv.T, scatter(Zv), alpha)
    return LinearModel(W, RtmConfig(0.0, alpha), _provenance(Zv, Yv, task, method="ridge"))


def predict(model, Z):
    """Return ``(class_ids, scores)`` with scores = W Z; ties go to the lowest class."""
    W = model.W if isinstance(model, LinearModel) else np.atleast_2d(np.asarray(model, float))
    Zv = _features(Z)
    if Zv.shape[0] != W.shape[1]:
        raise DimensionError(f"model expects {W.shape[1]} features, got {Zv.shape[0]}")
    scores = W @ Zv
    return np.argmax(scores, axis=0).astype(np.int64), scores


def _atomic_write_text(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_model(model: LinearModel) -> str:
    lines = [
        MODEL_HEADER,
        f"{model.C} {model.k} {model.config.p:.17g} {model.config.alpha:.17g}",
    ]
    lines += [",".join(format(v, ".17g") for v in row) for row in model.W]
    return "\n".join(lines) + "\n"


def save_model(model: LinearModel, path):
    _atomic_write_text(path, format_model(model))


def load_model(path) -> LinearModel:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"no such model file: {p}")
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise FormatError(f"{p}: missing '{MODEL_HEADER}' header")
    try:
        C, k, mp, alpha = lines[1].split()
        C, k, mp, alpha = int(C), int(k), float(mp), float(alpha)
    except (IndexError, ValueError):
        raise FormatError(f"{p}: line 2 must be 'C k p alpha'") from None
    rows = lines[2:]
    if len(rows) != C:
        raise FormatError(f"{p}: expected {C} weight rows, found {len(rows)}")
    W = np.empty((C, k))
    for i, row in enumerate(rows):
        cells = row.split(",")
        if len(cells) != k:
            raise FormatError(f"{p}: weight row {i + 1} has {len(cells)} values, expected {k}")
        try:
            W[i] = [float(c) for c in cells]
        except ValueError:
            raise FormatError(f"{p}: weight row {i + 1} is not numeric") from None
    return LinearModel(W, RtmConfig(mp, alpha), Provenance(task=str(p), k=k, C=C, method="loaded"))
