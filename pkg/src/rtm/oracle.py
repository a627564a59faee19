"""Ground-truth references for the marginalized closed form.

Two independent routes: explicit Monte-Carlo corruption (ridge on J
dropout-corrupted copies of the source data) and exact enumeration of
all 2^k dropout masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    LinearModel,
    MomentPair,
    Provenance,
    RtmConfig,
    _features,
    _labels,
    solve_weights,
)
from .dataset import FeatureMatrix
from .errors import CapacityError, DimensionError, ValidationError

MAX_ENUM_K = 20


@dataclass(frozen=True)
class CorruptionRun:
    J: int
    seed: int
    p: float

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 1:
            raise ValidationError(f"number of corrupted copies J must be >= 1, got {self.J}")
        if not (0.0 <= self.p < 1.0):
            raise ValidationError(f"dropout probability p must be in [0, 1), got {self.p}")
        if int(self.seed) != self.seed:
            raise ValidationError(f"seed must be an integer, got {self.seed}")


def corrupt_dropout(Z, p: float, seed: int, copy: int = 0, backend=None) -> FeatureMatrix:
    """Zero each entry independently with probability p.

    ``copy`` selects the independent stream, so copy j of a multi-copy run
    can be reproduced on its own.
    """
    if not (0.0 <= p < 1.0):
        raise ValidationError(f"dropout probability p must be in [0, 1), got {p}")
    Zv = _features(Z)
    k, n = Zv.shape
    keep = _kernels.keep_masks(seed, np.array([copy]), k, n, p, backend=backend)[0]
    return FeatureMatrix(np.where(keep, Zv, 0.0))


def accumulate_moments(Z, Y, p: float, seed: int, copies, backend=None):
    """Sum over the given copy indices of Y Z~^T and Z~ Z~^T (not averaged)."""
    Zv, Yv = _features(Z), _labels(Y)
    if Zv.shape[1] != Yv.shape[1]:
        raise DimensionError(f"{Zv.shape[1]} samples but {Yv.shape[1]} labels")
    return _kernels.accumulate(Zv, Yv, p, seed, copies, backend=backend)


def _solve_mc(P_sum, Q_sum, J, alpha):
    # 1/(nJ) loss normalization: the per-copy average moments meet the same
    # alpha as the marginalized solve, so both target the same W.
    return solve_weights(P_sum / J, Q_sum / J, alpha)


def train_mc(Z, Y, config: RtmConfig, run: CorruptionRun, task: str = "", backend=None) -> LinearModel:
    """Ridge on J explicitly corrupted copies with repeated labels.

    Moments are accumulated one copy at a time, so memory stays
    O(kC + k^2 + kn) regardless of J.
    """
    if run.p != config.p:
        raise ValidationError(f"corruption run p={run.p} does not match config p={config.p}")
    Zv, Yv = _features(Z), _labels(Y)
    P, Q = accumulate_moments(Zv, Yv, run.p, run.seed, np.arange(run.J), backend=backend)
    W = _solve_mc(P, Q, run.J, config.alpha)
    prov = Provenance(
        task=task, n=Zv.shape[1], k=Zv.shape[0], C=Yv.shape[0],
        method=f"monte-carlo J={run.J} seed={run.seed}", rng=_kernels.RNG_NAME,
    )
    return LinearModel(W, config, prov)


def mc_convergence(Z, Y, config: RtmConfig, J_list, seeds, reference=None, backend=None):
    """Mean relative Frobenius error of the MC weights against ``reference``.

    Copies are shared across checkpoints (the run for J=100 extends the run
    for J=10), which is exactly what ``train_mc`` would produce for each J.
    Returns a list of ``(J, mean_error, per_seed_errors)``.
    """
    from .core import train_rtm

    Zv, Yv = _features(Z), _labels(Y)
    J_list = sorted(int(J) for J in J_list)
    if not J_list or J_list[0] < 1:
        raise ValidationError("J list must contain positive integers")
    if reference is None:
        reference = train_rtm(Zv, Yv, config).W
    ref_norm = np.linalg.norm(reference)
    if ref_norm == 0:
        raise ValidationError("reference weights are zero; relative error undefined")

    errors = np.zeros((len(J_list), len(seeds)))
    for s, seed in enumerate(seeds):
        P = np.zeros((Yv.shape[0], Zv.shape[0]))
        Q = np.zeros((Zv.shape[0], Zv.shape[0]))
        done = 0
        for t, J in enumerate(J_list):
            if J > done:
                dP, dQ = _kernels.accumulate(Zv, Yv, config.p, seed, np.arange(done, J), backend=backend)
                P += dP
                Q += dQ
                done = J
            W = _solve_mc(P, Q, J, config.alpha)
            errors[t, s] = np.linalg.norm(W - reference) / ref_norm
    return [(J, float(errors[t].mean()), errors[t].tolist()) for t, J in enumerate(J_list)]


def mask_weights(k: int, p: float, backend=None) -> np.ndarray:
    """Probability of each of the 2^k keep masks; bit f set means feature f is kept."""
    if k > MAX_ENUM_K:
        raise CapacityError(f"cannot enumerate 2^{k} masks (limit k <= {MAX_ENUM_K})")
    return _kernels.mask_weights(k, p, backend=backend)


def enumerate_expectation(Z, Y, p: float, backend=None) -> MomentPair:
    """Exact E[Y Z~^T] and E[Z~ Z~^T] by summing over every dropout mask."""
    Zv, Yv = _features(Z), _labels(Y)
    if not (0.0 <= p < 1.0):
        raise ValidationError(f"dropout probability p must be in [0, 1), got {p}")
    if Zv.shape[0] > MAX_ENUM_K:
        raise CapacityError(f"k={Zv.shape[0]} exceeds the enumeration limit of {MAX_ENUM_K}")
    if Zv.shape[1] != Yv.shape[1]:
        raise DimensionError(f"{Zv.shape[1]} samples but {Yv.shape[1]} labels")
    P, Q = _kernels.enumerate_moments(Zv, Yv, p, backend=backend)
    Q = 0.5 * (Q + Q.T)
    return MomentPair(P, Q)
