"""Hot loops for the corruption oracles, in numba and pure numpy.

Set ``RTM_DISABLE_NUMBA=1`` (or leave numba uninstalled) to use the numpy
path. Both paths draw identical dropout masks; moment sums agree to
rounding.

Randomness is counter-based: the keep/drop decision for feature ``f`` of
sample ``i`` in corrupted copy ``j`` is a pure function of
``(seed, j, i, f)`` through the SplitMix64 finalizer, so copies can be
generated in any order or in parallel without changing the draws.
"""

from __future__ import annotations

import os

import numpy as np

RNG_NAME = "splitmix64-counter(seed, copy, sample, feature)"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

_disabled = os.environ.get("RTM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
try:
    if _disabled:
        raise ImportError("disabled by RTM_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


def seed64(seed) -> np.uint64:
    return np.uint64(int(seed) % (1 << 64))


# ---------------------------------------------------------------- numpy path
# uint64 arrays wrap on overflow, which the hash relies on.

def _mix_np(x):
    x = x ^ (x >> _S30)
    x = x * _M1
    x = x ^ (x >> _S27)
    x = x * _M2
    return x ^ (x >> _S31)


def _copy_keys_np(seed, copies):
    base = _mix_np(np.array([seed64(seed)], dtype=np.uint64) + _GOLDEN)
    c = np.asarray(copies, dtype=np.int64).astype(np.uint64)
    return _mix_np(base + (c + np.uint64(1)) * _GOLDEN)


def keep_masks_np(seed, copies, k, n, p):
    """Boolean masks of shape (len(copies), k, n); True keeps the entry."""
    keys = _copy_keys_np(seed, copies)
    cols = (np.arange(n, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
    feats = (np.arange(k, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
    col_keys = _mix_np(keys[:, None] + cols[None, :])          # (J, n)
    h = _mix_np(col_keys[:, None, :] + feats[None, :, None])   # (J, k, n)
    u = (h >> _S11).astype(np.float64) * _TWO_M53
    return u >= p


def accumulate_np(Z, Y, p, seed, copies, chunk=None):
    """Sum over ``copies`` of Y Z~_j^T and Z~_j Z~_j^T, summed in copy order."""
    k, n = Z.shape
    copies = np.asarray(copies, dtype=np.int64)
    if chunk is None:
        chunk = max(1, min(len(copies), 2_000_000 // max(k * n, 1)))
    P = np.zeros((Y.shape[0], k))
    Q = np.zeros((k, k))
    for s in range(0, len(copies), chunk):
        part = copies[s:s + chunk]
        m = keep_masks_np(seed, part, k, n, p)
        Zt = (m * Z[None, :, :]).transpose(1, 0, 2).reshape(k, -1)
        Yt = np.tile(Y, len(part))
        P += Yt @ Zt.T
        Q += Zt @ Zt.T
    return P, 0.5 * (Q + Q.T)


def enumerate_np(Z, Y, p, block=4096):
    k, n = Z.shape
    total = 1 << k
    P = np.zeros((Y.shape[0], k))
    Q = np.zeros((k, k))
    bits = np.arange(k, dtype=np.int64)
    for s in range(0, total, block):
        idx = np.arange(s, min(s + block, total), dtype=np.int64)
        keep = ((idx[:, None] >> bits[None, :]) & 1).astype(bool)   # (B, k)
        w = np.prod(np.where(keep, 1.0 - p, p), axis=1)
        Zt = keep[:, :, None] * Z[None, :, :]                      # (B, k, n)
        P += np.einsum("b,cn,bkn->ck", w, Y, Zt)
        Q += np.einsum("b,bkn,bln->kl", w, Zt, Zt)
    return P, Q


def mask_weights_np(k, p):
    idx = np.arange(1 << k, dtype=np.int64)
    keep = ((idx[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)
    return np.prod(np.where(keep, 1.0 - p, p), axis=1)


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _mix_nb(x):
        x = x ^ (x >> _S30)
        x = x * _M1
        x = x ^ (x >> _S27)
        x = x * _M2
        return x ^ (x >> _S31)

    @njit(cache=True)
    def _keep_masks_nb(seed, copies, k, n, p):
        out = np.empty((copies.shape[0], k, n), dtype=np.bool_)
        base = _mix_nb(seed + _GOLDEN)
        for a in range(copies.shape[0]):
            key = _mix_nb(base + (np.uint64(copies[a]) + np.uint64(1)) * _GOLDEN)
            for i in range(n):
                ck = _mix_nb(key + (np.uint64(i) + np.uint64(1)) * _GOLDEN)
                for f in range(k):
                    h = _mix_nb(ck + (np.uint64(f) + np.uint64(1)) * _GOLDEN)
                    out[a, f, i] = np.float64(h >> _S11) * _TWO_M53 >= p
        return out

    @njit(cache=True)
    def _accumulate_nb(Z, labels, C, p, seed, copies, batch):
        # Masked copies are stacked as rows of a (batch*n) x k buffer; the
        # scatter of each filled buffer goes to BLAS.
        k, n = Z.shape
        P = np.zeros((C, k))
        Q = np.zeros((k, k))
        buf = np.empty((batch * n, k))
        base = _mix_nb(seed + _GOLDEN)
        n_copies = copies.shape[0]
        for start in range(0, n_copies, batch):
            stop = min(start + batch, n_copies)
            width = (stop - start) * n
            for a in range(start, stop):
                key = _mix_nb(base + (np.uint64(copies[a]) + np.uint64(1)) * _GOLDEN)
                off = (a - start) * n
                for i in range(n):
                    ck = _mix_nb(key + (np.uint64(i) + np.uint64(1)) * _GOLDEN)
                    c = labels[i]
                    for f in range(k):
                        h = _mix_nb(ck + (np.uint64(f) + np.uint64(1)) * _GOLDEN)
                        v = Z[f, i] * (np.float64(h >> _S11) * _TWO_M53 >= p)
                        buf[off + i, f] = v
                        P[c, f] += v
            B = buf[:width]
            Q += np.dot(B.T, B)
        for a in range(k):
            for b in range(a + 1, k):
                s = 0.5 * (Q[a, b] + Q[b, a])
                Q[a, b] = s
                Q[b, a] = s
        return P, Q

    @njit(cache=True)
    def _enumerate_nb(Z, Y, p):
        k, n = Z.shape
        C = Y.shape[0]
        P = np.zeros((C, k))
        Q = np.zeros((k, k))
        kept = np.empty(k, dtype=np.int64)
        for mask in range(1 << k):
            w = 1.0
            m = 0
            for f in range(k):
                if (mask >> f) & 1:
                    w *= 1.0 - p
                    kept[m] = f
                    m += 1
                else:
                    w *= p
            if w == 0.0:
                continue
            for i in range(n):
                for x in range(m):
                    fa = kept[x]
                    wz = w * Z[fa, i]
                    for c in range(C):
                        P[c, fa] += Y[c, i] * wz
                    for y in range(m):
                        fb = kept[y]
                        Q[fa, fb] += wz * Z[fb, i]
        return P, Q

    @njit(cache=True)
    def _mask_weights_nb(k, p):
        out = np.empty(1 << k)
        for mask in range(1 << k):
            w = 1.0
            for f in range(k):
                w *= (1.0 - p) if (mask >> f) & 1 else p
            out[mask] = w
        return out


def _is_one_hot(Y):
    return bool(np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=0) == 1))


def keep_masks(seed, copies, k, n, p, backend=None):
    copies = np.ascontiguousarray(copies, dtype=np.int64)
    if _use_numba(backend):
        return _keep_masks_nb(seed64(seed), copies, int(k), int(n), float(p))
    return keep_masks_np(seed, copies, k, n, p)


def accumulate(Z, Y, p, seed, copies, backend=None):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    copies = np.ascontiguousarray(copies, dtype=np.int64)
    if _use_numba(backend) and _is_one_hot(Y):
        labels = np.argmax(Y, axis=0).astype(np.int64)
        k, n = Z.shape
        batch = max(1, min(len(copies), 200_000 // max(k * n, 1)))
        return _accumulate_nb(Z, labels, Y.shape[0], float(p), seed64(seed), copies, batch)
    return accumulate_np(Z, Y, p, seed, copies)


def enumerate_moments(Z, Y, p, backend=None):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if _use_numba(backend):
        return _enumerate_nb(Z, Y, float(p))
    return enumerate_np(Z, Y, p)


def mask_weights(k, p, backend=None):
    if _use_numba(backend):
        return _mask_weights_nb(int(k), float(p))
    return mask_weights_np(k, p)


def _use_numba(backend):
    if backend is None:
        return HAS_NUMBA
    if backend == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")
