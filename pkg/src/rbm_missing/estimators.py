"""Moment estimators from sample sets: plain Monte Carlo and spatial MC integration.

The spatial estimators replace each sampled quantity by its conditional
expectation given the rest of the sampled visibles:

* visible moment  E[v_i]      sums out v_i and the whole hidden layer,
* hidden moment   E[h_j]      sums out h_j given the full visible sample,
* pair moment     E[v_i h_j]  sums out v_i and the hidden layer.

All three need only the hidden fields tau(v) of each sample.  The field with
visible i removed, tau_{j,i} = tau_j - w_ij v_i, and the derived log-odds
phi_i are recomputed from ``tau`` on the fly, so per-sample cost is
O(|A| m) with one softplus and one exponential per (i, j) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from .core import RbmParams
from .dataset import IncompleteObservation

__all__ = [
    "SampleSet",
    "FieldCache",
    "MomentEstimates",
    "mci_moments",
    "mci_estimates",
    "smci_terms",
    "smci_estimates",
    "smci_v",
    "smci_h",
    "smci_vh",
    "mixed_term_vh",
    "pair_log_odds",
    "pair_term_logodds",
]

# upper bound on rows of the (pairs, m) temporaries times m
_MAX_BLOCK = 1 << 22


def _softplus(x):
    return np.logaddexp(0.0, x)


def pair_log_odds(a, b):
    """logit(sigmoid(a) * sigmoid(b)) evaluated as -logsumexp(-a, -b, -a-b)."""
    return -np.logaddexp(np.logaddexp(-a, -b), -a - b)


@dataclass
class SampleSet:
    """K visible samples over a free region A; the rest of V is fixed context.

    ``visibles`` stores full length-n vectors (context filled in) so the
    field computations never need to re-assemble them.
    """

    visibles: np.ndarray
    free: np.ndarray

    def __post_init__(self):
        self.visibles = np.atleast_2d(np.asarray(self.visibles, dtype=np.float64))
        self.free = np.asarray(self.free, dtype=bool).reshape(-1)
        if self.visibles.shape[0] < 1:
            raise ValueError("a sample set needs at least one sample")
        if self.visibles.shape[1] != self.free.size:
            raise ValueError("sample width does not match the free-region mask")

    @classmethod
    def unclamped(cls, samples) -> "SampleSet":
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        return cls(samples, np.ones(samples.shape[1], dtype=bool))

    @classmethod
    def clamped(cls, obs: IncompleteObservation, missing_samples) -> "SampleSet":
        miss = obs.missing_indices
        s = np.asarray(missing_samples, dtype=np.float64).reshape(-1, miss.size)
        full = np.broadcast_to(obs.dense().astype(np.float64), (s.shape[0], obs.n)).copy()
        full[:, miss] = s
        return cls(full, ~obs.observed_mask)

    @property
    def K(self) -> int:
        return self.visibles.shape[0]

    @property
    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(self.free)


class FieldCache:
    """Hidden fields of every sample; derived quantities are computed on demand."""

    def __init__(self, params: RbmParams, visibles: np.ndarray):
        self.params = params
        self.v = np.asarray(visibles, dtype=np.float64)
        self.tau = params.c + self.v @ params.W

    def tau_excl(self) -> np.ndarray:
        """tau_{j,i}(v) = tau_j(v) - w_ij v_i, shape (K, n, m)."""
        return self.tau[:, None, :] - self.params.W[None, :, :] * self.v[:, :, None]

    def _delta(self, te):
        return _softplus(te + self.params.W) - _softplus(te)

    def phi(self) -> np.ndarray:
        """phi_i(v) = b_i + sum_j [softplus(tau_{j,i} + w_ij) - softplus(tau_{j,i})], shape (K, n)."""
        return self.params.b + self._delta(self.tau_excl()).sum(axis=-1)

    def phi_excl(self) -> np.ndarray:
        """phi_{i,j}(v): phi_i with the j-th softplus difference removed, shape (K, n, m)."""
        delta = self._delta(self.tau_excl())
        return (self.params.b + delta.sum(axis=-1))[:, :, None] - delta


@dataclass
class MomentEstimates:
    ev: np.ndarray
    eh: np.ndarray
    evh: np.ndarray
    kind: str


def mci_moments(v, h) -> MomentEstimates:
    """Sample averages of v_i, h_j and v_i h_j over paired samples."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if v.shape[0] == 0:
        raise ValueError("empty sample set")
    if v.shape[0] != h.shape[0]:
        raise ValueError("visible and hidden samples are not paired")
    K = v.shape[0]
    return MomentEstimates(v.mean(axis=0), h.mean(axis=0), v.T @ h / K, "MCI")


def mci_estimates(v, h) -> MomentEstimates:
    """Batched :func:`mci_moments`: averages over the sample axis of (..., K, n) arrays."""
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.ndim < 2 or v.shape[-2] == 0:
        raise ValueError("empty sample set")
    K = v.shape[-2]
    evh = np.einsum("...ki,...kj->...ij", v, h) / K
    return MomentEstimates(v.mean(axis=-2), h.mean(axis=-2), evh, "MCI")


def pair_term_logodds(tau_excl, phi_excl, w):
    """Pair summand written as sigmoid(logit(sigmoid(a) sigmoid(b)) + w).

    Reference form kept for cross-checking the factorized evaluation used
    by :func:`smci_terms`.
    """
    return expit(w + pair_log_odds(tau_excl, phi_excl))


def _pair_terms(params: RbmParams, v, tau, rows, cols):
    """Visible and pair summands for the (sample, visible) pairs ``(rows, cols)``.

    With v_i binary the field with i removed is tau_j - w_ij v_i, so the
    softplus difference in phi_i needs one softplus of tau_j +/- w_ij.  The
    pair summand factorizes as P(v_i=1 | rest) * P(h_j=1 | v_i=1, rest).
    """
    W = params.W
    vi = v[rows, cols]
    sgn = (1.0 - 2.0 * vi)[:, None]
    x = tau[rows] + sgn * W[cols]
    sp_x = _softplus(x)
    sp_tau = _softplus(tau)
    delta = sgn * (sp_x - sp_tau[rows])
    tv = expit(params.b[cols] + delta.sum(axis=1))
    # sigmoid(tau_{j,i} + w_ij): tau_j itself when v_i = 1, x when v_i = 0
    hid = np.where(sgn > 0, np.exp(x - sp_x), expit(tau)[rows])
    return tv, tv[:, None] * hid


def smci_terms(params: RbmParams, visibles, free=None):
    """Per-sample summands of the three spatial estimators.

    ``visibles`` has shape (..., n) and ``free`` (broadcastable to it) marks
    the visibles whose terms are wanted; default all.  Returns ``(tv, th,
    tvh)`` with shapes (..., n), (..., m), (..., n, m):

    * tv[i]     = sigmoid(phi_i)
    * th[j]     = sigmoid(tau_j)
    * tvh[i, j] = sigmoid(logit(sigmoid(tau_{j,i}) sigmoid(phi_{i,j})) + w_ij)

    Entries of non-free visibles are NaN.
    """
    v = np.asarray(visibles, dtype=np.float64)
    lead = v.shape[:-1]
    n, m = params.n, params.m
    if v.shape[-1] != n:
        raise ValueError(f"samples have {v.shape[-1]} columns, model has n={n}")
    flat = v.reshape(-1, n)
    R = flat.shape[0]
    if free is None:
        mask = np.ones((R, n), dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(free, dtype=bool), v.shape).reshape(R, n)
    tau = params.c + flat @ params.W
    th = expit(tau)
    tv = np.full((R, n), np.nan)
    tvh = np.full((R, n, m), np.nan)
    rows, cols = np.nonzero(mask)
    step = max(1, _MAX_BLOCK // m)
    for s in range(0, rows.size, step):
        r, i = rows[s:s + step], cols[s:s + step]
        tv[r, i], tvh[r, i] = _pair_terms(params, flat, tau, r, i)
    return tv.reshape(*lead, n), th.reshape(*lead, m), tvh.reshape(*lead, n, m)


def smci_estimates(params: RbmParams, visibles, free=None) -> MomentEstimates:
    """Spatial estimates averaged over the sample axis (second to last).

    Accepts (K, n) or batched (B, K, n) samples; see :func:`smci_terms` for
    ``free``.  A visible that is non-free in any sample of a group gets NaN.
    Same numbers as averaging :func:`smci_terms`, without materializing the
    per-sample pair terms.
    """
    v = np.asarray(visibles, dtype=np.float64)
    if v.ndim < 2 or v.shape[-2] == 0:
        raise ValueError("empty sample set")
    n, m = params.n, params.m
    if v.shape[-1] != n:
        raise ValueError(f"samples have {v.shape[-1]} columns, model has n={n}")
    lead = v.shape[:-2]
    K = v.shape[-2]
    flat = np.ascontiguousarray(v.reshape(-1, K, n))
    if free is None:
        mask = np.ones(flat.shape, dtype=bool)
    else:
        mask = np.ascontiguousarray(np.broadcast_to(np.asarray(free, dtype=bool), v.shape).reshape(flat.shape))
    ev, eh, evh = _smci_sums(np.ascontiguousarray(params.W), params.b, params.c, flat, mask)
    return MomentEstimates(ev.reshape(*lead, n), eh.reshape(*lead, m), evh.reshape(*lead, n, m), "SMCI")


@njit(cache=True)
def _softplus_scalar(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True)
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _smci_sums(W, b, c, v, mask):
    G, K, n = v.shape
    m = W.shape[1]
    ev = np.zeros((G, n))
    eh = np.zeros((G, m))
    evh = np.zeros((G, n, m))
    bad = np.zeros((G, n), dtype=np.bool_)
    tau = np.empty(m)
    sp_tau = np.empty(m)
    sig_tau = np.empty(m)
    hid = np.empty(m)
    for g in range(G):
        for k in range(K):
            for j in range(m):
                acc = c[j]
                for i in range(n):
                    acc += v[g, k, i] * W[i, j]
                tau[j] = acc
                sp_tau[j] = _softplus_scalar(acc)
                sig_tau[j] = _sigmoid_scalar(acc)
                eh[g, j] += sig_tau[j]
            for i in range(n):
                if not mask[g, k, i]:
                    bad[g, i] = True
                    continue
                sgn = 1.0 - 2.0 * v[g, k, i]
                acc = b[i]
                for j in range(m):
                    x = tau[j] + sgn * W[i, j]
                    sp_x = _softplus_scalar(x)
                    acc += sgn * (sp_x - sp_tau[j])
                    hid[j] = math.exp(x - sp_x) if sgn > 0 else sig_tau[j]
                tv = _sigmoid_scalar(acc)
                ev[g, i] += tv
                for j in range(m):
                    evh[g, i, j] += tv * hid[j]
        for j in range(m):
            eh[g, j] /= K
        for i in range(n):
            if bad[g, i]:
                ev[g, i] = np.nan
                for j in range(m):
                    evh[g, i, j] = np.nan
            else:
                ev[g, i] /= K
                for j in range(m):
                    evh[g, i, j] /= K
    return ev, eh, evh


def smci_v(params: RbmParams, samples: SampleSet) -> np.ndarray:
    """Visible moments E[v_i] for i in the free region."""
    tv, _, _ = smci_terms(params, samples.visibles, samples.free)
    return tv[:, samples.free].mean(axis=0)


def smci_h(params: RbmParams, samples: SampleSet) -> np.ndarray:
    """Hidden moments E[h_j] for every hidden unit."""
    th = expit(params.c + samples.visibles @ params.W)
    return th.mean(axis=0)


def smci_vh(params: RbmParams, samples: SampleSet) -> np.ndarray:
    """Pair moments E[v_i h_j], rows over the free region, columns over hiddens."""
    _, _, tvh = smci_terms(params, samples.visibles, samples.free)
    return tvh[:, samples.free, :].mean(axis=0)


def mixed_term_vh(d_i, eh_j):
    """Observed-visible pair term d_i * E[h_j | d]."""
    return d_i * eh_j
