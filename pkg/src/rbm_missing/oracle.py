"""Exact inference by enumeration for small RBMs.

The hidden layer is always summed analytically, so costs scale with 2^n
(or 2^|M| for clamped quantities) rather than 2^(n+m).  These routines are
the ground truth for the sampling-based code paths.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np
from scipy.special import expit, logsumexp

from .core import RbmParams, energy, free_energy_terms, hidden_fields
from .dataset import IncompleteDataset, IncompleteObservation

__all__ = [
    "MAX_ENUMERATION",
    "SizeGuardError",
    "ExactMoments",
    "Gradient",
    "all_configurations",
    "exact_log_partition",
    "exact_free_moments",
    "exact_clamped_moments",
    "exact_log_likelihood",
    "exact_gradient",
    "joint_log_partition_bruteforce",
    "joint_moments_bruteforce",
    "conditional_terms_bruteforce",
    "visible_marginal",
    "sample_exact",
]

MAX_ENUMERATION = 20
_CHUNK = 1 << 15


class SizeGuardError(ValueError):
    """Raised when an enumeration would exceed the configured size limit."""


class ExactMoments(NamedTuple):
    ev: np.ndarray
    eh: np.ndarray
    evh: np.ndarray
    logZ: float


class Gradient(NamedTuple):
    """Gradient of the log-likelihood with respect to (b, c, W)."""

    db: np.ndarray
    dc: np.ndarray
    dW: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.db, self.dc, self.dW.ravel()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def all_configurations(k: int) -> np.ndarray:
    """All 2^k binary vectors of length k as rows, in lexicographic order."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    codes = np.arange(1 << k, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def _guard(k: int, limit: int, what: str):
    if k > limit:
        raise SizeGuardError(f"{what}: enumerating 2^{k} states exceeds the limit 2^{limit}")


def _clamped_blocks(n: int, obs: IncompleteObservation):
    """Yield full visible configurations consistent with ``obs`` in chunks."""
    miss = obs.missing_indices
    k = miss.size
    base = obs.dense().astype(np.float64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    total = 1 << k
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        v = np.broadcast_to(base, (codes.size, n)).copy()
        if k:
            v[:, miss] = (codes[:, None] >> shifts) & 1
        yield v


def _moments_over(params: RbmParams, blocks) -> ExactMoments:
    """Exact moments of the RBM restricted to the visible configurations in ``blocks``.

    Two passes: the first finds the normalizer, the second accumulates
    normalized moments in a fixed block order.
    """
    blocks = list(blocks)
    logs = [free_energy_terms(params, v) for v in blocks]
    logZ = float(logsumexp(np.concatenate(logs)))
    ev = np.zeros(params.n)
    eh = np.zeros(params.m)
    evh = np.zeros((params.n, params.m))
    for v, lf in zip(blocks, logs):
        p = np.exp(lf - logZ)
        ph = expit(hidden_fields(params, v))
        ev += p @ v
        eh += p @ ph
        evh += (v * p[:, None]).T @ ph
    return ExactMoments(ev, eh, evh, logZ)


def exact_log_partition(params: RbmParams, max_visible: int = MAX_ENUMERATION) -> float:
    """ln Z by enumerating visibles with the hidden sum done in closed form."""
    _guard(params.n, max_visible, "exact_log_partition")
    full = IncompleteObservation(params.n, [], [])
    logs = [free_energy_terms(params, v) for v in _clamped_blocks(params.n, full)]
    return float(logsumexp(np.concatenate(logs)))


def exact_free_moments(params: RbmParams, max_visible: int = MAX_ENUMERATION) -> ExactMoments:
    _guard(params.n, max_visible, "exact_free_moments")
    full = IncompleteObservation(params.n, [], [])
    return _moments_over(params, _clamped_blocks(params.n, full))


def exact_clamped_moments(
    params: RbmParams, obs: IncompleteObservation, max_missing: int = MAX_ENUMERATION
) -> ExactMoments:
    """Moments of the clamped distribution P(v_M, h | d).

    Observed coordinates of ``ev`` equal the data; ``logZ`` is the log of the
    clamped normalizer sum_{v_M, h} exp(-E(d, v_M, h)).
    """
    if obs.n != params.n:
        raise ValueError(f"observation has n={obs.n}, model has n={params.n}")
    _guard(params.n - obs.observed_indices.size, max_missing, "exact_clamped_moments")
    mom = _moments_over(params, _clamped_blocks(params.n, obs))
    # observed rows are exact products, not weighted averages of constants
    idx = obs.observed_indices
    ev, evh = mom.ev.copy(), mom.evh.copy()
    ev[idx] = obs.values
    evh[idx] = obs.values[:, None] * mom.eh[None, :]
    return mom._replace(ev=ev, evh=evh)


def _observations(dataset) -> list[IncompleteObservation]:
    return list(dataset)


def exact_log_likelihood(
    params: RbmParams,
    dataset: IncompleteDataset | Iterable[IncompleteObservation],
    max_visible: int = MAX_ENUMERATION,
) -> float:
    """Mean over data points of ln P(d) with missing visibles marginalized."""
    obs = _observations(dataset)
    if not obs:
        raise ValueError("empty dataset")
    logZ = exact_log_partition(params, max_visible)
    total = 0.0
    for o in obs:
        _guard(params.n - o.observed_indices.size, max_visible, "exact_log_likelihood")
        logs = [free_energy_terms(params, v) for v in _clamped_blocks(params.n, o)]
        total += float(logsumexp(np.concatenate(logs)))
    return total / len(obs) - logZ


def exact_gradient(
    params: RbmParams,
    dataset: IncompleteDataset | Iterable[IncompleteObservation],
    max_visible: int = MAX_ENUMERATION,
) -> Gradient:
    """Gradient of :func:`exact_log_likelihood` with exact clamped and free moments.

    Observed visibles contribute their data value and missing ones the clamped
    expectation; the coupling term splits the same way.
    """
    obs = _observations(dataset)
    if not obs:
        raise ValueError("empty dataset")
    free = exact_free_moments(params, max_visible)
    pos_b = np.zeros(params.n)
    pos_c = np.zeros(params.m)
    pos_W = np.zeros((params.n, params.m))
    for o in obs:
        cm = exact_clamped_moments(params, o, max_visible)
        observed = o.observed_mask
        d = o.dense().astype(np.float64)
        pos_b += np.where(observed, d, cm.ev)
        pos_c += cm.eh
        pos_W += np.where(observed[:, None], np.outer(d, cm.eh), cm.evh)
    N = len(obs)
    return Gradient(pos_b / N - free.ev, pos_c / N - free.eh, pos_W / N - free.evh)


def visible_marginal(params: RbmParams, max_visible: int = MAX_ENUMERATION):
    """All visible configurations and their exact probabilities."""
    _guard(params.n, max_visible, "visible_marginal")
    v = all_configurations(params.n).astype(np.float64)
    lf = free_energy_terms(params, v)
    return v, np.exp(lf - logsumexp(lf))


def sample_exact(params: RbmParams, K: int, rng: np.random.Generator):
    """K independent (v, h) pairs drawn exactly from the joint distribution."""
    configs, p = visible_marginal(params)
    v = configs[rng.choice(configs.shape[0], size=K, p=p)]
    h = (rng.random((K, params.m)) < expit(hidden_fields(params, v))).astype(np.float64)
    return v, h


# Slow reference versions that also enumerate the hidden layer.  They share
# nothing with the analytic-hidden-sum path except the parameter container.

def _joint_log_weights(params: RbmParams):
    n, m = params.n, params.m
    _guard(n + m, 16, "joint enumeration")
    states = all_configurations(n + m).astype(np.float64)
    v, h = states[:, :n], states[:, n:]
    logw = np.empty(states.shape[0])
    for s in range(states.shape[0]):
        acc = 0.0
        for i in range(n):
            acc += params.b[i] * v[s, i]
        for j in range(m):
            acc += params.c[j] * h[s, j]
        for i in range(n):
            for j in range(m):
                acc += params.W[i, j] * v[s, i] * h[s, j]
        logw[s] = acc
    return v, h, logw


def joint_log_partition_bruteforce(params: RbmParams) -> float:
    _, _, logw = _joint_log_weights(params)
    return float(logsumexp(logw))


def joint_moments_bruteforce(params: RbmParams, obs: IncompleteObservation | None = None) -> ExactMoments:
    """Moments by explicit enumeration of every (v, h) pair, optionally clamped."""
    v, h, logw = _joint_log_weights(params)
    if obs is not None:
        keep = np.all(v[:, obs.observed_indices] == obs.values, axis=1)
        v, h, logw = v[keep], h[keep], logw[keep]
    logZ = float(logsumexp(logw))
    p = np.exp(logw - logZ)
    return ExactMoments(p @ v, p @ h, np.einsum("s,si,sj->ij", p, v, h), logZ)


def conditional_terms_bruteforce(params: RbmParams, v):
    """Conditional expectations given one full visible sample, by enumeration.

    Returns ``(tv, th, tvh)``: E[v_i | v_-i], E[h_j | v] and
    E[v_i h_j | v_-i], each summing exp(-E) over {v_i} x {h} (or {h}).
    """
    n, m = params.n, params.m
    _guard(1 + m, 16, "conditional enumeration")
    v = np.asarray(v, dtype=np.float64).reshape(n)
    hs = all_configurations(m).astype(np.float64)

    lw = -energy(params, np.broadcast_to(v, (hs.shape[0], n)), hs)
    p = np.exp(lw - logsumexp(lw))
    th = p @ hs

    tv = np.empty(n)
    tvh = np.empty((n, m))
    for i in range(n):
        vs = np.repeat(np.broadcast_to(v, (2, n)).copy(), hs.shape[0], axis=0)
        vs[:, i] = np.repeat([0.0, 1.0], hs.shape[0])
        hh = np.tile(hs, (2, 1))
        lw = -energy(params, vs, hh)
        p = np.exp(lw - logsumexp(lw))
        tv[i] = p @ vs[:, i]
        tvh[i] = (p * vs[:, i]) @ hh
    return tv, th, tvh
