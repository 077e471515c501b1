"""Clamped mean-field equations and mean-field initial points for clamped chains.

For a data point d with missing set M the magnetizations solve

    m_i = sigmoid(b_i + sum_j w_ij m_j)              i in M
    m_j = sigmoid(c_j + sum_i w_ij (m_i or d_i))     j hidden

Iteration is synchronous by block: all missing visibles from the current
hidden magnetizations, then all hiddens from the new visibles.  The stopping
rule measures how far the visible block moves on the next substitution, so a
converged result satisfies both equations within ``tol`` (the hidden block
exactly).
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
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
    "MeanFieldMoments",
    "solve_mf_batch",
    "solve_clamped_mf",
    "mf_residual",
    "mf_initial_points",
    "generate_initial_points",
]

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000

_LO = np.finfo(np.float64).tiny
_HI = np.nextafter(1.0, 0.0)


def _clip(x):
    # saturated sigmoids stay strictly inside (0, 1)
    return np.clip(x, _LO, _HI)


def _sig(x):
    return _clip(expit(x))


@dataclass
class MeanFieldMoments:
    """Magnetizations for one observation.

    ``mv`` is indexed by the missing set (same order as
    ``obs.missing_indices``); ``mh`` covers every hidden unit.
    """

    mv: np.ndarray
    mh: np.ndarray
    iterations: int = 0
    converged: bool = False


def solve_mf_batch(
    params: RbmParams,
    data: np.ndarray,
    observed: np.ndarray,
    mh0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 0.0,
):
    """Solve the clamped mean-field equations for many rows at once.

    Each row of ``data``/``observed`` is one clamping; ``mh0`` holds the
    starting hidden magnetizations.  Returns ``(mv, mh, iterations,
    converged)`` where ``mv`` is n-wide with observed entries equal to the
    data.  Each row stops as soon as it converges; a row that hits
    ``max_iter`` keeps its last iterate.
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    d = np.asarray(data, dtype=np.float64)
    obs = np.asarray(observed, dtype=bool)
    W, b, c = params.W, params.b, params.c
    rows = d.shape[0]

    mh0 = np.ascontiguousarray(mh0, dtype=np.float64).reshape(rows, params.m)
    mv, mh, iterations, converged = _solve_rows(
        np.ascontiguousarray(W), b, c, np.ascontiguousarray(d), np.ascontiguousarray(obs),
        mh0, float(tol), int(max_iter), float(damping),
    )
    return np.where(obs, d, _clip(mv)), _clip(mh), iterations, converged


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _solve_rows(W, b, c, d, obs, mh0, tol, max_iter, damping):
    rows, n = d.shape
    m = W.shape[1]
    mv_out = np.empty((rows, n))
    mh_out = np.empty((rows, m))
    iterations = np.zeros(rows, dtype=np.int64)
    converged = np.zeros(rows, dtype=np.bool_)
    mv = np.empty(n)
    nxt = np.empty(n)
    mh = np.empty(m)
    for r in range(rows):
        for j in range(m):
            mh[j] = mh0[r, j]
        for i in range(n):
            if obs[r, i]:
                mv[i] = d[r, i]
            else:
                acc = b[i]
                for j in range(m):
                    acc += W[i, j] * mh[j]
                mv[i] = _sigmoid(acc)
        for it in range(1, max_iter + 1):
            iterations[r] = it
            for j in range(m):
                acc = c[j]
                for i in range(n):
                    acc += W[i, j] * mv[i]
                mh[j] = _sigmoid(acc)
            residual = 0.0
            for i in range(n):
                if obs[r, i]:
                    nxt[i] = d[r, i]
                    continue
                acc = b[i]
                for j in range(m):
                    acc += W[i, j] * mh[j]
                nxt[i] = _sigmoid(acc)
                residual = max(residual, abs(nxt[i] - mv[i]))
            if residual < tol:
                converged[r] = True
                break
            for i in range(n):
                if not obs[r, i]:
                    mv[i] = (1.0 - damping) * nxt[i] + damping * mv[i]
        for i in range(n):
            mv_out[r, i] = mv[i]
        for j in range(m):
            mh_out[r, j] = mh[j]
    return mv_out, mh_out, iterations, converged


def mf_residual(params: RbmParams, data, observed, mv, mh) -> np.ndarray:
    """Coordinatewise |rhs - lhs| of the clamped mean-field equations.

    Returns an n+m wide array per row; observed visible slots are zero.
    """
    obs = np.asarray(observed, dtype=bool)
    full = np.where(obs, np.asarray(data, dtype=np.float64), mv)
    rv = np.where(obs, 0.0, np.abs(_sig(params.b + mh @ params.W.T) - full))
    rh = np.abs(_sig(params.c + full @ params.W) - mh)
    return np.concatenate([rv, rh], axis=-1)


def solve_clamped_mf(
    params: RbmParams,
    obs: IncompleteObservation,
    init: MeanFieldMoments | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 0.0,
    rng: np.random.Generator | None = None,
) -> MeanFieldMoments:
    """Successive substitution from ``init`` (uniform random if omitted)."""
    miss = obs.missing_indices
    if init is None:
        rng = rng if rng is not None else np.random.default_rng()
        init = MeanFieldMoments(rng.random(miss.size), rng.random(params.m))
    mv0 = np.asarray(init.mv, dtype=np.float64)
    mh0 = np.asarray(init.mh, dtype=np.float64)
    if mv0.shape != (miss.size,) or mh0.shape != (params.m,):
        raise ValueError("initial magnetizations do not match the missing set / hidden layer")
    if np.any((mv0 <= 0) | (mv0 >= 1)) or np.any((mh0 <= 0) | (mh0 >= 1)):
        raise ValueError("initial magnetizations must lie strictly inside (0, 1)")
    mv, mh, it, conv = solve_mf_batch(
        params, obs.dense()[None, :], obs.observed_mask[None, :], mh0[None, :], tol, max_iter, damping
    )
    return MeanFieldMoments(mv[0, miss], mh[0], int(it[0]), bool(conv[0]))


def mf_initial_points(
    params: RbmParams,
    data: np.ndarray,
    observed: np.ndarray,
    count: int,
    rng: np.random.Generator,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 0.0,
):
    """Mean-field initial points for every row of a minibatch.

    For each of ``count`` restarts per row: uniform random magnetizations,
    successive substitution, then one draw from the factorized test
    distribution over the missing visibles.  Returns an array of shape
    (B, count, n) with observed entries equal to the data, and the number of
    solves that hit ``max_iter`` without converging.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    d = np.asarray(data, dtype=np.float64)
    obs = np.asarray(observed, dtype=bool)
    B, n = d.shape
    # draw layout: all visible starts, then hidden starts, then the sample
    rng.random((B, count, n))  # visible starts are overwritten by the first sweep
    mh0 = rng.random((B, count, params.m))
    d_rep = np.repeat(d, count, axis=0)
    o_rep = np.repeat(obs, count, axis=0)
    mv, _, _, conv = solve_mf_batch(
        params, d_rep, o_rep, mh0.reshape(B * count, params.m), tol, max_iter, damping
    )
    u = rng.random((B, count, n)).reshape(B * count, n)
    v = np.where(o_rep, d_rep, (u < mv).astype(np.float64))
    return v.reshape(B, count, n), int((~conv).sum())


def generate_initial_points(
    params: RbmParams,
    obs: IncompleteObservation,
    count: int,
    rng: np.random.Generator,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 0.0,
) -> np.ndarray:
    """``count`` initial points over the missing visibles of one observation."""
    miss = obs.missing_indices
    v, _ = mf_initial_points(
        params, obs.dense()[None, :], obs.observed_mask[None, :], count, rng, tol, max_iter, damping
    )
    return v[0][:, miss]
