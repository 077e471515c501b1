"""Blocked Gibbs sampling on the joint and clamped RBM distributions.

Chains are advanced together as rows of a matrix.  Every step draws one
uniform per coordinate from a single generator in a fixed (chain, unit)
layout, so a run is reproducible from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import RbmParams
from .dataset import IncompleteObservation

__all__ = [
    "rng_stream",
    "ChainState",
    "PersistentChains",
    "bernoulli",
    "block_gibbs",
    "clamped_gibbs",
    "block_gibbs_clamped",
    "pcd_step",
]


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``; same pair, same draws."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


@dataclass
class ChainState:
    """Final (v, h) states of K chains, one chain per row."""

    v: np.ndarray
    h: np.ndarray

    def __len__(self) -> int:
        return self.v.shape[0]


@dataclass
class PersistentChains:
    """Visible states carried across parameter updates (PCD fantasy particles)."""

    visibles: np.ndarray
    age: int = 0

    @classmethod
    def uniform(cls, K: int, n: int, rng: np.random.Generator) -> "PersistentChains":
        if K < 1:
            raise ValueError("need at least one persistent chain")
        return cls((rng.random((K, n)) < 0.5).astype(np.float64))

    def __len__(self) -> int:
        return self.visibles.shape[0]


def bernoulli(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(p.shape) < p).astype(np.float64)


def _as_visibles(params: RbmParams, v) -> np.ndarray:
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if v.shape[1] != params.n:
        raise ValueError(f"initial visibles have {v.shape[1]} columns, model has n={params.n}")
    return v


def block_gibbs(params: RbmParams, initial_visibles, steps: int, rng: np.random.Generator) -> ChainState:
    """Run K chains of blocked Gibbs sampling for ``steps`` sweeps.

    h_0 is drawn from P(h | v_0); each sweep then draws v from P(v | h)
    followed by h from P(h | v).  With ``steps == 0`` the result is
    (v_0, h_0).
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    v = _as_visibles(params, initial_visibles)
    if v.shape[0] < 1:
        raise ValueError("need at least one chain")
    W, b, c = params.W, params.b, params.c
    h = bernoulli(expit(c + v @ W), rng)
    for _ in range(steps):
        v = bernoulli(expit(b + h @ W.T), rng)
        h = bernoulli(expit(c + v @ W), rng)
    return ChainState(v, h)


def clamped_gibbs(
    params: RbmParams,
    data: np.ndarray,
    observed: np.ndarray,
    initial_visibles: np.ndarray,
    steps: int,
    rng: np.random.Generator,
) -> ChainState:
    """Blocked Gibbs on P(v_M, h | d), one row per chain.

    ``data`` and ``observed`` are row-aligned with ``initial_visibles``; each
    row may carry its own observed set.  Observed entries are pinned to the
    data on every sweep and only missing entries are ever resampled.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    d = np.asarray(data, dtype=np.float64)
    obs = np.asarray(observed, dtype=bool)
    v = np.where(obs, d, _as_visibles(params, initial_visibles))
    W, b, c = params.W, params.b, params.c
    h = bernoulli(expit(c + v @ W), rng)
    for _ in range(steps):
        v = np.where(obs, d, bernoulli(expit(b + h @ W.T), rng))
        h = bernoulli(expit(c + v @ W), rng)
        if __debug__:
            assert np.array_equal(v[obs], d[obs]), "clamped sampler changed an observed entry"
    return ChainState(v, h)


def block_gibbs_clamped(
    params: RbmParams,
    obs: IncompleteObservation,
    initial_missing,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Clamped sampling for a single observation.

    ``initial_missing`` has one row per chain and one column per missing
    index.  Returns the final missing-visible configurations; hidden states
    are discarded.
    """
    miss = obs.missing_indices
    init = np.atleast_2d(np.asarray(initial_missing, dtype=np.float64))
    if init.shape[1] != miss.size:
        raise ValueError(
            f"initial points have {init.shape[1]} entries but the observation has {miss.size} missing"
        )
    K = init.shape[0]
    if miss.size == 0:
        return np.zeros((K, 0))
    full = np.broadcast_to(obs.dense().astype(np.float64), (K, obs.n)).copy()
    full[:, miss] = init
    mask = np.broadcast_to(obs.observed_mask, (K, obs.n))
    state = clamped_gibbs(params, full, mask, full, steps, rng)
    return state.v[:, miss]


def pcd_step(
    chains: PersistentChains, params: RbmParams, steps: int, rng: np.random.Generator
) -> tuple[np.ndarray, PersistentChains]:
    """Advance the persistent chains under the current parameters.

    Returns the new visible states (the free-phase sample set) and the
    updated chain container.
    """
    state = block_gibbs(params, chains.visibles, steps, rng)
    return state.v, PersistentChains(state.v, chains.age + 1)
