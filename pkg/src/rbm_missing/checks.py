"""Oracle-equivalence checks on small random instances.

Each check compares a production code path against an enumeration oracle
and reports the worst error over all trials.  Used by ``rbm-missing
oracle-check``.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .ais import AisConfig, ais_log_partition
from .core import RbmParams
from .dataset import IncompleteDataset, IncompleteObservation, apply_mask
from .estimators import smci_estimates, smci_terms
from .meanfield import mf_residual, solve_mf_batch
from .oracle import (
    all_configurations,
    conditional_terms_bruteforce,
    exact_clamped_moments,
    exact_free_moments,
    exact_gradient,
    exact_log_likelihood,
    exact_log_partition,
    joint_log_partition_bruteforce,
    joint_moments_bruteforce,
    visible_marginal,
)

__all__ = ["CheckResult", "CHECKS", "run_checks", "finite_difference_gradient", "relative_error"]


class CheckResult(NamedTuple):
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


def relative_error(approx, exact) -> float:
    approx, exact = np.ravel(approx), np.ravel(exact)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-12))


def finite_difference_gradient(params: RbmParams, dataset, step: float = 1e-5) -> np.ndarray:
    """Central differences of the exact log-likelihood, flat (b, c, W) order."""
    theta = params.flat()
    out = np.empty_like(theta)
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        f_up = exact_log_likelihood(RbmParams.from_flat(up, params.n, params.m), dataset)
        f_down = exact_log_likelihood(RbmParams.from_flat(down, params.n, params.m), dataset)
        out[k] = (f_up - f_down) / (2 * step)
    return out


def _random_dataset(params, rng, N=3, p=0.4) -> IncompleteDataset:
    data = (rng.random((N, params.n)) < 0.5).astype(np.uint8)
    return apply_mask(data, p, rng)


def _log_partition(params, rng):
    return abs(exact_log_partition(params) - joint_log_partition_bruteforce(params))


def _clamped_moments(params, rng):
    obs = _random_dataset(params, rng, N=1)[0]
    a = exact_clamped_moments(params, obs)
    b = joint_moments_bruteforce(params, obs)
    return max(np.abs(a.ev - b.ev).max(), np.abs(a.eh - b.eh).max(), np.abs(a.evh - b.evh).max(),
               abs(a.logZ - b.logZ))


def _gradient(params, rng):
    ds = _random_dataset(params, rng)
    return relative_error(exact_gradient(params, ds).flat(), finite_difference_gradient(params, ds))


def _smci_summands(params, rng):
    v = (rng.random((4, params.n)) < 0.5).astype(np.float64)
    tv, th, tvh = smci_terms(params, v)
    err = 0.0
    for k in range(v.shape[0]):
        ev, eh, evh = conditional_terms_bruteforce(params, v[k])
        err = max(err, np.abs(tv[k] - ev).max(), np.abs(th[k] - eh).max(), np.abs(tvh[k] - evh).max())
    return err


def _rao_blackwell(params, rng):
    configs, p = visible_marginal(params)
    tv, th, tvh = smci_terms(params, configs)
    exact = exact_free_moments(params)
    err = max(np.abs(p @ tv - exact.ev).max(), np.abs(p @ th - exact.eh).max(),
              np.abs(np.einsum("s,sij->ij", p, tvh) - exact.evh).max())
    # clamped version: the free region is the missing set of one observation
    obs = _random_dataset(params, rng, N=1)[0]
    miss = obs.missing_indices
    if miss.size:
        sub = all_configurations(miss.size).astype(np.float64)
        full = np.broadcast_to(obs.dense().astype(np.float64), (sub.shape[0], params.n)).copy()
        full[:, miss] = sub
        cm = exact_clamped_moments(params, obs)
        lw = np.array([exact_log_likelihood(params, [IncompleteObservation.complete(x)]) for x in full])
        w = np.exp(lw - lw.max())
        w /= w.sum()
        ctv, cth, ctvh = smci_terms(params, full, ~obs.observed_mask)
        err = max(err, np.abs(w @ ctv[:, miss] - cm.ev[miss]).max(), np.abs(w @ cth - cm.eh).max(),
                  np.abs(np.einsum("s,sij->ij", w, ctvh[:, miss]) - cm.evh[miss]).max())
        est = smci_estimates(params, full, ~obs.observed_mask)
        err = max(err, np.abs(est.ev[miss] - ctv[:, miss].mean(axis=0)).max())
    return err


def _mf_complete(params, rng):
    d = (rng.random((3, params.n)) < 0.5).astype(np.float64)
    obs = np.ones_like(d, dtype=bool)
    _, mh, _, conv = solve_mf_batch(params, d, obs, rng.random((3, params.m)))
    if not conv.all():
        return math.inf
    exact = np.array([exact_clamped_moments(params, IncompleteObservation.complete(x)).eh for x in d])
    return float(np.abs(mh - exact).max())


def _mf_fixed_point(params, rng):
    ds = _random_dataset(params, rng, N=5, p=0.6)
    d = ds.values.astype(np.float64)
    mv, mh, _, conv = solve_mf_batch(params, d, ds.observed, rng.random((len(ds), params.m)), tol=1e-10)
    if not conv.any():
        return math.inf
    return float(mf_residual(params, d, ds.observed, mv, mh)[conv].max())


def _ais_zero(params, rng):
    zero = RbmParams.zeros(params.n, params.m)
    res = ais_log_partition(zero, AisConfig(num_temperatures=10, num_runs=5), rng)
    return abs(res.log_z - (params.n + params.m) * math.log(2))


CHECKS: dict[str, tuple[Callable, float]] = {
    "log_partition_vs_joint_enumeration": (_log_partition, 1e-10),
    "clamped_moments_vs_joint_enumeration": (_clamped_moments, 1e-10),
    "gradient_vs_finite_differences": (_gradient, 1e-6),
    "smci_summands_vs_enumeration": (_smci_summands, 1e-10),
    "smci_exhaustive_unbiasedness": (_rao_blackwell, 1e-12),
    "meanfield_complete_data_exact": (_mf_complete, 1e-12),
    "meanfield_fixed_point_residual": (_mf_fixed_point, 1e-6),
    "ais_zero_parameters": (_ais_zero, 1e-12),
}


def run_checks(n: int, m: int, trials: int, rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    """Run every check on ``trials`` random models; report the worst error of each."""
    if n < 1 or m < 1 or trials < 1:
        raise ValueError("n, m and trials must be positive")
    if n + m > 16:
        raise ValueError("oracle checks enumerate the joint state space; need n + m <= 16")
    worst = {name: 0.0 for name in CHECKS}
    for _ in range(trials):
        params = RbmParams.random(n, m, rng, scale)
        for name, (fn, _) in CHECKS.items():
            worst[name] = max(worst[name], float(fn(params, rng)))
    return [CheckResult(name, worst[name], tol) for name, (_, tol) in CHECKS.items()]
