"""Gradient assembly, AdaMax and the training loop for incomplete data.

Two methods share one configuration surface:

``proposed``
    clamped chains start from mean-field initial points, free chains are
    persistent, and all moments come from the spatial estimators.
``lossy-cd``
    clamped and free chains start from uniform noise at every update and
    moments are plain sample averages of the paired (v, h) chain outputs.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ais import AisConfig, ais_log_partition, complete_data_log_likelihood
from .core import RbmParams
from .dataset import IncompleteDataset
from .estimators import MomentEstimates, mci_estimates, smci_estimates
from .io import save_checkpoint, write_metrics_csv
from .meanfield import mf_initial_points
from .oracle import Gradient, exact_log_likelihood
from .sampler import PersistentChains, block_gibbs, clamped_gibbs, pcd_step

__all__ = [
    "METHODS",
    "TrainConfig",
    "ConfigError",
    "AdaMax",
    "adamax_update",
    "xavier_init",
    "assemble_gradient",
    "approx_gradient_proposed",
    "approx_gradient_lossycd",
    "MetricsLog",
    "TrainResult",
    "train",
]

log = logging.getLogger(__name__)

METHODS = ("proposed", "lossy-cd")
EVAL_METHODS = ("auto", "exact", "ais", "none")
EXACT_EVAL_LIMIT = 20


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters of a training run.

    ``k_clamped``/``r_clamped`` are the per-datum clamped sample size and
    Gibbs steps; ``k_free``/``r_free`` the same for the free phase.
    ``missing_prob`` only documents how the training data were masked.
    """

    method: str = "proposed"
    m: int = 100
    batch_size: int = 128
    epochs: int = 100
    k_clamped: int = 1
    r_clamped: int = 16
    k_free: int = 128
    r_free: int = 16
    missing_prob: float = 0.0
    step_size: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mf_tol: float = 1e-6
    mf_max_iter: int = 1000
    mf_damping: float = 0.0
    seed: int = 0
    eval_every: int = 1
    eval_method: str = "auto"
    ais_temperatures: int = 1000
    ais_runs: int = 100
    checkpoint_every: int = 0
    record_time: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.eval_method not in EVAL_METHODS:
            raise ConfigError(f"eval_method must be one of {EVAL_METHODS}, got {self.eval_method!r}")
        if self.m < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("m and batch_size must be positive and epochs non-negative")
        if self.k_clamped < 1 or self.k_free < 1:
            raise ConfigError("sample sizes must be at least 1")
        if self.r_clamped < 0 or self.r_free < 0:
            raise ConfigError("chain step counts must be non-negative")
        if not 0.0 <= self.missing_prob <= 1.0:
            raise ConfigError("missing_prob must lie in [0, 1]")
        if not 0.0 <= self.mf_damping < 1.0:
            raise ConfigError("mf_damping must lie in [0, 1)")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string or typed values; unknown keys are an error."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(known[key].type, raw, key)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(kind, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


# -- optimizer --------------------------------------------------------------

class AdaMax:
    """AdaMax ascent on the flattened parameter vector (adds the step)."""

    def __init__(self, size: int, step_size=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.moment = np.zeros(size)
        self.inf_norm = np.zeros(size)
        self.t = 0

    @classmethod
    def from_config(cls, size: int, cfg: TrainConfig) -> "AdaMax":
        return cls(size, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.moment *= self.beta1
        self.moment += (1.0 - self.beta1) * grad
        np.maximum(self.beta2 * self.inf_norm, np.abs(grad), out=self.inf_norm)
        lr = self.step_size / (1.0 - self.beta1 ** self.t)
        return theta + lr * self.moment / (self.inf_norm + self.eps)


def adamax_update(state: AdaMax, params: RbmParams, grad: Gradient) -> RbmParams:
    theta = state.step(params.flat(), grad.flat())
    return RbmParams.from_flat(theta, params.n, params.m)


def xavier_init(n: int, m: int, rng: np.random.Generator) -> RbmParams:
    """Gaussian Xavier couplings with zero biases."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    W = rng.normal(0.0, math.sqrt(2.0 / (n + m)), size=(n, m))
    return RbmParams(np.zeros(n), np.zeros(m), W)


# -- gradients --------------------------------------------------------------

def assemble_gradient(data, observed, clamped: MomentEstimates, free: MomentEstimates) -> Gradient:
    """Minibatch log-likelihood gradient from clamped and free moment estimates.

    ``clamped`` holds per-datum arrays (B, n), (B, m), (B, n, m).  Observed
    visibles use their data value directly; only missing ones take the
    clamped estimates.
    """
    d = np.asarray(data, dtype=np.float64)
    obs = np.asarray(observed, dtype=bool)
    pos_b = np.where(obs, d, clamped.ev).mean(axis=0)
    pos_c = clamped.eh.mean(axis=0)
    pos_W = np.where(obs[:, :, None], d[:, :, None] * clamped.eh[:, None, :], clamped.evh).mean(axis=0)
    return Gradient(pos_b - free.ev, pos_c - free.eh, pos_W - free.evh)


def _batch_arrays(batch):
    if isinstance(batch, IncompleteDataset):
        return batch.values.astype(np.float64), batch.observed
    d, o = batch
    return np.asarray(d, dtype=np.float64), np.asarray(o, dtype=bool)


def approx_gradient_proposed(params: RbmParams, batch, chains: PersistentChains, cfg: TrainConfig, rng):
    """Gradient estimate of the proposed method.

    Returns ``(gradient, updated chains, mean-field failures)``.
    """
    d, obs = _batch_arrays(batch)
    if d.shape[0] == 0:
        raise ValueError("empty minibatch")
    B, n = d.shape
    K = cfg.k_clamped
    init, failures = mf_initial_points(
        params, d, obs, K, rng, cfg.mf_tol, cfg.mf_max_iter, cfg.mf_damping
    )
    d_rep = np.repeat(d, K, axis=0)
    o_rep = np.repeat(obs, K, axis=0)
    state = clamped_gibbs(params, d_rep, o_rep, init.reshape(B * K, n), cfg.r_clamped, rng)
    clamped = smci_estimates(params, state.v.reshape(B, K, n), ~obs[:, None, :])

    free_v, chains = pcd_step(chains, params, cfg.r_free, rng)
    free = smci_estimates(params, free_v)
    return assemble_gradient(d, obs, clamped, free), chains, failures


def approx_gradient_lossycd(params: RbmParams, batch, cfg: TrainConfig, rng) -> Gradient:
    """Gradient estimate of Lossy-CD: uniform restarts, plain sample averages."""
    d, obs = _batch_arrays(batch)
    if d.shape[0] == 0:
        raise ValueError("empty minibatch")
    B, n = d.shape
    K = cfg.k_clamped
    d_rep = np.repeat(d, K, axis=0)
    o_rep = np.repeat(obs, K, axis=0)
    init = (rng.random((B * K, n)) < 0.5).astype(np.float64)
    state = clamped_gibbs(params, d_rep, o_rep, init, cfg.r_clamped, rng)
    clamped = mci_estimates(state.v.reshape(B, K, n), state.h.reshape(B, K, params.m))

    free_init = (rng.random((cfg.k_free, n)) < 0.5).astype(np.float64)
    free_state = block_gibbs(params, free_init, cfg.r_free, rng)
    free = mci_estimates(free_state.v, free_state.h)
    return assemble_gradient(d, obs, clamped, free)


# -- training loop ----------------------------------------------------------

@dataclass
class MetricsLog:
    records: list = field(default_factory=list)

    def append(self, epoch, split, loglik, grad_norm, mf_fail_rate, seconds):
        if self.records and epoch < self.records[-1]["epoch"]:
            raise ValueError("metrics must be appended in epoch order")
        self.records.append({
            "epoch": int(epoch),
            "split": split,
            "loglik": float(loglik),
            "grad_norm": float(grad_norm),
            "mf_fail_rate": float(mf_fail_rate),
            "seconds": float(seconds),
        })

    def series(self, split: str):
        rows = [r for r in self.records if r["split"] == split]
        return np.array([r["epoch"] for r in rows]), np.array([r["loglik"] for r in rows])

    def write_csv(self, path) -> None:
        write_metrics_csv(path, self.records)


@dataclass
class TrainResult:
    params: RbmParams
    metrics: MetricsLog
    update_seconds: list = field(default_factory=list)


def _evaluate(params, eval_sets, cfg, rng):
    """Log-likelihood of every evaluation split (exact for small n, AIS otherwise)."""
    method = cfg.eval_method
    if method == "auto":
        method = "exact" if params.n <= EXACT_EVAL_LIMIT else "ais"
    out = {}
    if method == "exact":
        for name, ds in eval_sets.items():
            out[name] = exact_log_likelihood(params, ds)
    else:
        res = ais_log_partition(params, AisConfig(cfg.ais_temperatures, cfg.ais_runs), rng)
        for name, ds in eval_sets.items():
            out[name] = complete_data_log_likelihood(params, ds, res.log_z)
    return out


def _as_eval_dataset(data) -> IncompleteDataset:
    if isinstance(data, IncompleteDataset):
        return data
    return IncompleteDataset.complete(np.asarray(data))


def train(
    cfg: TrainConfig,
    dataset: IncompleteDataset,
    eval_sets: dict | None = None,
    checkpoint_dir=None,
    init_params: RbmParams | None = None,
) -> TrainResult:
    """Mini-batch AdaMax ascent of the incomplete-data log-likelihood.

    ``eval_sets`` maps split names to datasets (complete matrices or
    incomplete datasets) evaluated at epoch 0 and every ``eval_every``
    epochs.  Checkpoints go to ``checkpoint_dir`` if given.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if cfg.eval_method == "none":
        eval_sets = {}
    eval_sets = {k: _as_eval_dataset(v) for k, v in (eval_sets or {}).items()}
    n, N = dataset.n, len(dataset)
    init_ss, shuffle_ss, sample_ss, eval_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    rng = np.random.default_rng(sample_ss)
    eval_rng = np.random.default_rng(eval_ss)

    params = init_params if init_params is not None else xavier_init(n, cfg.m, init_rng)
    if params.n != n or params.m != cfg.m:
        raise ValueError("initial parameters do not match the data width / hidden count")
    opt = AdaMax.from_config(n + cfg.m + n * cfg.m, cfg)
    chains = PersistentChains.uniform(cfg.k_free, n, rng) if cfg.method == "proposed" else None

    metrics = MetricsLog()
    update_seconds = []
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    def elapsed():
        return time.perf_counter() - t_start if cfg.record_time else float("nan")

    def log_epoch(epoch, grad_norm, fail_rate):
        if eval_sets:
            for name, value in _evaluate(params, eval_sets, cfg, eval_rng).items():
                metrics.append(epoch, name, value, grad_norm, fail_rate, elapsed())
        else:
            metrics.append(epoch, "none", float("nan"), grad_norm, fail_rate, elapsed())

    log_epoch(0, float("nan"), float("nan"))
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(N)
        norms = []
        failures = solves = 0
        for start in range(0, N, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            batch = (dataset.values[rows].astype(np.float64), dataset.observed[rows])
            t0 = time.perf_counter()
            if cfg.method == "proposed":
                grad, chains, fails = approx_gradient_proposed(params, batch, chains, cfg, rng)
                failures += fails
                solves += rows.size * cfg.k_clamped
            else:
                grad = approx_gradient_lossycd(params, batch, cfg, rng)
            params = adamax_update(opt, params, grad)
            update_seconds.append(time.perf_counter() - t0)
            norms.append(grad.norm())
        fail_rate = failures / solves if solves else 0.0
        if failures:
            log.info("epoch %d: %d of %d mean-field solves did not converge", epoch, failures, solves)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            log_epoch(epoch, float(np.mean(norms)), fail_rate)
        if ckpt_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_dir / f"epoch_{epoch:05d}.ckpt", params, cfg.seed, epoch)
    if ckpt_dir is not None:
        save_checkpoint(ckpt_dir / "final.ckpt", params, cfg.seed, cfg.epochs)
    return TrainResult(params, metrics, update_seconds)
