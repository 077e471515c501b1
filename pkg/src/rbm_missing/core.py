"""RBM parameterization, energy, layer conditionals and stable scalar kernels.

Index convention: visibles are 0..n-1 and hiddens 0..m-1.  ``W`` is stored
dense with shape (n, m), row i holding the couplings of visible i.  Row access
(visible fields) uses ``W`` directly and column access (hidden fields) goes
through the ``W.T`` view; numpy handles both with BLAS, so no transposed copy
is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

__all__ = [
    "RbmParams",
    "energy",
    "local_field_visible",
    "local_field_hidden",
    "visible_fields",
    "hidden_fields",
    "conditional_means_visible",
    "conditional_means_hidden",
    "stable_sigmoid",
    "stable_softplus",
    "stable_logit",
    "free_energy_terms",
]


def stable_sigmoid(x):
    """Logistic function 1/(1+exp(-x)), safe for any finite input."""
    return expit(x)


def stable_softplus(x):
    """ln(1 + e^x) without overflow; returns x itself far in the right tail."""
    x = np.asarray(x, dtype=np.float64)
    out = np.logaddexp(0.0, x)
    return out if out.ndim else float(out)


def stable_logit(p):
    """Inverse of the sigmoid.  Raises ``ValueError`` outside the open unit interval."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise ValueError("logit is only defined on the open interval (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    return log_expit(x)


@dataclass(frozen=True)
class RbmParams:
    """Biases ``b`` (visible), ``c`` (hidden) and couplings ``W`` (n x m)."""

    b: np.ndarray
    c: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        c = np.array(self.c, dtype=np.float64).reshape(-1)
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape != (b.size, c.size):
            raise ValueError(
                f"W must have shape (len(b), len(c)) = ({b.size}, {c.size}), got {W.shape}"
            )
        if b.size < 1 or c.size < 1:
            raise ValueError("an RBM needs at least one visible and one hidden unit")
        for name, arr in (("b", b), ("c", c), ("W", W)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} has non-finite entries")
            arr.flags.writeable = False
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def m(self) -> int:
        return self.c.size

    @classmethod
    def zeros(cls, n: int, m: int) -> "RbmParams":
        return cls(np.zeros(n), np.zeros(m), np.zeros((n, m)))

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator, scale: float = 1.0) -> "RbmParams":
        """Gaussian parameters, used mostly to build test instances."""
        return cls(
            scale * rng.standard_normal(n),
            scale * rng.standard_normal(m),
            scale * rng.standard_normal((n, m)),
        )

    def with_couplings(self, W) -> "RbmParams":
        return RbmParams(self.b, self.c, W)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.b, self.c, self.W.ravel()])

    @classmethod
    def from_flat(cls, theta: np.ndarray, n: int, m: int) -> "RbmParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != n + m + n * m:
            raise ValueError("flat parameter vector has the wrong length")
        return cls(theta[:n], theta[n:n + m], theta[n + m:].reshape(n, m))

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (
            np.array_equal(self.b, other.b)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.W, other.W)
        )

    __hash__ = None


def _check_binary(x, length: int, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != length:
        raise ValueError(f"{what} has length {x.shape[-1]}, expected {length}")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError(f"{what} must be binary")
    return x.astype(np.float64)


def energy(params: RbmParams, v, h) -> float | np.ndarray:
    """E(v, h) = -b.v - c.h - v^T W h.  Broadcasts over leading batch axes."""
    v = _check_binary(v, params.n, "v")
    h = _check_binary(h, params.m, "h")
    out = -(v @ params.b) - (h @ params.c) - np.einsum("...i,ij,...j->...", v, params.W, h)
    return out if np.ndim(out) else float(out)


def visible_fields(params: RbmParams, h) -> np.ndarray:
    """lambda(h) = b + W h for every visible unit (batched over rows of ``h``)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.m:
        raise ValueError(f"hidden vector has length {h.shape[-1]}, expected {params.m}")
    return params.b + h @ params.W.T


def hidden_fields(params: RbmParams, v) -> np.ndarray:
    """tau(v) = c + W^T v for every hidden unit (batched over rows of ``v``)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.n:
        raise ValueError(f"visible vector has length {v.shape[-1]}, expected {params.n}")
    return params.c + v @ params.W


def local_field_visible(params: RbmParams, h, i: int) -> float:
    if not 0 <= i < params.n:
        raise IndexError(f"visible index {i} out of range for n={params.n}")
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (params.m,):
        raise ValueError(f"hidden vector has shape {h.shape}, expected ({params.m},)")
    return float(params.b[i] + params.W[i] @ h)


def local_field_hidden(params: RbmParams, v, j: int) -> float:
    if not 0 <= j < params.m:
        raise IndexError(f"hidden index {j} out of range for m={params.m}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.n,):
        raise ValueError(f"visible vector has shape {v.shape}, expected ({params.n},)")
    return float(params.c[j] + v @ params.W[:, j])


def conditional_means_visible(params: RbmParams, h) -> np.ndarray:
    """P(v_i = 1 | h) for every i."""
    return expit(visible_fields(params, h))


def conditional_means_hidden(params: RbmParams, v) -> np.ndarray:
    """P(h_j = 1 | v) for every j."""
    return expit(hidden_fields(params, v))


def free_energy_terms(params: RbmParams, v) -> np.ndarray:
    """Unnormalized log marginal of visibles: b.v + sum_j softplus(tau_j(v)).

    The hidden layer is summed analytically, so ``exp`` of this is
    sum_h exp(-E(v, h)).
    """
    v = np.asarray(v, dtype=np.float64)
    return v @ params.b + np.logaddexp(0.0, hidden_fields(params, v)).sum(axis=-1)
