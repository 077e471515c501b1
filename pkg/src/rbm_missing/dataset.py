"""Incomplete binary observations and datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "IncompleteObservation",
    "IncompleteDataset",
    "binarize",
    "apply_mask",
]


@dataclass(frozen=True)
class IncompleteObservation:
    """One data point: sorted observed indices and their binary values.

    The missing set is the complement of ``observed_indices`` in 0..n-1 and
    is computed on demand rather than stored.
    """

    n: int
    observed_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.observed_indices, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values).reshape(-1)
        if idx.size != vals.size:
            raise ValueError("observed_indices and values must have the same length")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.n or np.any(np.diff(idx) <= 0)):
            raise ValueError("observed indices must be strictly increasing and within range")
        if not np.all((vals == 0) | (vals == 1)):
            raise ValueError("observed values must be binary")
        idx.flags.writeable = False
        vals = vals.astype(np.uint8)
        vals.flags.writeable = False
        object.__setattr__(self, "observed_indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def complete(cls, x) -> "IncompleteObservation":
        x = np.asarray(x).reshape(-1)
        return cls(x.size, np.arange(x.size), x)

    @classmethod
    def from_dense(cls, x, observed_mask) -> "IncompleteObservation":
        x = np.asarray(x).reshape(-1)
        mask = np.asarray(observed_mask, dtype=bool).reshape(-1)
        idx = np.flatnonzero(mask)
        return cls(x.size, idx, x[idx])

    @property
    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.observed_indices] = True
        return mask

    @property
    def missing_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.observed_mask)

    def dense(self, fill: int = 0) -> np.ndarray:
        """Length-n uint8 vector with missing entries set to ``fill``."""
        out = np.full(self.n, fill, dtype=np.uint8)
        out[self.observed_indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, IncompleteObservation):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.observed_indices, other.observed_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass
class IncompleteDataset:
    """A list of observations sharing the visible dimension ``n``.

    Internally stored as a dense value matrix plus an observed-mask matrix,
    which is what the vectorized samplers and estimators consume.
    """

    n: int
    values: np.ndarray
    observed: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.uint8).reshape(-1, self.n)
        observed = np.asarray(self.observed, dtype=bool).reshape(-1, self.n)
        if values.shape != observed.shape:
            raise ValueError("values and observed mask shapes differ")
        if np.any(values > 1):
            raise ValueError("values must be binary")
        # canonical form: missing entries carry 0
        self.values = np.where(observed, values, 0).astype(np.uint8)
        self.observed = observed

    @classmethod
    def from_observations(
        cls, observations: Iterable[IncompleteObservation], n: int | None = None, provenance=None
    ) -> "IncompleteDataset":
        obs = list(observations)
        if n is None:
            if not obs:
                raise ValueError("n is required for an empty dataset")
            n = obs[0].n
        if any(o.n != n for o in obs):
            raise ValueError("all observations must share the same visible dimension")
        values = np.zeros((len(obs), n), dtype=np.uint8)
        observed = np.zeros((len(obs), n), dtype=bool)
        for k, o in enumerate(obs):
            values[k, o.observed_indices] = o.values
            observed[k, o.observed_indices] = True
        return cls(n, values, observed, dict(provenance or {}))

    @classmethod
    def complete(cls, data, provenance=None) -> "IncompleteDataset":
        data = np.asarray(data)
        if data.ndim != 2:
            raise ValueError("complete data must be a 2-D binary matrix")
        return cls(data.shape[1], data, np.ones(data.shape, dtype=bool), dict(provenance or {}))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, k: int) -> IncompleteObservation:
        return IncompleteObservation.from_dense(self.values[k], self.observed[k])

    def __iter__(self) -> Iterator[IncompleteObservation]:
        for k in range(len(self)):
            yield self[k]

    def subset(self, rows: Sequence[int] | np.ndarray) -> "IncompleteDataset":
        return IncompleteDataset(self.n, self.values[rows], self.observed[rows], dict(self.provenance))

    @property
    def missing_fraction(self) -> float:
        return float(1.0 - self.observed.mean()) if self.observed.size else 0.0

    @property
    def is_complete(self) -> bool:
        return bool(self.observed.all())

    def __eq__(self, other):
        if not isinstance(other, IncompleteDataset):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.observed, other.observed)
            and self.provenance == other.provenance
        )


def binarize(images, threshold: float = 127.5) -> np.ndarray:
    """Pixel > threshold becomes 1, everything else 0."""
    return (np.asarray(images) > threshold).astype(np.uint8)


def apply_mask(data, p: float, rng: np.random.Generator | int, provenance=None) -> IncompleteDataset:
    """Hide each entry independently with probability ``p``.

    ``rng`` may be a seed; in that case it is recorded as ``mask_seed``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"missing probability must lie in [0, 1], got {p}")
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("data must be a 2-D binary matrix")
    meta = dict(provenance or {})
    meta["p"] = float(p)
    if not isinstance(rng, np.random.Generator):
        meta["mask_seed"] = int(rng)
        rng = np.random.default_rng(int(rng))
    missing = rng.random(data.shape) < p
    return IncompleteDataset(data.shape[1], data, ~missing, meta)
