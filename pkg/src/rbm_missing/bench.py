"""Empirical variance of the plain and spatial moment estimators.

Sample sets are drawn exactly from the model's visible marginal (hiddens
drawn from their conditional), so both estimators see the same samples and
any difference in spread comes from the estimator alone.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import RbmParams
from .estimators import mci_estimates, smci_estimates
from .oracle import exact_free_moments, sample_exact

__all__ = ["VarianceRow", "variance_bench", "VARIANCE_HEADER"]

VARIANCE_HEADER = ("moment", "i", "j", "exact", "var_mci", "var_smci")


class VarianceRow(NamedTuple):
    moment: str
    i: int
    j: int
    exact: float
    var_mci: float
    var_smci: float


def variance_bench(params: RbmParams, K: int, num_sets: int, rng: np.random.Generator) -> list[VarianceRow]:
    """Variance over ``num_sets`` independent size-K sample sets, per moment.

    Rows cover E[v_i] (j = -1), E[h_j] (i = -1) and E[v_i h_j].
    """
    if K < 1 or num_sets < 2:
        raise ValueError("need K >= 1 and at least two sample sets")
    v, h = sample_exact(params, K * num_sets, rng)
    v = v.reshape(num_sets, K, params.n).astype(np.float64)
    h = h.reshape(num_sets, K, params.m).astype(np.float64)
    mci = mci_estimates(v, h)
    smci = smci_estimates(params, v)
    exact = exact_free_moments(params)

    rows = []
    for i in range(params.n):
        rows.append(VarianceRow("v", i, -1, float(exact.ev[i]),
                                float(mci.ev[:, i].var(ddof=1)), float(smci.ev[:, i].var(ddof=1))))
    for j in range(params.m):
        rows.append(VarianceRow("h", -1, j, float(exact.eh[j]),
                                float(mci.eh[:, j].var(ddof=1)), float(smci.eh[:, j].var(ddof=1))))
    for i in range(params.n):
        for j in range(params.m):
            rows.append(VarianceRow("vh", i, j, float(exact.evh[i, j]),
                                    float(mci.evh[:, i, j].var(ddof=1)), float(smci.evh[:, i, j].var(ddof=1))))
    return rows
