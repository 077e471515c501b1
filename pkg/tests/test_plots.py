import numpy as np

from rbm_missing.bench import VarianceRow, variance_bench
from rbm_missing.core import RbmParams
from rbm_missing.plots import plot_loglik, plot_variances

PNG = b"\x89PNG\r\n\x1a\n"


def test_loglik_figure(tmp_path):
    recs = [
        {"epoch": e, "split": s, "loglik": -5.0 + 0.1 * e if e else float("nan")}
        for e in range(4) for s in ("train", "test")
    ]
    out = plot_loglik(recs, tmp_path / "ll.png", title="x")
    assert out.read_bytes()[:8] == PNG


def test_loglik_figure_without_values(tmp_path):
    recs = [{"epoch": 0, "split": "none", "loglik": float("nan")}]
    assert plot_loglik(recs, tmp_path / "e.png").exists()


def test_variance_figure(tmp_path):
    rows = [VarianceRow("v", 0, -1, 0.5, 0.01, 0.002), VarianceRow("vh", 0, 0, 0.2, 0.02, 0.01)]
    assert plot_variances(rows, tmp_path / "v.png").read_bytes()[:8] == PNG


def test_variance_bench_rows(rng):
    p = RbmParams.random(3, 2, rng)
    rows = variance_bench(p, 10, 20, rng)
    assert [r.moment for r in rows] == ["v"] * 3 + ["h"] * 2 + ["vh"] * 6
    assert all(r.var_mci >= 0 and r.var_smci >= 0 for r in rows)
    assert all(0 <= r.exact <= 1 for r in rows)
