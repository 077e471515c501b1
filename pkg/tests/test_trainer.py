import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbm_missing.core import RbmParams
from rbm_missing.dataset import IncompleteDataset, apply_mask
from rbm_missing.estimators import MomentEstimates
from rbm_missing.io import load_checkpoint
from rbm_missing.oracle import exact_clamped_moments, exact_free_moments, exact_gradient, sample_exact
from rbm_missing.sampler import PersistentChains
from rbm_missing.trainer import (
    AdaMax,
    ConfigError,
    TrainConfig,
    adamax_update,
    approx_gradient_lossycd,
    approx_gradient_proposed,
    assemble_gradient,
    train,
    xavier_init,
)

from conftest import random_incomplete


# -- configuration --------------------------------------------------------------

def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.k_clamped, cfg.r_clamped, cfg.k_free, cfg.r_free) == (1, 16, 128, 16)
    assert cfg.batch_size == 128 and cfg.step_size == 0.002
    assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)


def test_config_text_round_trip():
    cfg = TrainConfig(method="lossy-cd", m=7, epochs=3, record_time=True, step_size=0.01)
    assert TrainConfig.from_text(cfg.to_text()) == cfg


def test_config_parse_errors():
    with pytest.raises(ConfigError, match="unknown"):
        TrainConfig.from_text("m = 3\nhidden = 4\n")
    with pytest.raises(ConfigError, match="duplicate"):
        TrainConfig.from_text("m = 3\nm = 4\n")
    with pytest.raises(ConfigError):
        TrainConfig.from_text("m 3\n")
    with pytest.raises(ConfigError):
        TrainConfig.from_text("m = three\n")
    with pytest.raises(ConfigError):
        TrainConfig.from_text("method = cd\n")
    with pytest.raises(ConfigError):
        TrainConfig(mf_damping=1.0)
    cfg = TrainConfig.from_text("# comment\nm = 3   # trailing\nrecord_time = yes\n")
    assert cfg.m == 3 and cfg.record_time


# -- optimizer and init ---------------------------------------------------------

def test_adamax_first_step_is_signed_step_size():
    opt = AdaMax(3, step_size=0.002)
    theta = opt.step(np.zeros(3), np.array([5.0, -0.1, 0.0]))
    assert np.allclose(theta, [0.002, -0.002, 0.0], atol=1e-9)


def test_adamax_matches_reference_recursion(rng):
    grads = rng.normal(size=(10, 4))
    opt = AdaMax(4, step_size=0.01, beta1=0.8, beta2=0.95, eps=1e-8)
    theta = np.zeros(4)
    m = u = np.zeros(4)
    ref = np.zeros(4)
    for t, g in enumerate(grads, 1):
        theta = opt.step(theta, g)
        m = 0.8 * m + 0.2 * g
        u = np.maximum(0.95 * u, np.abs(g))
        ref = ref + 0.01 / (1 - 0.8**t) * m / (u + 1e-8)
    assert np.allclose(theta, ref, atol=1e-14)


def test_adamax_update_ascends_quadratic():
    # maximize -|theta - 1|^2 starting from zero
    p = RbmParams.zeros(2, 1)
    opt = AdaMax(5, step_size=0.05)
    for _ in range(400):
        g = 1.0 - p.flat()
        p = adamax_update(opt, p, type("G", (), {"flat": lambda self, g=g: g})())
    assert np.allclose(p.flat(), 1.0, atol=0.05)


def test_xavier_init(rng):
    p = xavier_init(300, 100, rng)
    assert np.all(p.b == 0) and np.all(p.c == 0)
    assert p.W.std() == pytest.approx(math.sqrt(2 / 400), rel=0.02)


# -- gradients ------------------------------------------------------------------

def test_assemble_with_exact_moments_is_exact_gradient(rng):
    p = RbmParams.random(5, 3, rng)
    ds = random_incomplete(rng, 6, 5, 0.4)
    cms = [exact_clamped_moments(p, o) for o in ds]
    clamped = MomentEstimates(np.stack([c.ev for c in cms]), np.stack([c.eh for c in cms]),
                              np.stack([c.evh for c in cms]), "exact")
    f = exact_free_moments(p)
    free = MomentEstimates(f.ev, f.eh, f.evh, "exact")
    g = assemble_gradient(ds.values.astype(float), ds.observed, clamped, free)
    assert np.abs(g.flat() - exact_gradient(p, ds).flat()).max() < 1e-12


@pytest.mark.parametrize("method", ["proposed", "lossy-cd"])
def test_approx_gradient_close_to_exact(rng, method):
    p = RbmParams.random(5, 3, rng, scale=0.5)
    ds = random_incomplete(rng, 8, 5, 0.4)
    cfg = TrainConfig(method=method, m=3, k_clamped=200, k_free=4000, r_clamped=20, r_free=20)
    batch = (ds.values.astype(float), ds.observed)
    if method == "proposed":
        g, _, fails = approx_gradient_proposed(p, batch, PersistentChains.uniform(4000, 5, rng), cfg, rng)
        assert fails == 0
    else:
        g = approx_gradient_lossycd(p, batch, cfg, rng)
    assert np.abs(g.flat() - exact_gradient(p, ds).flat()).max() < 0.05


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_proposed_gradient_is_bounded(seed):
    # every moment estimate lies in [0, 1], so each gradient entry lies in [-1, 1]
    r = np.random.default_rng(seed)
    p = RbmParams.random(6, 4, r, scale=3.0)
    ds = random_incomplete(r, 5, 6, 0.5)
    cfg = TrainConfig(m=4, k_free=8, r_clamped=2, r_free=2)
    g, chains, _ = approx_gradient_proposed(p, (ds.values.astype(float), ds.observed),
                                            PersistentChains.uniform(8, 6, r), cfg, r)
    assert np.all(np.abs(g.flat()) <= 1.0 + 1e-12)
    assert chains.age == 1


# -- training loop ----------------------------------------------------------------

@pytest.fixture
def planted(rng):
    p = RbmParams(np.zeros(8), np.zeros(4), rng.normal(0, 1.5, (8, 4)))
    v, _ = sample_exact(p, 120, rng)
    return v.astype(np.uint8)


def test_training_improves_likelihood(planted):
    ds = apply_mask(planted, 0.3, 0)
    cfg = TrainConfig(m=4, batch_size=20, epochs=15, k_free=32, step_size=0.01, eval_every=5)
    res = train(cfg, ds, {"train": planted})
    epochs, ll = res.metrics.series("train")
    assert list(epochs) == [0, 5, 10, 15]
    assert ll[-1] > ll[0] + 0.5


def test_training_deterministic(planted, tmp_path):
    ds = apply_mask(planted, 0.5, 1)
    cfg = TrainConfig(m=4, batch_size=30, epochs=3, k_free=16, seed=9, checkpoint_every=1)
    a = train(cfg, ds, {"train": planted}, checkpoint_dir=tmp_path / "a")
    b = train(cfg, ds, {"train": planted}, checkpoint_dir=tmp_path / "b")
    assert a.params == b.params
    # repr so that NaN entries compare equal
    assert repr(a.metrics.records) == repr(b.metrics.records)
    for name in ("epoch_00001.ckpt", "epoch_00003.ckpt", "final.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ck = load_checkpoint(tmp_path / "a" / "final.ckpt")
    assert ck.epoch == 3 and ck.seed == 9 and ck.params == a.params


def test_training_seed_matters(planted):
    ds = apply_mask(planted, 0.5, 1)
    a = train(TrainConfig(m=4, epochs=1, k_free=8, seed=1, eval_method="none"), ds)
    b = train(TrainConfig(m=4, epochs=1, k_free=8, seed=2, eval_method="none"), ds)
    assert a.params != b.params


def test_lossy_cd_runs_and_records(planted):
    ds = IncompleteDataset.complete(planted)
    cfg = TrainConfig(method="lossy-cd", m=4, batch_size=40, epochs=2, k_free=16, eval_method="none", record_time=True)
    res = train(cfg, ds)
    assert [r["split"] for r in res.metrics.records] == ["none"] * 3
    assert len(res.update_seconds) == 6
    assert np.isfinite(res.metrics.records[-1]["seconds"])
    assert res.metrics.records[-1]["mf_fail_rate"] == 0.0


def test_time_column_off_by_default(planted):
    res = train(TrainConfig(m=4, epochs=1, k_free=8, eval_method="none"), IncompleteDataset.complete(planted))
    assert all(np.isnan(r["seconds"]) for r in res.metrics.records)


def test_train_input_checks(planted):
    ds = IncompleteDataset.complete(planted)
    with pytest.raises(ValueError):
        train(TrainConfig(m=4), ds.subset(np.arange(0)))
    with pytest.raises(ValueError):
        train(TrainConfig(m=5, epochs=1), ds, init_params=RbmParams.zeros(8, 4))


def test_ais_evaluation_path(planted):
    ds = IncompleteDataset.complete(planted)
    cfg = TrainConfig(m=4, epochs=1, k_free=8, eval_method="ais", ais_temperatures=300, ais_runs=30)
    res = train(cfg, ds, {"train": planted})
    exact = train(TrainConfig(m=4, epochs=1, k_free=8, eval_method="exact"), ds, {"train": planted})
    assert res.params == exact.params
    assert res.metrics.records[-1]["loglik"] == pytest.approx(exact.metrics.records[-1]["loglik"], abs=0.1)


@pytest.fixture(scope="module")
def tiny_instance():
    r = np.random.default_rng(11)
    p = RbmParams(np.zeros(6), np.zeros(3), r.normal(0, 1.5, (6, 3)))
    v, _ = sample_exact(p, 50, r)
    v = v.astype(np.uint8)
    return v, apply_mask(v, 0.3, 0)


def _tiny_run(tiny_instance, method, seed):
    v, ds = tiny_instance
    cfg = TrainConfig(method=method, m=3, batch_size=10, epochs=10, k_free=32,
                      step_size=0.005, seed=seed, eval_every=1)
    return train(cfg, ds, {"train": v}).metrics.series("train")[1]


def test_tiny_instance_monotone_and_beats_lossy(tiny_instance):
    runs = [_tiny_run(tiny_instance, "proposed", s) for s in range(5)]
    assert sum(bool(np.all(np.diff(ll) > 0)) for ll in runs) >= 4
    lossy = [_tiny_run(tiny_instance, "lossy-cd", s) for s in range(5)]
    assert np.mean([ll[-1] for ll in runs]) >= np.mean([ll[-1] for ll in lossy])
