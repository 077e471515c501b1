import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from rbm_missing.core import RbmParams
from rbm_missing.dataset import IncompleteObservation
from rbm_missing.estimators import (
    FieldCache,
    SampleSet,
    mci_estimates,
    mci_moments,
    mixed_term_vh,
    pair_log_odds,
    pair_term_logodds,
    smci_estimates,
    smci_h,
    smci_terms,
    smci_v,
    smci_vh,
)
from rbm_missing.oracle import (
    all_configurations,
    conditional_terms_bruteforce,
    exact_clamped_moments,
    exact_free_moments,
    visible_marginal,
)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 6), st.sampled_from([0.5, 2.0, 8.0]))
def test_summands_match_enumeration(seed, n, m, scale):
    r = np.random.default_rng(seed)
    p = RbmParams.random(n, m, r, scale)
    v = (r.random((3, n)) < 0.5).astype(float)
    tv, th, tvh = smci_terms(p, v)
    for k in range(3):
        ev, eh, evh = conditional_terms_bruteforce(p, v[k])
        assert np.abs(tv[k] - ev).max() < 1e-10
        assert np.abs(th[k] - eh).max() < 1e-10
        assert np.abs(tvh[k] - evh).max() < 1e-10


def test_pair_log_odds_identity():
    a = np.array([-3.0, 0.0, 2.5, 40.0])
    b = np.array([1.0, -2.0, 0.5, -40.0])
    assert np.allclose(pair_log_odds(a, b), logit(expit(a) * expit(b)), atol=1e-10)
    # saturated arguments stay finite where the literal form breaks down
    assert np.isfinite(pair_log_odds(np.array([800.0]), np.array([800.0]))).all()


def test_reference_and_fast_pair_terms_agree(rng):
    p = RbmParams.random(6, 4, rng, scale=3.0)
    v = (rng.random((5, 6)) < 0.5).astype(float)
    cache = FieldCache(p, v)
    ref = pair_term_logodds(cache.tau_excl(), cache.phi_excl(), p.W[None])
    _, _, tvh = smci_terms(p, v)
    assert np.abs(ref - tvh).max() < 1e-12


def test_field_cache_identities(rng):
    p = RbmParams.random(5, 3, rng)
    v = (rng.random((4, 5)) < 0.5).astype(float)
    cache = FieldCache(p, v)
    te = cache.tau_excl()
    assert np.abs(te + p.W[None] * v[:, :, None] - cache.tau[:, None, :]).max() < 1e-12
    # phi_i is the exact log-odds of v_i given the rest
    tv, _, _ = smci_terms(p, v)
    assert np.abs(cache.phi() - logit(tv)).max() < 1e-9
    delta = cache.phi()[:, :, None] - cache.phi_excl()
    assert np.abs(delta.sum(-1) - (cache.phi() - p.b)).max() < 1e-12


def test_estimates_in_unit_interval_at_saturation(rng):
    p = RbmParams.random(6, 5, rng, scale=50.0)
    v = (rng.random((10, 6)) < 0.5).astype(float)
    est = smci_estimates(p, v)
    for arr in (est.ev, est.eh, est.evh):
        assert np.all(np.isfinite(arr))
        assert np.all((arr >= 0) & (arr <= 1))


def test_fused_estimates_match_terms(rng):
    p = RbmParams.random(7, 4, rng, scale=2.0)
    v = (rng.random((3, 9, 7)) < 0.5).astype(float)
    free = rng.random((3, 1, 7)) < 0.6
    tv, th, tvh = smci_terms(p, v, free)
    est = smci_estimates(p, v, free)
    assert np.array_equal(np.isnan(est.ev), np.isnan(tv.mean(1)))
    assert np.nanmax(np.abs(est.ev - tv.mean(1))) < 1e-14
    assert np.abs(est.eh - th.mean(1)).max() < 1e-14
    assert np.nanmax(np.abs(est.evh - tvh.mean(1))) < 1e-14


def test_non_free_entries_are_nan(small_model, rng):
    v = (rng.random((3, 5)) < 0.5).astype(float)
    free = np.array([True, False, True, True, False])
    tv, th, tvh = smci_terms(small_model, v, free)
    assert np.isnan(tv[:, ~free]).all() and not np.isnan(tv[:, free]).any()
    assert np.isnan(tvh[:, ~free]).all()
    assert not np.isnan(th).any()


def test_exhaustive_unbiasedness_free(rng):
    p = RbmParams.random(6, 4, rng)
    configs, probs = visible_marginal(p)
    tv, th, tvh = smci_terms(p, configs)
    exact = exact_free_moments(p)
    assert np.abs(probs @ tv - exact.ev).max() < 1e-12
    assert np.abs(probs @ th - exact.eh).max() < 1e-12
    assert np.abs(np.einsum("s,sij->ij", probs, tvh) - exact.evh).max() < 1e-12


def test_exhaustive_unbiasedness_clamped(rng):
    p = RbmParams.random(7, 3, rng)
    obs = IncompleteObservation(7, [0, 4, 6], [1, 0, 1])
    miss = obs.missing_indices
    exact = exact_clamped_moments(p, obs)
    # P(v_M | d) from the clamped joint
    sub = all_configurations(miss.size).astype(float)
    full = np.tile(obs.dense().astype(float), (sub.shape[0], 1))
    full[:, miss] = sub
    lf = p.b @ full.T + np.logaddexp(0, p.c + full @ p.W).sum(1)
    w = np.exp(lf - lf.max())
    w /= w.sum()
    s = SampleSet(full, ~obs.observed_mask)
    tv, th, tvh = smci_terms(p, s.visibles, s.free)
    assert np.abs(w @ tv[:, miss] - exact.ev[miss]).max() < 1e-12
    assert np.abs(w @ th - exact.eh).max() < 1e-12
    assert np.abs(np.einsum("s,sij->ij", w, tvh[:, miss]) - exact.evh[miss]).max() < 1e-12


def test_sample_set_wrappers(small_model, rng):
    obs = IncompleteObservation(5, [0, 2], [1, 1])
    s = SampleSet.clamped(obs, (rng.random((6, 3)) < 0.5))
    assert s.K == 6 and list(s.free_indices) == [1, 3, 4]
    assert np.all(s.visibles[:, [0, 2]] == 1)
    tv, th, tvh = smci_terms(small_model, s.visibles, s.free)
    assert np.allclose(smci_v(small_model, s), tv[:, s.free].mean(0))
    assert np.allclose(smci_h(small_model, s), th.mean(0))
    assert np.allclose(smci_vh(small_model, s), tvh[:, s.free].mean(0))
    u = SampleSet.unclamped(np.zeros((2, 5)))
    assert u.free.all()
    with pytest.raises(ValueError):
        SampleSet(np.zeros((2, 5)), np.ones(4, dtype=bool))


def test_mci_moments(rng):
    v = (rng.random((8, 3)) < 0.5).astype(float)
    h = (rng.random((8, 2)) < 0.5).astype(float)
    est = mci_moments(v, h)
    assert np.allclose(est.evh, np.mean(v[:, :, None] * h[:, None, :], axis=0))
    batched = mci_estimates(v[None], h[None])
    assert np.allclose(batched.evh[0], est.evh)
    with pytest.raises(ValueError):
        mci_moments(v, h[:5])
    with pytest.raises(ValueError):
        smci_estimates(RbmParams.zeros(3, 2), np.zeros((0, 3)))


def test_mixed_term():
    assert mixed_term_vh(0, 0.7) == 0
    assert mixed_term_vh(1, 0.7) == 0.7


def test_spatial_estimates_with_single_sample_are_exact_for_hiddens(rng):
    p = RbmParams.random(4, 3, rng)
    d = np.array([[1.0, 0.0, 0.0, 1.0]])
    est = smci_estimates(p, d)
    assert np.allclose(est.eh, exact_clamped_moments(p, IncompleteObservation.complete(d[0])).eh, atol=1e-14)
