import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from pthmm.hmm_core import ModelSpec, ParamVector, StreamFamily, log_transition_matrices
from pthmm.priors import PriorConfig, gumbel_logpdf, log_prior, sample_prior, tempered_prior_demo

P, G = StreamFamily.POISSON, StreamFamily.GAMMA


def test_gumbel_logpdf_examples():
    assert gumbel_logpdf(0.0, 0.0) == -1.0
    assert gumbel_logpdf(3.7, 3.7) == -1.0
    total, _ = integrate.quad(lambda x: math.exp(gumbel_logpdf(x, 0.0)), -40, 40, epsabs=1e-13, limit=200)
    assert abs(total - 1.0) < 1e-8
    # max-type Gumbel as in scipy
    assert gumbel_logpdf(1.3, 0.2) == pytest.approx(stats.gumbel_r.logpdf(1.3, loc=0.2), rel=1e-13)


def test_log_prior_hand_evaluation():
    spec = ModelSpec(3, (P,))
    cfg = PriorConfig.default(spec)
    # Gamma(1.5, rate 0.5) has its mode at 1
    th = ParamVector.from_parts(spec, [1 / 3] * 3, np.zeros((3, 3)), [[1.0, 1.0, 1.0]], zeta=np.zeros(3))
    gamma_at_mode = 1.5 * math.log(0.5) - math.lgamma(1.5) + 0.5 * math.log(1.0) - 0.5 * 1.0
    expect = -3.0 - 6.0 + math.log(2.0) + 3 * gamma_at_mode
    assert log_prior(spec, th, cfg) == pytest.approx(expect, rel=1e-13)


def test_log_prior_support():
    spec = ModelSpec(2, (G,))
    cfg = PriorConfig.default(spec)
    th = ParamVector.from_parts(spec, [0.5, 0.5], np.zeros((2, 2)), [[[100.0, 200.0], [50.0, 50.0]]])
    assert np.isfinite(log_prior(spec, th, cfg))
    bad = th.copy()
    bad.values[spec.slice_of("y1").start] = 0.0
    assert log_prior(spec, bad, cfg) == -math.inf
    off = th.copy()
    off.values[spec.slice_of("delta")] = [0.7, 0.7]
    assert log_prior(spec, off, cfg) == -math.inf


def test_log_prior_row_shift_matches_closed_form():
    spec = ModelSpec(3, (P,))
    cfg = PriorConfig.default(spec)
    rng = np.random.default_rng(2)
    th = sample_prior(spec, cfg, rng)
    c, i = 0.37, 1
    shifted = ParamVector.from_parts(spec, th.delta, th.alpha0 + c * (np.arange(3)[:, None] == i),
                                     [th.emission(0)], zeta=th.zeta + c * (np.arange(3) == i))

    def term(u):
        return -u - math.exp(-u)

    z = th.zeta[i]
    delta = term(-(z + c)) - term(-z)
    for j in range(3):
        if j != i:
            u = -th.alpha0[i, j] - z
            delta += term(u - 2 * c) - term(u)
    assert log_prior(spec, shifted, cfg) - log_prior(spec, th, cfg) == pytest.approx(delta, abs=1e-12)


def test_prior_config_validation():
    spec = ModelSpec(2, (P, G))
    cfg = PriorConfig.default(spec)
    cfg.check(spec)
    with pytest.raises(ValueError):
        PriorConfig([1.0, -1.0], cfg.emission)
    with pytest.raises(ValueError):
        PriorConfig.default(spec, delta_concentration=[1.0, 1.0, 1.0]).check(spec)
    with pytest.raises(ValueError):
        PriorConfig.default(ModelSpec(2, (P,))).check(spec)


def test_sample_prior_is_seeded_and_valid():
    spec = ModelSpec(3, (P, G), covariate_levels=1)
    cfg = PriorConfig.default(spec)
    a, b = sample_prior(spec, cfg, 11), sample_prior(spec, cfg, 11)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.is_valid() and np.isfinite(log_prior(spec, a, cfg))


def test_prior_rows_are_exchangeable():
    spec = ModelSpec(3, (P,))
    cfg = PriorConfig.default(spec)
    rng = np.random.default_rng(3)
    rows = np.array([np.exp(log_transition_matrices(sample_prior(spec, cfg, rng))[0, 0]) for _ in range(20_000)])
    se = rows.std(axis=0, ddof=1) / math.sqrt(len(rows))
    assert np.all(np.abs(rows.mean(axis=0) - 1 / 3) < 3 * se)


def test_prior_rows_match_normalized_exponentials():
    # rows built from the logit hierarchy vs rows built as normalized -log U
    spec = ModelSpec(3, (P,))
    cfg = PriorConfig.default(spec)
    rng = np.random.default_rng(4)
    hier = np.array([np.exp(log_transition_matrices(sample_prior(spec, cfg, rng))[0, 2, 0]) for _ in range(20_000)])
    e = -np.log(np.random.default_rng(5).random((20_000, 3)))
    direct = e[:, 0] / e.sum(axis=1)
    assert stats.ks_2samp(hier, direct).pvalue > 0.01


def test_tempered_prior_demo_values():
    one = tempered_prior_demo(1.0, 100_000, seed=1)
    assert abs(one["mean_max"] - 11 / 18) < 4 * one["se_max"]
    mid = tempered_prior_demo(0.667, 100_000, seed=2)
    hot = tempered_prior_demo(0.25, 100_000, seed=3)
    assert one["mean_max"] < mid["mean_max"] < hot["mean_max"]
    np.testing.assert_allclose(one["rows"].sum(axis=1), 1.0, atol=1e-12)
    for bad in (0.0, 1.5, -1.0):
        with pytest.raises(ValueError):
            tempered_prior_demo(bad, 10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sampled_prior_always_in_support(seed):
    spec = ModelSpec(2, (P, G), covariate_levels=1)
    cfg = PriorConfig.default(spec)
    th = sample_prior(spec, cfg, seed)
    assert th.is_valid() and np.isfinite(log_prior(spec, th, cfg))


def test_batched_draws_give_dirichlet_rows_at_every_level():
    spec = ModelSpec(3, (P, G), covariate_levels=2)
    cfg = PriorConfig.default(spec)
    draws = sample_prior(spec, cfg, 6, size=20_000)
    gam = np.array([np.exp(log_transition_matrices(ParamVector(spec, v))) for v in draws[:5000]])
    for lvl in range(3):
        for i, j in ((0, 1), (1, 2), (2, 0)):
            assert stats.kstest(gam[:, lvl, i, j], stats.beta(1, 2).cdf).pvalue > 0.01
    assert all(np.isfinite(log_prior(spec, ParamVector(spec, v), cfg)) for v in draws[:200])
    np.testing.assert_array_equal(sample_prior(spec, cfg, 7, size=1)[0], sample_prior(spec, cfg, 7).values)
