import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pthmm.diagnostics import (ModeRegion, ess_basic, interval_table, relabel_by_ordering, running_weight, split_rhat,
                               suggest_threshold, swap_summary)
from pthmm.hmm_core import ModelSpec, ParamVector, StreamFamily
from pthmm.store import ReplicaTrajectory, SampleStore

SPEC = ModelSpec(3, (StreamFamily.POISSON, StreamFamily.GAMMA), covariate_levels=1)


def _store(values):
    values = np.atleast_2d(values)
    return SampleStore(SPEC.coordinate_names, np.arange(len(values)), values)


def _draw(means, seed=0):
    rng = np.random.default_rng(seed)
    a0 = rng.normal(size=(3, 3))
    a1 = rng.normal(size=(1, 3, 3))
    th = ParamVector.from_parts(SPEC, rng.dirichlet(np.ones(3)), a0, [rng.gamma(2, size=3), [means, [5.0, 6.0, 7.0]]],
                                zeta=rng.normal(size=3), alpha1=a1)
    return th


CONSTRAINT = ["y2.mean[1]", "y2.mean[2]", "y2.mean[3]"]


def test_relabel_sorts_and_moves_every_block():
    th = _draw([216.0, 33.0, 112.0])
    out = relabel_by_ordering(_store(th.values), CONSTRAINT)
    new = ParamVector(SPEC, out.values[0])
    perm = [1, 2, 0]  # new state a is old state perm[a]
    np.testing.assert_array_equal(new.emission("y2")[0], [33.0, 112.0, 216.0])
    np.testing.assert_array_equal(new.emission("y2")[1], [6.0, 7.0, 5.0])
    np.testing.assert_array_equal(new.delta, th.delta[perm])
    np.testing.assert_array_equal(new.zeta, th.zeta[perm])
    np.testing.assert_array_equal(new.alpha0, th.alpha0[np.ix_(perm, perm)])
    np.testing.assert_array_equal(new.alpha1[0], th.alpha1[0][np.ix_(perm, perm)])


def test_relabel_identity_and_idempotence():
    ordered = _draw([1.0, 2.0, 3.0])
    same = relabel_by_ordering(_store(ordered.values), CONSTRAINT)
    np.testing.assert_array_equal(same.values[0], ordered.values)
    rng = np.random.default_rng(1)
    many = _store(np.array([_draw(rng.gamma(2, 50, 3), s).values for s in range(50)]))
    once = relabel_by_ordering(many, CONSTRAINT)
    twice = relabel_by_ordering(once, CONSTRAINT)
    np.testing.assert_array_equal(once.values, twice.values)
    assert np.all(np.diff(once.values[:, [once.names.index(c) for c in CONSTRAINT]], axis=1) > 0)


def test_relabel_ties_warn_and_keep_order():
    th = _draw([5.0, 5.0, 1.0])
    with pytest.warns(UserWarning, match="ties"):
        out = relabel_by_ordering(_store(th.values), CONSTRAINT)
    np.testing.assert_array_equal(ParamVector(SPEC, out.values[0]).emission("y2")[1], [7.0, 5.0, 6.0])
    with pytest.raises(KeyError):
        relabel_by_ordering(_store(th.values), ["nope[1]", "nope[2]", "nope[3]"])


def test_running_weight_examples():
    x = np.array([-9.0, 2.0, -1.0, 3.0, 4.0])
    region = ModeRegion("x", 0.0, math.inf)
    np.testing.assert_allclose(running_weight(x, region, burn_in=1), [1, 0.5, 2 / 3, 0.75], rtol=0, atol=0)
    assert np.all(running_weight(np.ones(7), ModeRegion("x", 0.0, 2.0)) == 1.0)
    with pytest.raises(ValueError):
        running_weight(x, region, burn_in=5)
    with pytest.raises(ValueError):
        ModeRegion("x", 1.0, 1.0)
    store = SampleStore(["x"], np.arange(5), x[:, None])
    np.testing.assert_array_equal(running_weight(store, region, 1), running_weight(x, region, 1))


@settings(max_examples=50)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=200), st.floats(-50, 50))
def test_complementary_regions_sum_to_one(xs, t):
    xs = [v for v in xs if v != t] or [t + 1.0]
    lo = running_weight(xs, ModeRegion("x", -math.inf, t))
    hi = running_weight(xs, ModeRegion("x", t, math.inf))
    assert lo[-1] + hi[-1] == 1.0


def test_rhat_oracles():
    rng = np.random.default_rng(2)
    iid = rng.normal(size=(2, 10_000))
    assert 0.99 <= split_rhat(iid)[0] <= 1.01
    assert split_rhat(np.stack([iid[0], iid[0]]))[0] == pytest.approx(split_rhat(iid[:1])[0], abs=0.01)
    far = np.stack([rng.normal(0, 1, 10_000), rng.normal(10, 1, 10_000)])
    assert split_rhat(far)[0] > 2
    with pytest.warns(UserWarning):
        assert math.isnan(split_rhat(np.ones(10))[0])


def test_rhat_affine_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 500)).cumsum(axis=1)
    assert abs(split_rhat(3.5 * x - 7)[0] - split_rhat(x)[0]) < 1e-12


def _ar1(phi, n, rng):
    e = rng.normal(size=n)
    y = np.empty(n)
    y[0] = e[0] / math.sqrt(1 - phi**2)
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return y


def test_ess_oracles():
    rng = np.random.default_rng(4)
    n = 10_000
    assert 0.8 * n <= ess_basic(rng.normal(size=n))[0] <= 1.2 * n
    n = 100_000
    target = n * (1 - 0.9) / (1 + 0.9)
    ess = ess_basic(_ar1(0.9, n, rng))[0]
    assert target / 1.5 <= ess <= target * 1.5
    with pytest.warns(UserWarning):
        assert math.isnan(ess_basic(np.full(20, 3.0))[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.95, 0.95))
def test_ess_never_exceeds_guard(seed, phi):
    x = _ar1(phi, 400, np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert ess_basic(x)[0] <= 1.25 * 400


def test_multi_coordinate_shapes():
    rng = np.random.default_rng(5)
    chains = rng.normal(size=(4, 1000, 3))
    assert split_rhat(chains).shape == (3,) and ess_basic(chains).shape == (3,)


def test_swap_summary_recount():
    traj = ReplicaTrajectory(
        positions=[[0, 1, 2], [0, 1, 2], [1, 0, 2], [2, 0, 1], [2, 0, 1]],
        attempt_iteration=[0, 1, 2, 3], attempt_pair=[0, 0, 1, 1], attempt_accepted=[False, True, True, False],
    )
    s = swap_summary(traj, [1.0, 0.5, 0.25])
    np.testing.assert_array_equal(s["attempts"], [2, 2])
    np.testing.assert_array_equal(s["rates"], [0.5, 0.5])
    assert s["traces"].shape == (15, 3)
    assert s["traces"][3].tolist() == [1, 0, 0]

    none = ReplicaTrajectory(np.zeros((4, 2), int) + [0, 1], [0, 1, 2], [0, 0, 0], [False] * 3)
    s = swap_summary(none)
    assert s["rates"].tolist() == [0.0] and s["total_round_trips"] == 0


def test_interval_table_mode_wise():
    rng = np.random.default_rng(6)
    x = np.concatenate([rng.normal(-5, 1, 4000), rng.normal(5, 1, 1000)])
    store = SampleStore(["x"], np.arange(len(x)), x[:, None])
    rows = interval_table(store, {"A": ModeRegion("x", -math.inf, 0), "B": ModeRegion("x", 0, math.inf)})
    by = {r["mode"]: r for r in rows}
    assert by["A"]["n"] + by["B"]["n"] == 5000
    assert by["A"]["median"] == pytest.approx(-5, abs=0.1) and by["B"]["median"] == pytest.approx(5, abs=0.15)
    assert by["A"]["q95_low"] < by["A"]["q66_low"] < by["A"]["median"] < by["A"]["q66_high"] < by["A"]["q95_high"]
    assert interval_table(store)[0]["mode"] == "all"
    assert abs(suggest_threshold(x)) < 2.5
