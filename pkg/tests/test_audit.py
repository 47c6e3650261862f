import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdp.audit import (
    AuditConfig,
    constant_observer,
    convergence_study,
    empirical_epsilon_weak,
    histogram_report,
    iid_observer,
    monte_carlo_error_rates,
    randomized_response_observer,
    sprt_observer,
    sprt_runner,
)
from seqdp.sprt import DpSprtConfig, SprtConfig
from seqdp.streams import IidBernoulli

CFG = SprtConfig(0.4, 0.6, 0.05, 0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        AuditConfig(trials=999)
    with pytest.raises(ValueError):
        AuditConfig(smoothing=0.0)
    with pytest.raises(ValueError):
        AuditConfig(position=0)


def test_constant_observer_is_exactly_zero(rng):
    rep = empirical_epsilon_weak(constant_observer(3, 1), AuditConfig(trials=5000), rng)
    assert rep.epsilon_hat == 0.0
    assert rep.band == (0.0, 0.0)
    assert len(rep.cells) == 1 and not rep.divergent


def test_identical_laws_sit_at_noise_floor(rng):
    cfg = AuditConfig(value_a=1, value_b=1, trials=100_000, bootstrap_reps=50)
    rep = empirical_epsilon_weak(randomized_response_observer(1.0), cfg, rng)
    # two cells each holding >= 26% of runs: log-ratio sd ~ 0.009
    assert rep.epsilon_hat < 0.04


def test_randomized_response_recovers_epsilon(rng):
    rep = empirical_epsilon_weak(randomized_response_observer(1.0), AuditConfig(trials=100_000), rng)
    assert abs(rep.epsilon_hat - 1.0) < 0.05
    assert rep.band[0] <= rep.epsilon_hat + 0.05 and rep.band[1] >= rep.epsilon_hat - 0.05


def test_swapping_arms_negates_ratios(rng):
    ta, oa = rng.integers(1, 6, 3000), rng.integers(0, 2, 3000)
    tb, ob = rng.integers(1, 8, 3000), rng.integers(0, 2, 3000)
    r1 = histogram_report(ta, oa, tb, ob, tau_cap=5, bootstrap_reps=0)
    r2 = histogram_report(tb, ob, ta, oa, tau_cap=5, bootstrap_reps=0)
    assert r1.epsilon_hat == r2.epsilon_hat
    np.testing.assert_allclose(r1.log_ratios(), -r2.log_ratios())


def test_tail_bin_pools_large_taus():
    ta = np.array([1, 7, 9, 50] * 300)
    tb = np.array([1, 1, 8, 60] * 300)
    o = np.zeros(1200, dtype=int)
    rep = histogram_report(ta, o, tb, o, tau_cap=5, bootstrap_reps=0)
    assert [c.tau_bin for c in rep.cells] == [1, 6]
    assert rep.epsilon_hat == pytest.approx(abs(math.log(301 / 601)))
    assert rep.to_dict()["cells"][1]["tau_bin"] == ">5"
    dropped = histogram_report(ta, o, tb, o, tau_cap=5, tail_bin=False, bootstrap_reps=0)
    assert [c.tau_bin for c in dropped.cells] == [1]


def test_divergence_flag():
    n = 2000
    ta, tb = np.full(n, 3), np.full(n, 9)
    o = np.zeros(n, dtype=int)
    rep = histogram_report(ta, o, tb, o, tau_cap=20, bootstrap_reps=0)
    assert rep.divergent
    assert rep.epsilon_hat == pytest.approx(math.log(n + 1))


def test_non_integer_outputs_rejected():
    with pytest.raises(TypeError):
        histogram_report([1] * 10, [0.5] * 10, [1] * 10, [0.5] * 10, tau_cap=5)


@given(
    ca=st.lists(st.integers(1, 5000), min_size=1, max_size=6),
    cb=st.lists(st.integers(1, 5000), min_size=1, max_size=6),
    s=st.floats(0.01, 10),
)
@settings(max_examples=200, deadline=None)
def test_smoothing_shrinks_two_sided_cells(ca, cb, s):
    k = min(len(ca), len(cb))
    ca, cb = ca[:k], cb[:k]
    n = max(sum(ca), sum(cb))
    # pad both arms to n runs with a common cell so trial counts match
    ca = ca + [n - sum(ca) + 1]
    cb = cb + [n - sum(cb) + 1]
    taus_a = np.repeat(np.arange(1, k + 2), ca)
    taus_b = np.repeat(np.arange(1, k + 2), cb)
    o = np.zeros(taus_a.size, dtype=int)
    smoothed = histogram_report(taus_a, o, taus_b, o[: taus_b.size], tau_cap=k + 1, smoothing=s, bootstrap_reps=0)
    raw = np.abs(np.log(np.array(ca, float)) - np.log(np.array(cb, float)))
    assert smoothed.epsilon_hat <= raw.max() + 1e-12


def test_epsilon_delta(rng):
    rep = empirical_epsilon_weak(randomized_response_observer(1.0), AuditConfig(trials=20_000, bootstrap_reps=0), rng)
    assert rep.epsilon_delta(0.0) == pytest.approx(rep.epsilon_hat)
    vals = [rep.epsilon_delta(d) for d in (0.0, 0.05, 0.1, 0.2)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    assert rep.epsilon_delta(1.0) == 0.0


def test_vectorized_and_scalar_observers_agree(rng):
    dp = DpSprtConfig(CFG, 0.5, 1.0)
    cfg = AuditConfig(trials=4000, tau_cap=40, bootstrap_reps=0)
    fast = empirical_epsilon_weak(sprt_observer(CFG, 0.5, dp, 40), cfg, rng)
    slow = empirical_epsilon_weak(iid_observer(sprt_runner(CFG, dp, 40), IidBernoulli(0.5), 40), cfg, rng)
    fa = {(c.tau_bin, c.output): c.count_a for c in fast.cells}
    sa = {(c.tau_bin, c.output): c.count_a for c in slow.cells}
    for key in set(fa) & set(sa):
        a, b = fa[key], sa[key]
        assert abs(a - b) < 5 * math.sqrt(a + b + 1)


def test_error_rates_plain(rng):
    rep = monte_carlo_error_rates(CFG, 20_000, rng)
    assert rep.fp <= 0.05 + rep.slack(0.05)
    assert rep.fn <= 0.05 + rep.slack(0.05)
    assert rep.fp_ci[0] <= rep.fp <= rep.fp_ci[1]
    assert rep.fp_bound is None and rep.capped == 0


def test_convergence_study_shape(rng):
    rows = convergence_study(
        [(0.1, 0.1), (0.05, 0.05), (0.01, 0.01)], 0.4, 0.6, 0.5, 1.0, 0.5,
        AuditConfig(trials=2000, tau_cap=100, bootstrap_reps=0), rng, realizations=3, conditional_trials=1000,
    )
    assert len(rows) == 3
    taus = [r["mean_tau"] for r in rows]
    assert taus[0] < taus[1] < taus[2]
    assert all(np.isfinite(r["epsilon_weak"]) and np.isfinite(r["epsilon_conditional"]) for r in rows)
