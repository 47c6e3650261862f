import numpy as np
import pytest

from seqdp.audit import empirical_epsilon_conditional, sprt_runner
from seqdp.counterexamples import counterexample_serm, counterexample_sprt, sprt_run_length
from seqdp.serm import FiniteTable, SermConfig, dp_serm_run, serm_run
from seqdp.sprt import DpSprtConfig, SprtConfig, sprt_run

CFG = SprtConfig(0.4, 0.6, 0.05, 0.05, max_steps=100_000)


def test_run_length():
    assert sprt_run_length(CFG) == 7


def test_sprt_pair_shape():
    pair = counterexample_sprt(CFG)
    a, b = pair.prefixes(12)
    assert a == [1] * 8 + [0, 1, 0, 1]
    assert b == [1] * 7 + [0, 0, 1, 0, 1]


def test_sprt_pair_splits_stopping_times():
    pair = counterexample_sprt(CFG)
    a = sprt_run(pair.stream_a(), CFG)
    b = sprt_run(pair.stream_b(), CFG)
    assert (a.tau, a.decision) == (8, 1)
    assert b.capped and b.tau == CFG.max_steps


def test_sprt_pair_needs_symmetry():
    with pytest.raises(ValueError):
        counterexample_sprt(SprtConfig(0.3, 0.6, 0.05, 0.05))


def test_plain_sprt_conditional_audit_diverges(rng):
    pair = counterexample_sprt(CFG)
    rep = empirical_epsilon_conditional(sprt_runner(CFG, tau_cap=50), pair, 1000, rng, tau_cap=50, bootstrap_reps=20)
    assert rep.divergent
    assert rep.epsilon_hat == pytest.approx(np.log(1001), rel=1e-12)


def test_dp_sprt_conditional_audit_is_finite(rng):
    pair = counterexample_sprt(CFG)
    dp = DpSprtConfig(CFG, 0.5, 1.0)
    rep = empirical_epsilon_conditional(sprt_runner(CFG, dp, tau_cap=50), pair, 2000, rng, tau_cap=50, bootstrap_reps=20)
    assert not rep.divergent
    assert np.isfinite(rep.epsilon_hat)


def test_serm_pair():
    pair, cls = counterexample_serm(0.2, 0.2)
    assert isinstance(cls, FiniteTable)
    a, b = pair.prefixes(320)
    assert a[311] == 1 and sum(a) == 1
    assert sum(b) == 0
    cfg = SermConfig(0.2, 0.2)
    ra = serm_run(pair.stream_a(), cls, cfg, np.random.default_rng(0))
    rb = serm_run(pair.stream_b(), cls, cfg, np.random.default_rng(0))
    assert ra.tau == rb.tau == 312
    assert (ra.selected, rb.selected) == (1, 0)


def test_serm_pair_private_return_mixes(rng):
    pair, cls = counterexample_serm(0.2, 0.2)
    cfg = SermConfig(0.2, 0.2, epsilon=1.0)
    picks = [dp_serm_run(pair.stream_a(), cls, cfg, rng).selected for _ in range(200)]
    # utilities differ by one so both functions keep substantial mass
    assert 0 < sum(picks) < 200
