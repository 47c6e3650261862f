"""Empirical privacy estimates and Monte Carlo accuracy checks.

The observable of a sequential algorithm is the pair (stopping step,
output). Each arm of an audit is a histogram of that pair over many runs,
with stopping steps above ``tau_cap`` pooled into one tail bin. The privacy
estimate is the largest absolute log-ratio of smoothed cell frequencies.

Weak audits integrate out every entry except the varied one by drawing the
rest i.i.d. per run; conditional audits hold the whole stream fixed.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from seqdp.mechanisms import randomized_response
from seqdp.serm import FiniteTable, SermConfig, dp_serm_run, serm_run
from seqdp.sprt import DpSprtConfig, SprtConfig, dp_sprt_run, simulate_sprt, sprt_run, dp_sprt_bounds
from seqdp.streams import AdjacentPair, IidFinite, StreamSource

# observe(position, value, trials, rng) -> (taus, outputs)
Observer = Callable[[int, Any, int, np.random.Generator], tuple[np.ndarray, np.ndarray]]
# run(stream, rng) -> (tau or None when capped, output)
Runner = Callable[[Any, np.random.Generator], tuple[Any, Any]]


@dataclass(frozen=True)
class AuditConfig:
    position: int = 1
    value_a: Any = 1
    value_b: Any = 0
    trials: int = 100_000
    tau_cap: int = 200
    tail_bin: bool = True
    smoothing: float = 1.0
    bootstrap_reps: int = 200
    band_level: float = 0.90

    def __post_init__(self):
        if self.trials < 1000:
            raise ValueError("audits need at least 1000 trials per arm")
        if self.tau_cap < 1:
            raise ValueError("tau_cap must be >= 1")
        if not self.smoothing > 0:
            raise ValueError("smoothing is mandatory: zero-count cells have no finite log-ratio")
        if self.position < 1:
            raise ValueError("position must be >= 1")


@dataclass
class Cell:
    tau_bin: int
    output: int
    count_a: int
    count_b: int
    log_ratio: float


@dataclass
class AuditReport:
    epsilon_hat: float
    band: tuple[float, float]
    divergent: bool
    cells: list[Cell]
    trials_a: int
    trials_b: int
    tau_cap: int
    smoothing: float

    def log_ratios(self) -> np.ndarray:
        return np.array([c.log_ratio for c in self.cells])

    def epsilon_delta(self, delta: float) -> float:
        """Smallest epsilon with P_a(c) <= e^eps P_b(c) + delta on every cell, both directions."""
        s = self.smoothing
        pa = np.array([c.count_a + s for c in self.cells]) / self.trials_a
        pb = np.array([c.count_b + s for c in self.cells]) / self.trials_b
        worst = 0.0
        for num, den in ((pa, pb), (pb, pa)):
            slack = num - delta
            ok = slack > 0
            if ok.any():
                worst = max(worst, float(np.max(np.log(slack[ok] / den[ok]))))
        return max(worst, 0.0)

    def to_dict(self) -> dict:
        return {
            "epsilon_hat": self.epsilon_hat,
            "band": list(self.band),
            "divergent": self.divergent,
            "cells": [
                {
                    "tau_bin": c.tau_bin if c.tau_bin <= self.tau_cap else f">{self.tau_cap}",
                    "output": c.output,
                    "count_a": c.count_a,
                    "count_b": c.count_b,
                    "log_ratio": c.log_ratio,
                }
                for c in self.cells
            ],
        }


def _cell_keys(taus, outputs, cap: int, tail_bin: bool):
    taus = np.asarray(taus)
    outputs = np.asarray(outputs)
    if outputs.dtype.kind not in "biu":
        raise TypeError("audits support finite integer-coded output sets only")
    bins = np.minimum(taus, cap + 1).astype(np.int64)
    keep = np.ones(bins.shape, bool) if tail_bin else bins <= cap
    return bins[keep], outputs[keep].astype(np.int64)


def _counts(bins, outs, keys):
    lookup = {k: i for i, k in enumerate(keys)}
    c = np.zeros(len(keys), dtype=np.int64)
    if bins.size == 0:
        return c
    pairs, n = np.unique(np.stack([bins, outs], axis=1), axis=0, return_counts=True)
    for (b, o), m in zip(pairs, n):
        c[lookup[(int(b), int(o))]] = m
    return c


def _log_ratio(ca, cb, na, nb, s):
    return np.log((ca + s) / na) - np.log((cb + s) / nb)


def _epsilon(ca, cb, na, nb, s) -> float:
    return float(np.max(np.abs(_log_ratio(ca, cb, na, nb, s)))) if len(ca) else 0.0


def histogram_report(
    taus_a, outs_a, taus_b, outs_b, *, tau_cap: int, tail_bin: bool = True, smoothing: float = 1.0,
    bootstrap_reps: int = 200, band_level: float = 0.90, rng: np.random.Generator | None = None,
) -> AuditReport:
    """Privacy estimate from two samples of observables."""
    if not smoothing > 0:
        raise ValueError("smoothing is mandatory")
    na, nb = len(taus_a), len(taus_b)
    ba, oa = _cell_keys(taus_a, outs_a, tau_cap, tail_bin)
    bb, ob = _cell_keys(taus_b, outs_b, tau_cap, tail_bin)
    keys = sorted(set(zip(ba.tolist(), oa.tolist())) | set(zip(bb.tolist(), ob.tolist())))
    ca = _counts(ba, oa, keys)
    cb = _counts(bb, ob, keys)
    lr = _log_ratio(ca, cb, na, nb, smoothing)
    eps = float(np.max(np.abs(lr))) if len(keys) else 0.0
    divergent = bool(np.any(((ca >= 0.5 * na) & (cb == 0)) | ((cb >= 0.5 * nb) & (ca == 0))))

    band = (eps, eps)
    if bootstrap_reps > 0 and len(keys):
        rng = np.random.default_rng(0) if rng is None else rng
        # a trailing cell absorbs runs dropped when tail_bin is off
        pa = np.append(ca, na - ca.sum()) / na
        pb = np.append(cb, nb - cb.sum()) / nb
        reps = np.empty(bootstrap_reps)
        for i in range(bootstrap_reps):
            ra = rng.multinomial(na, pa)[:-1]
            rb = rng.multinomial(nb, pb)[:-1]
            reps[i] = _epsilon(ra, rb, na, nb, smoothing)
        tail = (1.0 - band_level) / 2.0
        band = (float(np.quantile(reps, tail)), float(np.quantile(reps, 1.0 - tail)))

    cells = [Cell(int(k[0]), int(k[1]), int(a), int(b), float(r)) for k, a, b, r in zip(keys, ca, cb, lr)]
    return AuditReport(eps, band, divergent, cells, na, nb, tau_cap, smoothing)


def empirical_epsilon_weak(observe: Observer, config: AuditConfig, rng: np.random.Generator) -> AuditReport:
    """Estimate the weak privacy level at ``config.position``.

    ``observe`` must pin the given position to the given value and draw all
    other entries i.i.d. from the ambient law, independently per trial.
    """
    ta, oa = observe(config.position, config.value_a, config.trials, rng)
    tb, ob = observe(config.position, config.value_b, config.trials, rng)
    return histogram_report(
        ta, oa, tb, ob, tau_cap=config.tau_cap, tail_bin=config.tail_bin, smoothing=config.smoothing,
        bootstrap_reps=config.bootstrap_reps, band_level=config.band_level, rng=rng,
    )


def empirical_epsilon_conditional(
    run: Runner,
    pair: AdjacentPair,
    trials: int,
    rng: np.random.Generator,
    *,
    tau_cap: int = 200,
    tail_bin: bool = True,
    smoothing: float = 1.0,
    bootstrap_reps: int = 200,
) -> AuditReport:
    """Estimate the privacy loss between two fully specified adjacent streams."""
    if trials < 1000:
        raise ValueError("audits need at least 1000 trials per arm")
    arms = []
    for open_stream in (pair.stream_a, pair.stream_b):
        taus = np.empty(trials, dtype=np.int64)
        outs = np.empty(trials, dtype=np.int64)
        for t in range(trials):
            tau, out = run(open_stream(), rng)
            taus[t] = tau_cap + 1 if tau is None else tau
            outs[t] = -1 if tau is None else out
        arms.append((taus, outs))
    (ta, oa), (tb, ob) = arms
    return histogram_report(
        ta, oa, tb, ob, tau_cap=tau_cap, tail_bin=tail_bin, smoothing=smoothing,
        bootstrap_reps=bootstrap_reps, rng=rng,
    )


# -- algorithm adapters ---------------------------------------------------


def sprt_runner(config: SprtConfig, dp: DpSprtConfig | None = None, tau_cap: int | None = None) -> Runner:
    """Scalar runner for plain or private SPRT; runs stop early once past ``tau_cap``."""
    if tau_cap is not None:
        config = dataclasses.replace(config, max_steps=tau_cap + 1)
        if dp is not None:
            dp = dataclasses.replace(dp, base=config)

    def run(stream, rng):
        out = sprt_run(stream, config) if dp is None else dp_sprt_run(stream, dp, rng)
        return (None, None) if out.capped else (out.tau, out.decision)

    return run


def sprt_observer(config: SprtConfig, p: float, dp: DpSprtConfig | None = None, tau_cap: int | None = None) -> Observer:
    """Vectorized weak-audit observer for SPRT with ambient Bernoulli(p) data."""
    cap = None if tau_cap is None else tau_cap + 1

    def observe(position, value, trials, rng):
        b = simulate_sprt(config, trials, rng, p=p, dp=dp, pinned={position: value}, max_steps=cap)
        return b.tau, b.output

    return observe


def randomized_response_observer(epsilon: float) -> Observer:
    """Randomized response on the pinned bit, viewed as a one-step algorithm."""

    def observe(position, value, trials, rng):
        return np.ones(trials, dtype=np.int64), randomized_response(np.full(trials, value), epsilon, rng)

    return observe


def constant_observer(tau: int = 1, output: int = 0) -> Observer:
    def observe(position, value, trials, rng):
        return np.full(trials, tau, dtype=np.int64), np.full(trials, output, dtype=np.int64)

    return observe


def iid_observer(run: Runner, kind, tau_cap: int) -> Observer:
    """Generic weak-audit observer: one freshly seeded i.i.d. stream per trial."""

    def observe(position, value, trials, rng):
        taus = np.empty(trials, dtype=np.int64)
        outs = np.empty(trials, dtype=np.int64)
        seeds = rng.integers(0, 2**63 - 1, size=trials)
        for t in range(trials):
            stream = StreamSource(kind, int(seeds[t])).open({position: value})
            tau, out = run(stream, rng)
            taus[t] = tau_cap + 1 if tau is None else tau
            outs[t] = -1 if tau is None else out
        return taus, outs

    return observe


# -- accuracy ---------------------------------------------------------------


def _ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return (float(ci.low), float(ci.high))


@dataclass
class ErrorRateReport:
    fp: float
    fn: float
    fp_ci: tuple[float, float]
    fn_ci: tuple[float, float]
    trials: int
    alpha: float
    beta: float
    fp_bound: float | None = None
    fn_bound: float | None = None
    mean_tau_h0: float = math.nan
    mean_tau_h1: float = math.nan
    capped: int = 0

    def slack(self, target: float, sigmas: float = 3.0) -> float:
        """``sigmas`` binomial standard deviations at rate ``target``."""
        return sigmas * math.sqrt(target * (1.0 - target) / self.trials)


def monte_carlo_error_rates(
    config: SprtConfig, trials: int, rng: np.random.Generator, dp: DpSprtConfig | None = None
) -> ErrorRateReport:
    """False-positive rate under p = p0 and false-negative rate under p = p1."""
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    h0 = simulate_sprt(config, trials, rng, p=config.p0, dp=dp)
    h1 = simulate_sprt(config, trials, rng, p=config.p1, dp=dp)
    k_fp = int(np.sum(h0.output == 1))
    k_fn = int(np.sum(h1.output == 0))
    fp_bound = fn_bound = None
    if dp is not None and dp.epsilon < 1.0:
        b = dp_sprt_bounds(dp)
        fp_bound, fn_bound = b.fp_bound, b.fn_bound
    return ErrorRateReport(
        fp=k_fp / trials,
        fn=k_fn / trials,
        fp_ci=_ci(k_fp, trials),
        fn_ci=_ci(k_fn, trials),
        trials=trials,
        alpha=config.alpha,
        beta=config.beta,
        fp_bound=fp_bound,
        fn_bound=fn_bound,
        mean_tau_h0=float(h0.tau.mean()),
        mean_tau_h1=float(h1.tau.mean()),
        capped=int(h0.capped.sum() + h1.capped.sum()),
    )


@dataclass
class PacReport:
    violation_rate: float
    ci: tuple[float, float]
    beta: float
    alpha: float
    taus: np.ndarray
    final_rademacher: np.ndarray
    n_alpha_beta: float
    capped: int

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.taus > self.n_alpha_beta) and np.all(self.final_rademacher < self.alpha))


def monte_carlo_pac_rate(
    cls: FiniteTable, pmf, config: SermConfig, runs: int, rng: np.random.Generator, private: bool = False
) -> PacReport:
    """Fraction of runs whose selected function is more than alpha worse than the best."""
    risks = cls.true_risks(pmf)
    best = risks.min()
    kind = IidFinite(tuple(pmf))
    seeds = rng.integers(0, 2**63 - 1, size=runs)
    bad = 0
    capped = 0
    taus = np.empty(runs, dtype=np.int64)
    finals = np.empty(runs)
    algo = dp_serm_run if private else serm_run
    for i in range(runs):
        out = algo(StreamSource(kind, int(seeds[i])).open(), cls, config, rng)
        taus[i] = out.tau
        finals[i] = out.rademacher_trace[-1]
        capped += out.capped
        bad += abs(risks[out.selected] - best) > config.alpha
    return PacReport(bad / runs, _ci(bad, runs), config.beta, config.alpha, taus, finals, config.n_alpha_beta, capped)


# -- exploratory --------------------------------------------------------------


def convergence_study(
    levels: Sequence[tuple[float, float]],
    p0: float,
    p1: float,
    epsilon: float,
    epsilon_prime: float,
    ambient_p: float,
    config: AuditConfig,
    rng: np.random.Generator,
    realizations: int = 10,
    conditional_trials: int = 2000,
) -> list[dict]:
    """Weak versus realization-averaged conditional estimates for private SPRT of growing stringency.

    Each level is an ``(alpha, beta)`` pair. No pass/fail verdict.
    """
    rows = []
    cap = config.tau_cap
    for alpha, beta in levels:
        base = SprtConfig(p0, p1, alpha, beta)
        dp = DpSprtConfig(base, epsilon, epsilon_prime)
        weak = empirical_epsilon_weak(sprt_observer(base, ambient_p, dp, cap), config, rng)
        mean_tau = float(np.mean(simulate_sprt(base, config.trials, rng, p=ambient_p, dp=dp).tau))
        cond = []
        for _ in range(realizations):
            row = (rng.random(cap + 1) < ambient_p).astype(np.int64)
            arms = []
            for value in (config.value_a, config.value_b):
                b = simulate_sprt(
                    base, conditional_trials, rng, dp=dp, bits=row, pinned={config.position: value}, max_steps=cap + 1
                )
                arms.append((b.tau, b.output))
            rep = histogram_report(*arms[0], *arms[1], tau_cap=cap, smoothing=config.smoothing, bootstrap_reps=0)
            cond.append(rep.epsilon_hat)
        rows.append(
            {
                "alpha": alpha,
                "beta": beta,
                "mean_tau": mean_tau,
                "epsilon_weak": weak.epsilon_hat,
                "epsilon_conditional": float(np.mean(cond)),
            }
        )
    return rows
