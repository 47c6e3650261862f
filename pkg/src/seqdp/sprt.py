"""Wald's SPRT for a Bernoulli parameter and its weakly private variant.

The private test draws one threshold shift ``delta`` from a Laplace law
truncated to ``[-u, -l]`` before reading any data, runs the test against
``(l + delta, u + delta)`` and releases the decision through randomized
response.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Mapping

import numpy as np

from seqdp.mechanisms import TruncatedLaplace, flip_probability, randomized_response

ScaleMode = Literal["analysis", "sensitivity"]


@dataclass(frozen=True)
class SprtConfig:
    p0: float
    p1: float
    alpha: float
    beta: float
    max_steps: int = 10**6

    def __post_init__(self):
        if not 0.0 < self.p0 < self.p1 < 1.0:
            raise ValueError(f"need 0 < p0 < p1 < 1, got p0={self.p0}, p1={self.p1}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.alpha + self.beta >= 1.0:
            raise ValueError("alpha + beta must be < 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def upper(self) -> float:
        return math.log((1.0 - self.beta) / self.alpha)

    @property
    def lower(self) -> float:
        return math.log(self.beta / (1.0 - self.alpha))

    @property
    def inc1(self) -> float:
        return math.log(self.p1 / self.p0)

    @property
    def inc0(self) -> float:
        return math.log((1.0 - self.p1) / (1.0 - self.p0))

    @property
    def symmetric(self) -> bool:
        return abs(self.p1 - (1.0 - self.p0)) < 1e-12


@dataclass
class SprtOutcome:
    tau: int
    decision: int | None
    final_llr: float
    capped: bool = False
    delta_used: float | None = field(default=None, repr=False)

    def to_record(self, unsafe_debug: bool = False) -> dict:
        rec = {"tau": self.tau, "decision": self.decision, "capped": self.capped}
        if unsafe_debug:
            rec["delta_used"] = self.delta_used
            rec["final_llr"] = self.final_llr
        return rec


def llr_increment(x, config: SprtConfig) -> float:
    if x == 1:
        return config.inc1
    if x == 0:
        return config.inc0
    raise ValueError(f"SPRT samples must be 0 or 1, got {x!r}")


def sensitivity_d(config: SprtConfig) -> float:
    """Largest change in the log-likelihood ratio caused by altering one sample."""
    return abs(math.log(config.p1 * (1.0 - config.p0) / (config.p0 * (1.0 - config.p1))))


def sprt_run(stream: Iterator, config: SprtConfig, *, shift: float = 0.0) -> SprtOutcome:
    """Run the test on ``stream`` with both thresholds moved by ``shift``.

    A statistic that lands exactly on a threshold stops the test.
    """
    lo, hi = config.lower + shift, config.upper + shift
    inc1, inc0 = config.inc1, config.inc0
    llr = 0.0
    for n in range(1, config.max_steps + 1):
        x = next(stream)
        if x == 1:
            llr += inc1
        elif x == 0:
            llr += inc0
        else:
            raise ValueError(f"SPRT samples must be 0 or 1, got {x!r}")
        if llr >= hi:
            return SprtOutcome(n, 1, llr)
        if llr <= lo:
            return SprtOutcome(n, 0, llr)
    return SprtOutcome(config.max_steps, None, llr, capped=True)


def stopping_counts_form(n0: int, n1: int, config: SprtConfig) -> str:
    """Stopping verdict written in terms of the counts of zeros and ones.

    Only equivalent to the likelihood-ratio form for symmetric configs
    (``p1 == 1 - p0``), where each zero cancels one one.
    """
    if n0 + n1 < 1:
        raise ValueError("need at least one sample")
    step = math.log(config.p1 / config.p0)
    down = math.log((1.0 - config.alpha) / config.beta) / step
    up = math.log((1.0 - config.beta) / config.alpha) / step
    if n0 - n1 >= down or n1 - n0 >= up:
        return "stop"
    return "continue"


@dataclass(frozen=True)
class DpSprtConfig:
    base: SprtConfig
    epsilon: float
    epsilon_prime: float
    scale_mode: ScaleMode = "analysis"

    def __post_init__(self):
        if not self.epsilon > 0 or not self.epsilon_prime > 0:
            raise ValueError("privacy levels must be positive")
        if self.scale_mode not in ("analysis", "sensitivity"):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")

    @property
    def noise_scale(self) -> float:
        if self.scale_mode == "sensitivity":
            return sensitivity_d(self.base) / self.epsilon
        return 1.0 / self.epsilon

    def noise_law(self) -> TruncatedLaplace:
        return TruncatedLaplace(self.noise_scale, -self.base.upper, -self.base.lower)


def dp_sprt_run(
    stream: Iterator, config: DpSprtConfig, rng: np.random.Generator, *, delta: float | None = None
) -> SprtOutcome:
    """Private SPRT. ``delta`` forces the threshold shift (testing hook)."""
    if delta is None:
        delta = config.noise_law().sample(rng)
    out = sprt_run(stream, config.base, shift=delta)
    out.delta_used = delta
    if not out.capped and not math.isinf(config.epsilon_prime):
        out.decision = randomized_response(out.decision, config.epsilon_prime, rng)
    return out


class BoundUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class DpSprtBounds:
    fp_bound: float
    fn_bound: float
    epsilon: float
    delta: float
    delta_as_printed: float


def dp_sprt_bounds(config: DpSprtConfig) -> DpSprtBounds:
    """Expected error bounds and privacy level of the private SPRT.

    ``delta`` is ``max(alpha, beta) ** eps / 2``; ``delta_as_printed`` keeps
    the positive-exponent variant, which exceeds 1 and is reported only for
    reference.
    """
    eps, b = config.epsilon, config.base
    if eps >= 1.0:
        raise BoundUndefinedError(f"error bounds need epsilon < 1, got {eps}")
    flip = 0.0 if math.isinf(config.epsilon_prime) else flip_probability(config.epsilon_prime)
    m = min(-math.log(b.alpha), -math.log(b.beta))
    return DpSprtBounds(
        fp_bound=eps * b.alpha / (1.0 - eps) + flip,
        fn_bound=eps * b.beta / (1.0 - eps) + flip,
        epsilon=max(eps, config.epsilon_prime),
        delta=math.exp(-eps * m) / 2.0,
        delta_as_printed=math.exp(eps * m) / 2.0,
    )


@dataclass
class SprtBatch:
    """Vectorized outcomes; ``decision`` is -1 where the run was capped."""

    tau: np.ndarray
    decision: np.ndarray
    output: np.ndarray
    capped: np.ndarray
    delta: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.tau)


def simulate_sprt(
    config: SprtConfig,
    trials: int,
    rng: np.random.Generator,
    *,
    p: float | None = None,
    dp: DpSprtConfig | None = None,
    pinned: Mapping[int, int] | None = None,
    bits: np.ndarray | None = None,
    delta=None,
    max_steps: int | None = None,
    block: int = 32,
) -> SprtBatch:
    """Many independent SPRT runs at once.

    Samples are i.i.d. Bernoulli(``p``) unless ``bits`` (shape ``(trials, L)``
    or ``(L,)``, shared by all trials) supplies them. ``pinned`` fixes
    1-based positions to given values in every trial. With ``dp`` set, each
    trial draws its own threshold shift (or uses ``delta``) and ``output``
    holds the randomized-response release; otherwise ``output`` equals
    ``decision``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if bits is None and p is None:
        raise ValueError("need either p or bits")
    cap = config.max_steps if max_steps is None else max_steps
    pinned = dict(pinned or {})
    if bits is not None:
        bits = np.asarray(bits)
        if bits.ndim == 1:
            bits = np.broadcast_to(bits, (trials, bits.size))

    lo = np.full(trials, config.lower)
    hi = np.full(trials, config.upper)
    shifts = None
    if dp is not None:
        shifts = dp.noise_law().sample(rng, trials) if delta is None else np.broadcast_to(np.asarray(delta, float), (trials,)).copy()
        lo += shifts
        hi += shifts

    llr = np.zeros(trials)
    tau = np.full(trials, cap, dtype=np.int64)
    decision = np.full(trials, -1, dtype=np.int64)
    active = np.arange(trials)
    done = 0
    while active.size and done < cap:
        w = min(block, cap - done)
        if bits is not None:
            if bits.shape[1] < done + w:
                raise ValueError(f"bits supply only {bits.shape[1]} steps, runs need more")
            x = np.array(bits[active, done:done + w], dtype=bool)
        else:
            x = rng.random((active.size, w)) < p
        for pos, val in pinned.items():
            if done < pos <= done + w:
                x[:, pos - done - 1] = bool(val)
        inc = np.where(x, config.inc1, config.inc0)
        # prepend the running statistic so accumulation order matches sprt_run
        path = np.cumsum(np.concatenate([llr[active, None], inc], axis=1), axis=1)[:, 1:]
        out = (path >= hi[active, None]) | (path <= lo[active, None])
        hit = out.any(axis=1)
        first = out.argmax(axis=1)
        stopped = active[hit]
        final = path[hit, first[hit]]
        tau[stopped] = done + first[hit] + 1
        decision[stopped] = (final >= hi[stopped]).astype(np.int64)
        llr[active] = path[:, -1]
        llr[stopped] = final
        active = active[~hit]
        done += w

    capped = decision < 0
    output = decision.copy()
    if dp is not None and not math.isinf(dp.epsilon_prime):
        ok = ~capped
        output[ok] = randomized_response(decision[ok], dp.epsilon_prime, rng)
    return SprtBatch(tau, decision, output, capped, shifts)
