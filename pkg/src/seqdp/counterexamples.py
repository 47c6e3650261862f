"""Adjacent stream pairs on which the non-private algorithms leak through their stopping step."""
from __future__ import annotations

import math

from seqdp.serm import FiniteTable, n_alpha_beta
from seqdp.sprt import SprtConfig
from seqdp.streams import AdjacentPair, Fixed, StreamSource, make_adjacent


def sprt_run_length(config: SprtConfig) -> int:
    """Number of leading ones after which a single further one crosses the upper threshold."""
    return math.ceil(config.upper / config.inc1) - 1


def counterexample_sprt(config: SprtConfig) -> AdjacentPair:
    """Pair on which SPRT stops at ``K1 + 1`` for stream A and never for stream B.

    A = (1 x K1, 1, 0, 1, 0, ...) and B = (1 x K1, 0, 0, 1, 0, 1, ...).
    After the run of ones, B alternates between two interior values of the
    statistic, which requires a symmetric config.
    """
    if not config.symmetric:
        raise ValueError("the oscillating tail needs p1 == 1 - p0")
    k1 = sprt_run_length(config)
    inc = config.inc1
    low, high = (k1 - 2) * inc, (k1 - 1) * inc
    if not (config.lower < low and high < config.upper):
        raise ValueError("alternating tail would leave the continuation band for this config")
    base = StreamSource(Fixed([1] * (k1 + 1), [0, 1]))
    return make_adjacent(base, k1 + 1, 0)


def counterexample_serm(alpha: float, beta: float) -> tuple[AdjacentPair, FiniteTable]:
    """Stream with a single one at the first admissible step versus the all-zero stream.

    Uses the uniform law on {0, 1, 2} and f1 = (0, 1, 0), f2 = (0, 0, 1).
    The differing entry sits at position ``floor(N) + 1`` so that both runs
    read it before they may stop.
    """
    N = n_alpha_beta(alpha, beta)
    if not 1.0 / alpha < N:
        raise ValueError(f"need 1/alpha < N(alpha, beta) = {N}")
    k = math.floor(N) + 1
    base = StreamSource(Fixed([0] * (k - 1) + [1], [0]))
    pair = make_adjacent(base, k, 0)
    cls = FiniteTable([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return pair, cls
