"""Weakly differentially private sequential tests and learners."""

__version__ = "0.1.0"

from seqdp.streams import (
    AdjacentPair,
    Dataset,
    Fixed,
    IidBernoulli,
    IidFinite,
    Record,
    Stream,
    StreamExhausted,
    StreamSource,
    load_csv,
    make_adjacent,
    next_sample,
)
from seqdp.mechanisms import (
    FiniteMechanismSpec,
    TruncatedLaplace,
    exponential_mechanism,
    randomized_response,
    sample_discrete_laplace,
    sample_laplace,
    sample_truncated_laplace,
)
from seqdp.sprt import (
    DpSprtConfig,
    SprtConfig,
    SprtOutcome,
    dp_sprt_run,
    llr_increment,
    sensitivity_d,
    simulate_sprt,
    sprt_run,
    stopping_counts_form,
    dp_sprt_bounds,
)
from seqdp.serm import (
    FiniteTable,
    LinearSoftmax,
    SermConfig,
    SermOutcome,
    dp_serm_run,
    lambda_estimate,
    n_alpha_beta,
    rademacher_average,
    serm_run,
    dp_serm_privacy_level,
)
from seqdp.counterexamples import counterexample_serm, counterexample_sprt
