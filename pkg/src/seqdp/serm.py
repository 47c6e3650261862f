"""Sequential empirical risk minimization with a Rademacher stopping rule.

A hypothesis class only needs three methods to be usable here:

``loss_column(sample)``
    losses in [0, 1] of every function used for the Rademacher supremum
``loss_matrix(samples)``
    the same for a list of samples, shape ``(k, n)``
``erm(samples, losses)``
    the empirical risk minimizer on the prefix

:class:`FiniteTable` is the exact finite class. :class:`LinearSoftmax` is a
parametric classifier whose Rademacher supremum is taken over a fixed,
seeded pool of parameter vectors drawn from its box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from seqdp.mechanisms import FiniteMechanismSpec, exponential_mechanism, sample_laplace
from seqdp.streams import Record


def n_alpha_beta(alpha: float, beta: float) -> float:
    """Smallest admissible stopping step (kept real, never rounded)."""
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise ValueError("alpha and beta must lie in (0, 1)")
    return 2.0 / alpha**2 * math.log(2.0 / (beta * -math.expm1(-alpha**2 / 2.0)))


def rademacher_signs(n: int, rng: np.random.Generator) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=n) - 1.0


def _sup_correlation(losses: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.max(np.abs(losses @ sigma))) / losses.shape[1]


def rademacher_average(samples: Sequence, cls, sigma: np.ndarray) -> float:
    """(1/n) max_f |sum_i sigma_i f(X_i)| for the given sign vector."""
    sigma = np.asarray(sigma, dtype=float)
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    if sigma.shape != (len(samples),):
        raise ValueError(f"got {sigma.size} signs for {len(samples)} samples")
    if not np.all(np.abs(sigma) == 1.0):
        raise ValueError("signs must be +1 or -1")
    return _sup_correlation(cls.loss_matrix(samples), sigma)


@dataclass(frozen=True)
class FiniteTable:
    """Functions on ``{0, ..., m-1}`` given as rows of a ``(k, m)`` table."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] == 0 or t.shape[1] == 0:
            raise ValueError("table must be a non-empty 2-D array")
        if np.any((t < 0) | (t > 1)):
            raise ValueError("function values must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __len__(self):
        return self.table.shape[0]

    def loss_column(self, sample) -> np.ndarray:
        return self.table[:, int(sample)]

    def loss_matrix(self, samples) -> np.ndarray:
        return self.table[:, np.asarray(samples, dtype=np.int64)]

    def erm(self, samples, losses: np.ndarray | None = None) -> int:
        if losses is None:
            losses = self.loss_matrix(samples)
        return int(np.argmin(losses.mean(axis=1)))

    def true_risks(self, pmf) -> np.ndarray:
        return self.table @ np.asarray(pmf, dtype=float)


def softmax_gd_trainer(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    box: float,
    steps: int = 500,
    learning_rate: float = 0.5,
    l2: float = 1e-2,
) -> np.ndarray:
    """Full-batch gradient descent on L2-regularized cross entropy.

    Starts from zero and projects onto ``[-box, box]`` after every step, so
    the result is a deterministic function of the data.
    """
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    W = np.zeros((n_classes, d + 1))
    mask = np.ones_like(W)
    mask[:, -1] = 0.0  # bias is not penalized
    for _ in range(steps):
        Z = Xb @ W.T
        Z -= Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        grad = (P - Y).T @ Xb / n + l2 * W * mask
        W = np.clip(W - learning_rate * grad, -box, box)
    return W


@dataclass
class LinearSoftmax:
    """Multinomial linear classifier with 0-1 loss.

    Parameters are ``(n_classes, n_features + 1)`` matrices (last column is
    the bias) confined to ``[-box, box]``. ``trainer(X, y)`` may replace the
    built-in gradient-descent fit; it must return a parameter matrix.
    """

    n_features: int
    n_classes: int
    box: float = 2.0
    pool_size: int = 32
    pool_seed: int = 0
    trainer: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    _pool: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.pool_seed)
        self._pool = rng.uniform(-self.box, self.box, (self.pool_size, self.n_classes, self.n_features + 1))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_classes, self.n_features + 1)

    def predict(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.argmax(X @ theta[:, :-1].T + theta[:, -1], axis=1)

    def accuracy(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(theta, X) == y))

    def loss_column(self, sample: Record) -> np.ndarray:
        scores = self._pool[:, :, :-1] @ sample.features + self._pool[:, :, -1]
        return (np.argmax(scores, axis=1) != sample.label).astype(float)

    def loss_matrix(self, samples) -> np.ndarray:
        return np.stack([self.loss_column(s) for s in samples], axis=1)

    def erm(self, samples, losses: np.ndarray | None = None) -> np.ndarray:
        X = np.stack([s.features for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        if self.trainer is not None:
            return np.asarray(self.trainer(X, y), dtype=float)
        return softmax_gd_trainer(X, y, self.n_classes, self.box)


@dataclass(frozen=True)
class SermConfig:
    alpha: float
    beta: float
    max_steps: int = 10**6
    epsilon: float | None = None
    metric_scale: float = 1000.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.metric_scale > 0:
            raise ValueError("metric_scale must be positive")

    @property
    def n_alpha_beta(self) -> float:
        return n_alpha_beta(self.alpha, self.beta)


@dataclass
class SermOutcome:
    tau: int
    selected: Any
    rademacher_trace: np.ndarray
    empirical_risks: np.ndarray | None = None
    capped: bool = False
    n_alpha_beta: float = math.nan
    erm_selected: Any = field(default=None, repr=False)


def serm_run(stream: Iterator, cls, config: SermConfig, rng: np.random.Generator) -> SermOutcome:
    """Draw samples until ``n > N(alpha, beta)`` and the Rademacher average drops below alpha.

    Signs are redrawn for the whole prefix at every step.
    """
    N = config.n_alpha_beta
    samples = []
    losses = None
    trace = []
    tau, capped = config.max_steps, True
    for n in range(1, config.max_steps + 1):
        x = next(stream)
        samples.append(x)
        col = cls.loss_column(x)
        if losses is None:
            losses = np.empty((col.size, 256))
        elif n > losses.shape[1]:
            losses = np.concatenate([losses, np.empty_like(losses)], axis=1)
        losses[:, n - 1] = col
        r = _sup_correlation(losses[:, :n], rademacher_signs(n, rng))
        trace.append(r)
        if n > N and r < config.alpha:
            tau, capped = n, False
            break
    L = losses[:, :tau]
    selected = cls.erm(samples, L)
    risks = L.mean(axis=1) if isinstance(cls, FiniteTable) else None
    return SermOutcome(tau, selected, np.array(trace), risks, capped, N, erm_selected=selected)


def dp_serm_run(stream: Iterator, cls, config: SermConfig, rng: np.random.Generator) -> SermOutcome:
    """SERM with a privatized return; the stopping rule is left unchanged.

    Finite classes select through the exponential mechanism with utility
    ``-sum_j f(X_j)`` (sensitivity 1). Parametric classes get i.i.d. Laplace
    noise of scale ``1 / (epsilon * metric_scale)`` on every parameter,
    then are clipped back into the box.
    """
    if config.epsilon is None:
        raise ValueError("dp_serm_run needs config.epsilon")
    out = serm_run(stream, cls, config, rng)
    if isinstance(cls, FiniteTable):
        spec = FiniteMechanismSpec(tuple(range(len(cls))), tuple(-out.empirical_risks * out.tau), config.epsilon, 1.0)
        out.selected = exponential_mechanism(spec, rng)
    else:
        theta = np.asarray(out.erm_selected, dtype=float)
        scale = 1.0 / (config.epsilon * config.metric_scale)
        noisy = theta + sample_laplace(scale, rng, size=theta.shape)
        out.selected = np.clip(noisy, -cls.box, cls.box)
    return out


def lambda_estimate(cls, samples, lambda_min: float = 1e-3) -> float:
    """Plug-in estimate of the largest mean loss in the class, floored at ``lambda_min``."""
    if len(samples) == 0:
        raise ValueError("need a non-empty prefix")
    return max(float(np.max(cls.loss_matrix(samples).mean(axis=1))), lambda_min)


@dataclass(frozen=True)
class DpSermLevel:
    level: float
    intrinsic: float
    n_alpha_beta: float


def dp_serm_privacy_level(alpha: float, beta: float, lam: float, epsilon: float) -> DpSermLevel:
    """Weak privacy level of private SERM: max of ``epsilon`` and the stopping-time term."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    N = n_alpha_beta(alpha, beta)
    intrinsic = (
        math.sqrt(2.0 / (lam * math.pi * N))
        * math.exp(-alpha**2 * N / (2.0 * lam))
        * max(1.0, lam / alpha)
    )
    return DpSermLevel(max(epsilon, intrinsic), intrinsic, N)
