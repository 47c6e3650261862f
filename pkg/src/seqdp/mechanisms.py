"""Randomization primitives.

All samplers use inverse-CDF transforms of uniforms drawn from a
``numpy.random.Generator``, so replaying the generator replays the output.
Functions taking ``size`` return an array when it is given and a Python
scalar otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


def _check_scale(scale: float) -> None:
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")


def laplace_from_uniform(u, scale: float):
    """Map uniforms in (0, 1) to mean-zero Laplace variates."""
    u = np.asarray(u, dtype=float)
    c = u - 0.5
    return -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def sample_laplace(scale: float, rng: np.random.Generator, size=None):
    _check_scale(scale)
    x = laplace_from_uniform(rng.random(size), scale)
    return float(x) if size is None else x


def sample_discrete_laplace(scale: float, rng: np.random.Generator, size=None):
    """Integer variate with P(k) proportional to exp(-|k| / scale).

    Drawn as the difference of two i.i.d. geometric variates on {0, 1, ...}.
    """
    _check_scale(scale)
    p = -math.expm1(-1.0 / scale)
    k = rng.geometric(p, size) - rng.geometric(p, size)
    return int(k) if size is None else k.astype(np.int64)


@dataclass(frozen=True)
class TruncatedLaplace:
    """Mean-zero Laplace law with scale ``scale`` restricted to ``[lo, hi]``."""

    scale: float
    lo: float
    hi: float

    def __post_init__(self):
        _check_scale(self.scale)
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    def _cdf_untruncated(self, x):
        x = np.asarray(x, dtype=float)
        s = self.scale
        return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0) / s), 1.0 - 0.5 * np.exp(-np.maximum(x, 0) / s))

    @property
    def mass(self) -> float:
        """Probability the untruncated law assigns to ``[lo, hi]``."""
        return float(self._cdf_untruncated(self.hi) - self._cdf_untruncated(self.lo))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = np.exp(-np.abs(x) / self.scale) / (2.0 * self.scale * self.mass)
        return np.where((x >= self.lo) & (x <= self.hi), dens, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        return (self._cdf_untruncated(x) - self._cdf_untruncated(self.lo)) / self.mass

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        s, lo, hi = self.scale, self.lo, self.hi
        if lo >= 0:
            # one-sided exponential tail; avoids cancellation of CDF values near 1
            x = lo - s * np.log1p(q * np.expm1(-(hi - lo) / s))
        elif hi <= 0:
            x = hi + s * np.log1p((1.0 - q) * np.expm1(-(hi - lo) / s))
        else:
            f_lo = float(self._cdf_untruncated(lo))
            target = f_lo + q * self.mass
            below = target < 0.5
            x = np.where(
                below,
                s * np.log(2.0 * np.where(below, target, 0.25)),
                -s * np.log(2.0 * (1.0 - np.where(below, 0.75, target))),
            )
        return np.clip(x, lo, hi)

    def sample(self, rng: np.random.Generator, size=None):
        x = self.ppf(rng.random(size))
        return float(x) if size is None else x


def sample_truncated_laplace(spec: TruncatedLaplace, rng: np.random.Generator, size=None):
    return spec.sample(rng, size)


@dataclass(frozen=True)
class FiniteMechanismSpec:
    candidates: tuple
    utilities: tuple[float, ...]
    epsilon: float
    sensitivity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "utilities", tuple(float(u) for u in self.utilities))
        if not self.candidates:
            raise ValueError("exponential mechanism needs at least one candidate")
        if len(self.candidates) != len(self.utilities):
            raise ValueError("candidates and utilities must align")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")

    def probabilities(self) -> np.ndarray:
        if math.isinf(self.epsilon):
            best = np.asarray(self.utilities) == max(self.utilities)
            return best / best.sum()
        logits = self.epsilon * np.asarray(self.utilities) / (2.0 * self.sensitivity)
        logits -= logits.max()
        w = np.exp(logits)
        return w / w.sum()


def exponential_mechanism(spec: FiniteMechanismSpec, rng: np.random.Generator) -> Any:
    probs = spec.probabilities()
    i = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return spec.candidates[min(i, len(probs) - 1)]


def flip_probability(epsilon: float) -> float:
    """1 / (1 + e^epsilon), evaluated without overflow."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if math.isinf(epsilon):
        return 0.0
    t = math.exp(-epsilon)
    return t / (1.0 + t)


def randomized_response(bit, epsilon: float, rng: np.random.Generator, size=None):
    """Report ``bit`` truthfully with probability e^eps / (1 + e^eps).

    ``bit`` may be an array, in which case ``size`` defaults to its shape.
    """
    q = flip_probability(epsilon)
    bits = np.asarray(bit)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("randomized response takes bits in {0, 1}")
    if bits.ndim == 0 and size is None:
        return int(bit) ^ int(rng.random() < q)
    shape = bits.shape if size is None else size
    return np.bitwise_xor(bits.astype(np.int64), (rng.random(shape) < q).astype(np.int64))
