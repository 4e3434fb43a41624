"""Quality gate: hypothesis test against the human-labeled realism baseline.

A human labeling a real tuple as realistic is modeled as a Bernoulli draw
with probability p, estimated once per catalog from a calibration sample.
Each generated tuple receives N labels; the gate rejects the tuple when the
one-sided Student t-test can reject "this tuple is labeled realistic as
often as a real one" at significance alpha, i.e. when the lower-tail
p-value of

    t = (m - p) / (s / sqrt(N))

falls below alpha (m, s: label sample mean / standard deviation).  With a
zero-variance batch the statistic is taken as +inf when m >= p and -inf
otherwise, the limit-consistent extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import InvalidAlpha, InvalidN, TooFewCalibrationLabels

DEFAULT_EVALUATION_BUDGET = 5
DEFAULT_ALPHA = 0.1
_CLAMP = 1e-6


@dataclass
class CalibrationSample:
    """Labels from (random evaluator, random real tuple) pairs."""

    labels: list[bool]

    @property
    def mean(self) -> float:
        return sum(self.labels) / len(self.labels)


def calibrate_p(sample: CalibrationSample, min_labels: int = 30) -> float:
    """Baseline realism probability, clamped away from 0 and 1."""
    if len(sample.labels) < min_labels:
        raise TooFewCalibrationLabels(
            f"{len(sample.labels)} calibration labels, need at least {min_labels}"
        )
    return min(max(sample.mean, _CLAMP), 1.0 - _CLAMP)


@dataclass
class EvaluationBatch:
    tuple_id: str
    labels: list[bool]

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def mean(self) -> float:
        return sum(self.labels) / len(self.labels)

    @property
    def std(self) -> float:
        """Sample standard deviation (N-1 denominator)."""
        m = self.mean
        return math.sqrt(sum((x - m) ** 2 for x in self.labels) / (len(self.labels) - 1))


def t_statistic(m_t: float, s_t: float, n: int, p: float) -> float:
    if n < 2:
        raise InvalidN("need at least two labels for a t statistic")
    if s_t < 0:
        raise ValueError("standard deviation cannot be negative")
    if s_t == 0.0:
        return math.inf if m_t >= p else -math.inf
    return (m_t - p) / (s_t / math.sqrt(n))


def p_value_lower_tail(t: float, df: int) -> float:
    """P(T_df <= t) through the regularized incomplete beta function."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    half_tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return half_tail if t <= 0 else 1.0 - half_tail


@dataclass(frozen=True)
class QualityVerdict:
    accept: bool
    t_stat: float
    p_value: float
    alpha: float


def quality_test(batch: EvaluationBatch, p: float, alpha: float) -> QualityVerdict:
    """Reject (discard) when the lower-tail p-value is below alpha."""
    if not 0 < alpha <= 0.5:
        raise InvalidAlpha("alpha must lie in (0, 0.5]")
    if batch.n < 2:
        raise InvalidN("quality batches need at least two labels")
    t = t_statistic(batch.mean, batch.std, batch.n, p)
    pv = p_value_lower_tail(t, batch.n - 1)
    return QualityVerdict(accept=pv >= alpha, t_stat=t, p_value=pv, alpha=alpha)


class SimulatedEvaluator:
    """Draws labels as independent Bernoulli trials.

    The realism probability may depend on how the candidate was produced
    (guide strategy, mask level), so experiments shaped like the human study
    are configuration, not code."""

    def __init__(self, realism_prob: float | dict[str, float], default: float = 0.8):
        self._probs = realism_prob if isinstance(realism_prob, dict) else None
        self._flat = realism_prob if not isinstance(realism_prob, dict) else None
        self._default = default

    def prob_for(self, key: str | Sequence[str] | None = None) -> float:
        if self._flat is not None:
            return self._flat
        keys = [key] if key is None or isinstance(key, str) else list(key)
        for k in keys:
            if k is not None and k in self._probs:
                return self._probs[k]
        return self._probs.get("default", self._default)

    def evaluate(
        self, n_labels: int, rng: np.random.Generator, key: str | Sequence[str] | None = None
    ) -> list[bool]:
        q = self.prob_for(key)
        return [bool(rng.random() < q) for _ in range(n_labels)]


def batch_accept_probability(n: int, p: float, alpha: float, q: float) -> float:
    """Chance a simulated batch of n Bernoulli(q) labels passes the gate.

    Enumerates the n+1 label counts; used to tune simulations to a target
    acceptance rate.
    """
    total = 0.0
    for k in range(n + 1):
        batch = EvaluationBatch("probe", [True] * k + [False] * (n - k))
        if quality_test(batch, p, alpha).accept:
            total += math.comb(n, k) * q**k * (1 - q) ** (n - k)
    return total
