"""Distribution of the sum of independent, non-identical Bernoulli trials.

Two independent O(N^2) computations of the Poisson-binomial probability mass
function are provided and cross-checked by the test suite:

* a dynamic-programming recurrence over states (successes so far / trials
  seen), updating a single row in place, and
* iterative expansion of the product of the per-trial generating polynomials
  ``(1 - p_i) + p_i x``, unifying like exponents after each factor.

The recurrence is the default production path; the generating-function route
exists as the redundant second implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import PROB_TOL, ValidationError

#: Negative mass beyond this threshold is treated as an internal error rather
#: than round-off.
ROUNDOFF_CLAMP = -1e-15


@dataclass(frozen=True)
class CountDistribution:
    """Probability mass over success counts 0..N (or ranks, for rank queries).

    Tiny negative round-off (above ``ROUNDOFF_CLAMP``) is clamped to zero on
    construction; anything more negative raises.  Whether the mass must sum to
    one depends on the producing operation (rank distributions sum to the
    object's existence probability), so normalization is checked by callers
    via :meth:`require_normalized`.
    """

    mass: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mass, dtype=float)
        low = arr.min(initial=0.0)
        if low < ROUNDOFF_CLAMP:
            raise ValueError(f"negative probability mass {low} exceeds round-off clamp")
        arr = np.where(arr < 0.0, 0.0, arr)
        arr.flags.writeable = False
        object.__setattr__(self, "mass", arr)

    def __len__(self) -> int:
        return len(self.mass)

    def prob_at_most(self, k: int) -> float:
        """P(count <= k); zero for k < 0."""
        if k < 0:
            return 0.0
        return float(self.mass[: k + 1].sum())

    def total(self) -> float:
        return float(self.mass.sum())

    def require_normalized(self) -> "CountDistribution":
        if abs(self.total() - 1.0) > PROB_TOL:
            raise ValueError(f"count distribution sums to {self.total()}, expected 1")
        return self


def _validated(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(list(probs), dtype=float)
    if p.size and (not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise ValidationError("Bernoulli probabilities must be finite and within [0, 1]")
    return p


def poisson_binomial_recurrence(probs: Sequence[float]) -> CountDistribution:
    """Poisson-binomial pmf by the row recurrence; O(N^2) time, O(N) space.

    State (i/j) holds the probability of i successes among the first j
    trials; each trial folds into the row as
    ``P(i/j) = P(i-1/j-1) * p_j + P(i/j-1) * (1 - p_j)``.
    """
    p = _validated(probs)
    n = p.size
    row = np.zeros(n + 1)
    row[0] = 1.0
    for j in range(1, n + 1):
        pj = p[j - 1]
        row[1 : j + 1] = row[:j] * pj + row[1 : j + 1] * (1.0 - pj)
        row[0] *= 1.0 - pj
    return CountDistribution(row).require_normalized()


def generating_function(probs: Sequence[float]) -> CountDistribution:
    """Poisson-binomial pmf by expanding the product of generating polynomials.

    The coefficient of x^k in ``prod_i ((1 - p_i) + p_i x)`` is the
    probability of exactly k successes.  Factors are multiplied in one at a
    time; convolution unifies monomials of equal exponent at every step.
    """
    p = _validated(probs)
    coeffs = np.array([1.0])  # empty product: certainly zero successes
    for pi in p:
        coeffs = np.convolve(coeffs, np.array([1.0 - pi, pi]))
    return CountDistribution(coeffs).require_normalized()
