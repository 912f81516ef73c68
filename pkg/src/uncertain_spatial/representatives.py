"""Selection of representative query results from sampled possible results.

A representative is a sampled result reported together with a distance radius
tau and a significance-alpha lower bound phi on the probability that the true
(unknown) result lies within Jaccard distance tau of it.  Two selection
strategies are provided: greedy maximum cover (user supplies tau and the
number of representatives) and k-medoid clustering of the result space
(complete/minimax radius per cluster, or a fixed tau_max radius).

Possible results form a compressed multiset, so every count here is weighted
by support.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import ValidationError
from .sampling import PossibleResult
from .worlds import ResultSet

# Coefficients of Acklam's rational approximation to the standard normal
# quantile (relative error < 1.15e-9 before refinement).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def standard_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Acklam's rational approximation followed by one Halley refinement step
    against the erfc-based CDF; absolute error is far below 1e-8 across (0, 1).
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError("quantile argument must lie in [0, 1]")
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0]*q + _C[1])*q + _C[2])*q + _C[3])*q + _C[4])*q + _C[5]) / \
            (((( _D[0]*q + _D[1])*q + _D[2])*q + _D[3])*q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((( _A[0]*r + _A[1])*r + _A[2])*r + _A[3])*r + _A[4])*r + _A[5]) * q / \
            ((((( _B[0]*r + _B[1])*r + _B[2])*r + _B[3])*r + _B[4])*r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((( _C[0]*q + _C[1])*q + _C[2])*q + _C[3])*q + _C[4])*q + _C[5]) / \
            (((( _D[0]*q + _D[1])*q + _D[2])*q + _D[3])*q + 1.0)
    # Halley refinement: Phi(x) via erfc is accurate to machine precision.
    # Beyond |x| ~ 37 the correction underflows/overflows; the raw
    # approximation is already far below the 1e-8 error budget there.
    if abs(x) < 37.0:
        err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def alpha_confidence(p_hat: float, n: int, alpha: float) -> float:
    """Significance-alpha lower bound on a binomially estimated probability.

    Normal approximation: ``p_hat - z * sqrt(p_hat (1 - p_hat) / n)`` with z
    the upper-tail critical value for significance alpha (the magnitude of the
    100*(1-alpha) standard-normal percentile), clamped to [0, 1].  Emits a
    warning when ``n * p_hat < 5``, where the approximation is unreliable.
    """
    if n < 1:
        raise ValidationError("sample count must be at least 1")
    if not 0.0 <= p_hat <= 1.0:
        raise ValidationError("p_hat must lie in [0, 1]")
    if n * p_hat < 5:
        warnings.warn(
            f"normal approximation unreliable: n * p_hat = {n * p_hat:.3g} < 5",
            stacklevel=2,
        )
    sd = math.sqrt(p_hat * (1.0 - p_hat) / n)
    if sd == 0.0:
        return p_hat
    z = standard_normal_quantile(alpha)
    return min(1.0, max(0.0, p_hat - z * sd))


def jaccard_distance(r1: ResultSet, r2: ResultSet) -> float:
    """1 - |intersection| / |union|; two empty results have distance 0."""
    s1, s2 = set(r1.members), set(r2.members)
    union = s1 | s2
    if not union:
        return 0.0
    return 1.0 - len(s1 & s2) / len(union)


@dataclass(frozen=True)
class Representative:
    """A selected result with its radius tau, confidence phi, and covered support."""

    result: ResultSet
    tau: float
    phi: float
    alpha: float
    support: int


def _distance_matrix(pr: Sequence[PossibleResult]) -> np.ndarray:
    m = len(pr)
    dist = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            dist[i, j] = dist[j, i] = jaccard_distance(pr[i].result, pr[j].result)
    return dist


def _covered_support(dist_row: np.ndarray, supports: np.ndarray, tau: float) -> int:
    return int(supports[dist_row <= tau].sum())


def _make_representative(
    pr: Sequence[PossibleResult],
    dist: np.ndarray,
    supports: np.ndarray,
    n_samples: int,
    idx: int,
    tau: float,
    alpha: float,
) -> Representative:
    covered = _covered_support(dist[idx], supports, tau)
    phi = alpha_confidence(covered / n_samples, n_samples, alpha)
    return Representative(
        result=pr[idx].result, tau=tau, phi=phi, alpha=alpha, support=covered
    )


def max_cover_representatives(
    pr: Sequence[PossibleResult], tau: float, n: int, alpha: float
) -> List[Representative]:
    """Greedy maximum-cover selection of at most n representatives.

    Each iteration picks the result covering the largest not-yet-covered
    support within Jaccard distance tau (ties by result id order) and removes
    what it covers; selection stops early once everything is covered.  Greedy
    guarantees at least a 1 - 1/e fraction of the optimal cover.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValidationError("tau must lie in [0, 1]")
    if n < 1:
        raise ValidationError("number of representatives must be at least 1")
    if not pr:
        return []
    supports = np.array([r.support for r in pr], dtype=np.int64)
    n_samples = int(supports.sum())
    dist = _distance_matrix(pr)
    uncovered = np.ones(len(pr), dtype=bool)
    chosen: List[Representative] = []
    for _ in range(n):
        if not uncovered.any():
            break
        best, best_gain = None, -1
        for i in range(len(pr)):
            gain = int(supports[uncovered & (dist[i] <= tau)].sum())
            if gain > best_gain or (
                gain == best_gain and best is not None and pr[i].result < pr[best].result
            ):
                best, best_gain = i, gain
        chosen.append(
            _make_representative(pr, dist, supports, n_samples, best, tau, alpha)
        )
        uncovered &= ~(dist[best] <= tau)
    return chosen


def _pam_build(dist: np.ndarray, weights: np.ndarray, k: int) -> List[int]:
    m = dist.shape[0]
    costs = dist * weights[None, :]
    first = int(np.argmin(costs.sum(axis=1)))
    medoids = [first]
    nearest = dist[first].copy()
    while len(medoids) < k:
        best, best_cost = None, math.inf
        for cand in range(m):
            if cand in medoids:
                continue
            cost = float((np.minimum(nearest, dist[cand]) * weights).sum())
            if cost < best_cost - 1e-15:
                best, best_cost = cand, cost
        medoids.append(best)
        nearest = np.minimum(nearest, dist[best])
    return medoids


def pam_kmedoids(
    dist: np.ndarray, weights: np.ndarray, k: int
) -> Tuple[List[int], np.ndarray]:
    """Support-weighted PAM: greedy build, then swap until no improvement.

    Returns the sorted medoid indices and, per point, the index (into the
    medoid list) of its nearest medoid.  Ties are resolved deterministically
    by index order.
    """
    m = dist.shape[0]
    if not 1 <= k <= m:
        raise ValidationError(f"cluster count must be within 1..{m}")
    medoids = _pam_build(dist, weights, k)

    def total_cost(meds: List[int]) -> float:
        return float((dist[meds].min(axis=0) * weights).sum())

    current = total_cost(medoids)
    improved = True
    while improved:
        improved = False
        best_swap, best_cost = None, current
        for med in sorted(medoids):
            for cand in range(m):
                if cand in medoids:
                    continue
                trial = [c for c in medoids if c != med] + [cand]
                cost = total_cost(trial)
                if cost < best_cost - 1e-12:
                    best_swap, best_cost = (med, cand), cost
        if best_swap is not None:
            med, cand = best_swap
            medoids = [c for c in medoids if c != med] + [cand]
            current = best_cost
            improved = True
    medoids = sorted(medoids)
    labels = np.argmin(dist[medoids], axis=0)
    return medoids, labels


def _weighted_silhouette(dist: np.ndarray, weights: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over the support-weighted multiset of results."""
    m = dist.shape[0]
    k = labels.max() + 1
    cluster_w = np.array([weights[labels == c].sum() for c in range(k)])
    score_sum, weight_sum = 0.0, 0.0
    for i in range(m):
        c = labels[i]
        within = cluster_w[c] - 1  # other members, counting same-result copies at distance 0
        if within <= 0:
            continue
        a = float((dist[i, labels == c] * weights[labels == c]).sum()) / within
        b = math.inf
        for other in range(k):
            if other == c or cluster_w[other] == 0:
                continue
            b = min(
                b,
                float((dist[i, labels == other] * weights[labels == other]).sum())
                / cluster_w[other],
            )
        if not math.isfinite(b):
            continue
        denom = max(a, b)
        s = 0.0 if denom == 0.0 else (b - a) / denom
        score_sum += weights[i] * s
        weight_sum += weights[i]
    return 0.0 if weight_sum == 0.0 else score_sum / weight_sum


def _choose_cluster_count(dist: np.ndarray, weights: np.ndarray) -> int:
    m = dist.shape[0]
    candidates = range(2, min(8, m - 1) + 1)
    best_k, best_score = None, -math.inf
    for k in candidates:
        _, labels = pam_kmedoids(dist, weights, k)
        score = _weighted_silhouette(dist, weights, labels)
        if score > best_score + 1e-12:
            best_k, best_score = k, score
    return best_k if best_k is not None else min(2, m)


def cluster_representatives(
    pr: Sequence[PossibleResult],
    alpha: float,
    mode: str = "complete",
    tau_max: Optional[float] = None,
    k: Optional[int] = None,
) -> List[Representative]:
    """One representative per k-medoid cluster of the sampled results.

    ``complete`` mode returns each cluster's minimax member with tau equal to
    its largest distance to a cluster member; ``tau_max`` mode returns the
    member with the largest support-weighted within-cluster coverage at radius
    tau_max.  When k is not given it is chosen by maximizing the weighted mean
    silhouette over k in 2..min(8, |PR| - 1).
    """
    if mode not in ("complete", "tau_max"):
        raise ValidationError(f"unknown cluster mode {mode!r}")
    if mode == "tau_max":
        if tau_max is None or not 0.0 <= tau_max <= 1.0:
            raise ValidationError("tau_max mode requires tau_max in [0, 1]")
    if not pr:
        return []
    supports = np.array([r.support for r in pr], dtype=np.int64)
    n_samples = int(supports.sum())
    dist = _distance_matrix(pr)
    if len(pr) < 2:
        return [_make_representative(pr, dist, supports, n_samples, 0, 0.0, alpha)]
    if k is None:
        k = _choose_cluster_count(dist, weights=supports.astype(float))
    medoids, labels = pam_kmedoids(dist, supports.astype(float), k)

    reps: List[Representative] = []
    for c in range(len(medoids)):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        sub = dist[np.ix_(members, members)]
        if mode == "complete":
            minimax = sub.max(axis=1)
            order = sorted(
                range(len(members)), key=lambda i: (minimax[i], pr[members[i]].result)
            )
            pick = members[order[0]]
            tau = float(minimax[order[0]])
        else:
            coverage = [
                int(supports[members[sub[i] <= tau_max]].sum())
                for i in range(len(members))
            ]
            order = sorted(
                range(len(members)),
                key=lambda i: (-coverage[i], pr[members[i]].result),
            )
            pick = members[order[0]]
            tau = float(tau_max)
        reps.append(
            _make_representative(pr, dist, supports, n_samples, int(pick), tau, alpha)
        )
    return reps
