"""Production-path probabilistic spatial queries.

Per-object probabilities for range, kNN, and rank queries are computed in
polynomial time by reducing each to the distribution of a sum of independent
Bernoulli trials: for a fixed candidate instance at distance d, every other
object is a trial that succeeds when it ends up strictly closer than d (ties
broken by object id).  Probabilistic query predicates (threshold, top-k,
possibilistic) then filter the per-object probabilities.

Queries may be a fixed :class:`QueryPoint` or the id of a database object;
an object query is mixed over its own instances and never appears in results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from .bernoulli import CountDistribution, poisson_binomial_recurrence
from .model import (
    QueryPoint,
    UncertainDatabase,
    UncertainObject,
    ValidationError,
    euclidean_distance,
)
from .predicates import KnnPredicate, RangePredicate, SpatialPredicate
from .worlds import ResultSet

#: Bernoulli-sum kernel signature; the recurrence is the default path and the
#: generating-function expansion is the drop-in alternative.
Kernel = Callable[[Sequence[float]], CountDistribution]

#: Probabilities are rounded to this many decimal digits before predicate
#: comparisons, so threshold and tie decisions are stable across kernels.
COMPARISON_DIGITS = 12

Query = Union[QueryPoint, str]


@dataclass(frozen=True)
class RangeQuery:
    """A range query region: center point plus non-negative radius."""

    center: QueryPoint
    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ValidationError("epsilon must be finite and non-negative")


@dataclass(frozen=True)
class ProbabilisticPredicate:
    """Filter on per-object result probabilities.

    ``threshold`` keeps objects with probability >= tau; ``topk`` keeps the k
    most probable objects (boundary ties included, so the result may exceed
    k); ``possibilistic`` keeps every object with non-zero probability.
    """

    kind: str
    tau: Optional[float] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind == "threshold":
            if self.tau is None or not (0.0 <= self.tau <= 1.0):
                raise ValidationError("threshold predicate requires tau in [0, 1]")
        elif self.kind == "topk":
            if self.k is None or self.k < 1:
                raise ValidationError("topk predicate requires integer k >= 1")
        elif self.kind != "possibilistic":
            raise ValidationError(f"unknown probabilistic predicate kind {self.kind!r}")

    def select(self, probabilities: Dict[str, float]) -> ResultSet:
        rounded = {oid: round(p, COMPARISON_DIGITS) for oid, p in probabilities.items()}
        if self.kind == "possibilistic" or (self.kind == "threshold" and self.tau == 0.0):
            return ResultSet.of(oid for oid, p in rounded.items() if p > 0.0)
        if self.kind == "threshold":
            return ResultSet.of(oid for oid, p in rounded.items() if p >= self.tau)
        ranked = sorted(rounded, key=lambda oid: (-rounded[oid], oid))
        if len(ranked) <= self.k:
            return ResultSet.of(ranked)
        boundary = rounded[ranked[self.k - 1]]
        return ResultSet.of(oid for oid in ranked if rounded[oid] >= boundary)


def in_range_probability(obj: UncertainObject, rq: RangeQuery) -> float:
    """Total probability mass of the object's instances inside the query region."""
    center = rq.center.position
    total = math.fsum(
        inst.prob
        for inst in obj.instances
        if euclidean_distance(center, inst.position) <= rq.epsilon
    )
    return min(1.0, total)


def range_count_distribution(
    db: UncertainDatabase,
    rq: RangeQuery,
    kernel: Kernel = poisson_binomial_recurrence,
) -> CountDistribution:
    """Distribution of the number of objects inside the query region.

    Each object contributes one Bernoulli trial with success probability
    equal to its in-range probability; the trials are independent, so the
    count is Poisson-binomial.
    """
    return kernel([in_range_probability(obj, rq) for obj in db.objects])


def expected_distance(obj: UncertainObject, q: QueryPoint) -> float:
    """Probability-weighted distance sum; not renormalized under existential uncertainty."""
    return math.fsum(
        inst.prob * euclidean_distance(q.position, inst.position)
        for inst in obj.instances
    )


def _closer_probability(
    competitor: UncertainObject, q_pos, d: float, target_id: str
) -> float:
    """Probability that the competitor exists strictly closer than distance d.

    Equal distance counts as closer only when the competitor's id precedes the
    target's (the global tie rule); absence counts as not closer.
    """
    total = 0.0
    for inst in competitor.instances:
        di = euclidean_distance(q_pos, inst.position)
        if di < d or (di == d and competitor.id < target_id):
            total += inst.prob
    return min(1.0, total)


def _resolve_object(db: UncertainDatabase, o: Union[UncertainObject, str]) -> UncertainObject:
    if isinstance(o, str):
        return db[o]
    if o.id not in db:
        raise KeyError(o.id)
    return o


def _mix_over_query(db: UncertainDatabase, q: str):
    """Yield (weight, fixed query point, database without the query object)."""
    qobj = db[q]
    if qobj.is_existentially_uncertain:
        raise ValidationError(
            f"query object {q!r} is existentially uncertain; a query must exist"
        )
    rest = db.without(q)
    for inst in qobj.instances:
        yield inst.prob, QueryPoint(*inst.position), rest


def knn_object_probability(
    db: UncertainDatabase,
    q: Query,
    k: int,
    o: Union[UncertainObject, str],
    kernel: Kernel = poisson_binomial_recurrence,
) -> float:
    """Probability that the object belongs to the k-nearest-neighbor result.

    For every instance u of the object, the number of other objects strictly
    closer than u is a Poisson-binomial count; u contributes
    ``P(u) * P(at most k-1 closer)``.
    """
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if isinstance(q, str):
        return math.fsum(
            w * knn_object_probability(rest, point, k, o, kernel)
            for w, point, rest in _mix_over_query(db, q)
        )
    target = _resolve_object(db, o)
    q_pos = q.position
    others = [obj for obj in db.objects if obj.id != target.id]
    total = 0.0
    for inst in target.instances:
        d = euclidean_distance(q_pos, inst.position)
        closer = [_closer_probability(c, q_pos, d, target.id) for c in others]
        total += inst.prob * kernel(closer).prob_at_most(k - 1)
    return min(1.0, total)


def rank_distribution(
    db: UncertainDatabase,
    q: Query,
    o: Union[UncertainObject, str],
    kernel: Kernel = poisson_binomial_recurrence,
) -> CountDistribution:
    """Distribution over the object's rank 1..N by distance from the query.

    ``mass[j-1]`` is the probability of rank j (exactly j-1 objects closer).
    Worlds where the object does not exist carry no rank, so the mass sums to
    the object's existence probability.
    """
    if isinstance(q, str):
        parts = [
            (w, rank_distribution(rest, point, o, kernel))
            for w, point, rest in _mix_over_query(db, q)
        ]
        n = len(parts[0][1])
        mass = np.zeros(n)
        for w, cd in parts:
            mass += w * cd.mass
        return CountDistribution(mass)
    target = _resolve_object(db, o)
    q_pos = q.position
    others = [obj for obj in db.objects if obj.id != target.id]
    mass = np.zeros(len(db))
    for inst in target.instances:
        d = euclidean_distance(q_pos, inst.position)
        closer = [_closer_probability(c, q_pos, d, target.id) for c in others]
        mass += inst.prob * kernel(closer).mass
    return CountDistribution(mass)


def object_probabilities(
    db: UncertainDatabase,
    q: Query,
    predicate: SpatialPredicate,
    kernel: Kernel = poisson_binomial_recurrence,
) -> Dict[str, float]:
    """Per-object probability of satisfying the spatial predicate, for all objects."""
    if isinstance(q, str):
        acc: Dict[str, float] = {}
        for w, point, rest in _mix_over_query(db, q):
            for oid, p in object_probabilities(rest, point, predicate, kernel).items():
                acc[oid] = acc.get(oid, 0.0) + w * p
        return acc
    if isinstance(predicate, RangePredicate):
        rq = RangeQuery(q, predicate.epsilon)
        return {obj.id: in_range_probability(obj, rq) for obj in db.objects}
    if isinstance(predicate, KnnPredicate):
        return {
            obj.id: knn_object_probability(db, q, predicate.k, obj, kernel)
            for obj in db.objects
        }
    raise ValidationError(f"unsupported spatial predicate {predicate!r}")


def threshold_query(
    db: UncertainDatabase,
    q: Query,
    predicate: SpatialPredicate,
    tau: float,
    kernel: Kernel = poisson_binomial_recurrence,
) -> ResultSet:
    """Objects whose result probability is at least tau (tau = 0 is possibilistic)."""
    probs = object_probabilities(db, q, predicate, kernel)
    return ProbabilisticPredicate(kind="threshold", tau=tau).select(probs)


def topk_predicate(
    db: UncertainDatabase,
    q: Query,
    predicate: SpatialPredicate,
    k: int,
    kernel: Kernel = poisson_binomial_recurrence,
) -> ResultSet:
    """The k objects most likely to satisfy the predicate, boundary ties included."""
    probs = object_probabilities(db, q, predicate, kernel)
    if not 1 <= k <= len(probs):
        raise ValidationError(f"k must be within 1..{len(probs)}")
    return ProbabilisticPredicate(kind="topk", k=k).select(probs)
