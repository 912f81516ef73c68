"""Monte-Carlo sampling of possible worlds and support estimation.

Worlds are drawn with SplitMix64 (Steele, Lea & Flood's seedable mix
generator): sample i uses the substream keyed by ``mix64(seed + (i+1)*GAMMA)``
and draws one uniform per object through a second mix step.  Substreams depend
only on (seed, sample index), so sampling is deterministic, order-independent,
and trivially parallel; extending a sample set re-creates its prefix exactly.

Each object's branch (instance index, or absence when the instance
probabilities sum to less than one) is chosen by inverting the cumulative
distribution at the drawn uniform, which samples the database without bias
because objects are independent.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, List, Union

import numpy as np

from .bernoulli import CountDistribution
from .model import QueryPoint, UncertainDatabase, ValidationError, euclidean_distance
from .predicates import KnnPredicate, RangePredicate, SpatialPredicate
from .worlds import PossibleWorld, ResultSet

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_GAMMA_U = np.uint64(_GAMMA)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer (murmur-style avalanche) over uint64 arrays."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _substreams(seed: int, n: int) -> np.ndarray:
    """Per-sample stream keys for samples 0..n-1."""
    idx = np.arange(n, dtype=np.uint64)
    return _mix64(np.uint64(seed & _MASK64) + (idx + np.uint64(1)) * _GAMMA_U)


def _uniforms(streams: np.ndarray, counter: int) -> np.ndarray:
    """One uniform in [0, 1) per stream for the given draw counter."""
    key = np.uint64(((counter + 1) * _GAMMA) & _MASK64)
    z = _mix64(streams + key)
    return (z >> np.uint64(11)) * 2.0**-53


@dataclass(frozen=True)
class SampleSet:
    """A multiset of independently sampled possible worlds.

    ``choices[i, j]`` is the instance index drawn for object j (database
    order) in sample i, or -1 when the object is absent.
    """

    db: UncertainDatabase
    seed: int
    choices: np.ndarray

    def __len__(self) -> int:
        return self.choices.shape[0]

    def worlds(self) -> Iterator[PossibleWorld]:
        """Materialize the samples as possible worlds (probabilities recomputed)."""
        for row in self.choices:
            picks = {}
            prob = 1.0
            for obj, idx in zip(self.db.objects, row):
                if idx < 0:
                    picks[obj.id] = None
                    prob *= obj.absence_prob
                else:
                    picks[obj.id] = int(idx)
                    prob *= obj.instances[int(idx)].prob
            yield PossibleWorld(picks, prob)


@dataclass(frozen=True)
class PossibleResult:
    """A distinct sampled query result and its number of occurrences."""

    result: ResultSet
    support: int


def sample_worlds(db: UncertainDatabase, n: int, seed: int = 42) -> SampleSet:
    """Draw n independent worlds; identical (db, n-prefix, seed) gives identical samples."""
    if n < 1:
        raise ValidationError("sample count must be at least 1")
    streams = _substreams(seed, n)
    choices = np.empty((n, len(db)), dtype=np.int16)
    for j, obj in enumerate(db.objects):
        cum = np.cumsum([inst.prob for inst in obj.instances])
        u = _uniforms(streams, j)
        idx = np.searchsorted(cum, u, side="right")
        if obj.is_existentially_uncertain:
            idx[idx == len(obj.instances)] = -1  # absence branch
        else:
            # guard against float round-off in the cumulative sum
            idx[idx == len(obj.instances)] = len(obj.instances) - 1
        choices[:, j] = idx
    choices.flags.writeable = False
    return SampleSet(db=db, seed=seed, choices=choices)


def _query_columns(X: SampleSet, q: Union[QueryPoint, str]):
    """Resolve the query against the sample set's database."""
    db = X.db
    if isinstance(q, str):
        qobj = db[q]
        if qobj.is_existentially_uncertain:
            raise ValidationError(
                f"query object {q!r} is existentially uncertain; a query must exist"
            )
        q_col = list(db.object_ids).index(q)
        q_positions = [inst.position for inst in qobj.instances]
        return q_col, q_positions
    return None, [q.position]


def _membership_matrix(X: SampleSet, q, predicate: SpatialPredicate):
    """Boolean membership per (sample, object), columns in sorted-id order.

    Returns (member matrix, sorted candidate ids).
    """
    db = X.db
    q_col, q_positions = _query_columns(X, q)
    n = len(X)
    cols = [j for j in range(len(db)) if j != q_col]
    ids = [db.objects[j].id for j in cols]
    order = np.argsort(ids, kind="stable")
    cols = [cols[i] for i in order]
    ids = [ids[i] for i in order]

    if q_col is None:
        q_idx = np.zeros(n, dtype=np.int64)
    else:
        q_idx = X.choices[:, q_col].astype(np.int64)

    if isinstance(predicate, RangePredicate):
        member = np.zeros((n, len(cols)), dtype=bool)
        for out_j, j in enumerate(cols):
            obj = db.objects[j]
            # in-range lookup per (query instance, object instance); last row = absent
            table = np.zeros((len(q_positions), len(obj.instances) + 1), dtype=bool)
            for qi, qp in enumerate(q_positions):
                for ii, inst in enumerate(obj.instances):
                    table[qi, ii] = (
                        euclidean_distance(qp, inst.position) <= predicate.epsilon
                    )
            member[:, out_j] = table[q_idx, X.choices[:, j].astype(np.int64)]
        return member, ids

    if isinstance(predicate, KnnPredicate):
        dist = np.empty((n, len(cols)))
        for out_j, j in enumerate(cols):
            obj = db.objects[j]
            table = np.full((len(q_positions), len(obj.instances) + 1), np.inf)
            for qi, qp in enumerate(q_positions):
                for ii, inst in enumerate(obj.instances):
                    table[qi, ii] = euclidean_distance(qp, inst.position)
            dist[:, out_j] = table[q_idx, X.choices[:, j].astype(np.int64)]
        # stable argsort on id-ordered columns realizes the (distance, id) tie rule
        order = np.argsort(dist, axis=1, kind="stable")
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.broadcast_to(np.arange(len(cols)), dist.shape), axis=1)
        existing = np.isfinite(dist)
        cutoff = np.minimum(predicate.k, existing.sum(axis=1))[:, None]
        member = (ranks < cutoff) & existing
        return member, ids

    raise ValidationError(f"unsupported spatial predicate {predicate!r}")


def _supports_from_membership(member: np.ndarray, ids: List[str]) -> List[PossibleResult]:
    n_obj = len(ids)
    if n_obj <= 63:
        weights = (np.uint64(1) << np.arange(n_obj, dtype=np.uint64))
        codes = (member.astype(np.uint64) * weights).sum(axis=1)
        unique, counts = np.unique(codes, return_counts=True)
        pairs = []
        for code, count in zip(unique.tolist(), counts.tolist()):
            members = tuple(ids[b] for b in range(n_obj) if (code >> b) & 1)
            pairs.append(PossibleResult(ResultSet(members), int(count)))
    else:
        counter = Counter(tuple(np.nonzero(row)[0].tolist()) for row in member)
        pairs = [
            PossibleResult(ResultSet.of(ids[b] for b in key), int(count))
            for key, count in counter.items()
        ]
    pairs.sort(key=lambda pr: (-pr.support, pr.result))
    return pairs


def estimate_result_probabilities(
    X: SampleSet, q: Union[QueryPoint, str], predicate: SpatialPredicate
) -> List[PossibleResult]:
    """Distinct sampled results with their supports; supports sum to |X|.

    ``support / |X|`` is an unbiased estimator of the probability that the
    result is the true query outcome.
    """
    member, ids = _membership_matrix(X, q, predicate)
    return _supports_from_membership(member, ids)


def estimate_object_probabilities(
    X: SampleSet, q: Union[QueryPoint, str], predicate: SpatialPredicate
) -> Dict[str, float]:
    """Per-object membership frequency across the sampled worlds."""
    member, ids = _membership_matrix(X, q, predicate)
    freq = member.mean(axis=0)
    return {oid: float(f) for oid, f in zip(ids, freq)}


def estimate_count_distribution(X: SampleSet, rq_center: QueryPoint, epsilon: float) -> CountDistribution:
    """Empirical distribution of the in-range object count across samples."""
    member, _ = _membership_matrix(X, rq_center, RangePredicate(epsilon))
    counts = member.sum(axis=1)
    mass = np.bincount(counts, minlength=len(X.db) + 1).astype(float) / len(X)
    return CountDistribution(mass)
