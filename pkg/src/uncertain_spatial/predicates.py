"""Spatial query predicates and their evaluation on concrete worlds.

A predicate maps a query position and a concrete placement of the existing
objects to a deterministic result set.  Distance ties are broken by object id
(lexicographic), which makes every per-world ranking a total order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from .model import ValidationError, euclidean_distance
from .worlds import ResultSet


@dataclass(frozen=True)
class RangePredicate:
    """Membership within Euclidean distance ``epsilon`` of the query (boundary inclusive)."""

    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ValidationError("epsilon must be finite and non-negative")

    def evaluate(self, q_pos, placements: Mapping[str, "tuple[float, float]"]) -> ResultSet:
        return ResultSet.of(
            oid for oid, pos in placements.items()
            if euclidean_distance(q_pos, pos) <= self.epsilon
        )


@dataclass(frozen=True)
class KnnPredicate:
    """The k nearest existing objects; fewer when fewer than k objects exist."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be a positive integer")

    def evaluate(self, q_pos, placements: Mapping[str, "tuple[float, float]"]) -> ResultSet:
        ranked = sorted(
            placements, key=lambda oid: (euclidean_distance(q_pos, placements[oid]), oid)
        )
        return ResultSet.of(ranked[: self.k])


SpatialPredicate = Union[RangePredicate, KnnPredicate]
