"""Domain model for discretely-uncertain spatial databases.

An uncertain object is a block of mutually exclusive point instances, each
carrying a probability; if the probabilities sum to less than one, the
remainder is the probability that the object does not exist at all
(existential uncertainty).  Distinct objects are stochastically independent.
Databases are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Union

#: Tolerance for probability-sum checks.  Double-precision accumulation over
#: up to ~10^4 instances stays well inside this bound.
PROB_TOL = 1e-9

Position = "tuple[float, float]"


class UncertainSpatialError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(UncertainSpatialError):
    """A dataset, parameter, or query violates a model invariant."""


class CapExceededError(UncertainSpatialError):
    """An exact computation would exceed its configured size cap."""


def euclidean_distance(a: "tuple[float, float]", b: "tuple[float, float]") -> float:
    """Euclidean distance between two 2-D points."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class QueryPoint:
    """A certain 2-D query location."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError("query point coordinates must be finite")

    @property
    def position(self) -> "tuple[float, float]":
        return (self.x, self.y)


@dataclass(frozen=True)
class Instance:
    """One alternative position of an uncertain object.

    Instances within an object are mutually exclusive; ``index`` is the
    position in the object's file order and is the system-wide tiebreaker
    after the object id.
    """

    object_id: str
    index: int
    position: "tuple[float, float]"
    prob: float

    def __post_init__(self):
        x, y = self.position
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValidationError(
                f"object {self.object_id!r}: instance {self.index} has non-finite coordinates"
            )
        if not (self.prob > 0.0):
            raise ValidationError(
                f"object {self.object_id!r}: instance {self.index} has probability <= 0"
            )
        if self.prob > 1.0 + PROB_TOL:
            raise ValidationError(
                f"object {self.object_id!r}: instance {self.index} has probability > 1"
            )


@dataclass(frozen=True)
class UncertainObject:
    """A block of mutually exclusive instances (an x-tuple).

    The existence probability is the sum of the instance probabilities; a sum
    below one (beyond tolerance) makes the object existentially uncertain.
    """

    id: str
    instances: "tuple[Instance, ...]"

    def __post_init__(self):
        if not self.instances:
            raise ValidationError(f"object {self.id!r} has no instances")
        total = math.fsum(inst.prob for inst in self.instances)
        if total > 1.0 + PROB_TOL:
            raise ValidationError(
                f"object {self.id!r}: instance probabilities sum to {total}, exceeding 1"
            )
        if not (total > 0.0):
            raise ValidationError(f"object {self.id!r}: instance probabilities sum to 0")

    @property
    def existence_prob(self) -> float:
        """Probability that the object exists (sum of instance probabilities)."""
        return min(1.0, math.fsum(inst.prob for inst in self.instances))

    @property
    def absence_prob(self) -> float:
        return max(0.0, 1.0 - math.fsum(inst.prob for inst in self.instances))

    @property
    def is_existentially_uncertain(self) -> bool:
        return math.fsum(inst.prob for inst in self.instances) < 1.0 - PROB_TOL


@dataclass(frozen=True)
class UncertainDatabase:
    """An ordered collection of independent uncertain objects.

    Inter-object independence is assumed throughout: the probability of a
    possible world is the product of the per-object choice probabilities.
    """

    objects: "tuple[UncertainObject, ...]"

    def __post_init__(self):
        seen = set()
        for obj in self.objects:
            if obj.id in seen:
                raise ValidationError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def __getitem__(self, object_id: str) -> UncertainObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def __contains__(self, object_id: str) -> bool:
        return any(obj.id == object_id for obj in self.objects)

    @property
    def object_ids(self) -> "tuple[str, ...]":
        return tuple(obj.id for obj in self.objects)

    def without(self, object_id: str) -> "UncertainDatabase":
        """A copy of the database with one object removed (order preserved)."""
        if object_id not in self:
            raise KeyError(object_id)
        return UncertainDatabase(tuple(o for o in self.objects if o.id != object_id))


def database_from_dicts(objects: Iterable[dict]) -> UncertainDatabase:
    """Build a validated database from parsed JSON object records."""
    built = []
    for rec in objects:
        try:
            oid = rec["id"]
            raw_instances = rec["instances"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"object record missing field: {exc}") from exc
        if not isinstance(oid, str):
            raise ValidationError(f"object id {oid!r} is not a string")
        instances = []
        for idx, inst in enumerate(raw_instances):
            try:
                x, y, p = float(inst["x"]), float(inst["y"]), float(inst["p"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"object {oid!r}: malformed instance {idx}") from exc
            instances.append(Instance(object_id=oid, index=idx, position=(x, y), prob=p))
        built.append(UncertainObject(id=oid, instances=tuple(instances)))
    return UncertainDatabase(tuple(built))


def loads_database(text: Union[str, bytes]) -> UncertainDatabase:
    """Parse the dataset JSON format; object and instance order is preserved."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed dataset JSON: {exc}") from exc
    if not isinstance(doc, dict) or "objects" not in doc:
        raise ValidationError('dataset JSON must be an object with an "objects" array')
    return database_from_dicts(doc["objects"])


def load_database(source: Union[str, bytes, IO]) -> UncertainDatabase:
    """Load a database from a byte/str payload or a readable stream."""
    if hasattr(source, "read"):
        source = source.read()
    return loads_database(source)


def dumps_database(db: UncertainDatabase) -> str:
    """Canonical serialization of a database.

    Floats are emitted with full round-trip precision so that reloading an
    emitted database reproduces it bit-identically.
    """
    doc = {
        "objects": [
            {
                "id": obj.id,
                "instances": [
                    {"x": inst.position[0], "y": inst.position[1], "p": inst.prob}
                    for inst in obj.instances
                ],
            }
            for obj in db.objects
        ]
    }
    return json.dumps(doc, separators=(",", ":"))
