"""Uncertain trajectories and continuous nearest-neighbor timestamp queries.

A trajectory assigns, per timestamp, a set of alternative positions with
probabilities summing to one; draws are independent across timestamps and
across trajectories.  The core query asks, for a candidate object o and a
timestamp set T_i, for the probability that o is the strict nearest neighbor
of the query trajectory at every timestamp of T_i (ties break by object id;
the query is never a competitor).

Because that probability is anti-monotone in T_i, all qualifying subsets of a
query interval are found level-wise, Apriori style: only supersets whose
(k-1)-subsets all qualified are ever validated.  Timestamps whose singleton
probability is exactly one are factored out up front and re-attached to every
result, which cannot change any probability.

Two probability backends plug in: exact per-timestamp enumeration of the
joint alternative combinations (multiplied across timestamps, which is exact
under the independence model), and Monte-Carlo sampling with one fixed sample
set shared across the whole lattice so that estimated probabilities are
anti-monotone by construction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Dict, IO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    PROB_TOL,
    CapExceededError,
    ValidationError,
    euclidean_distance,
)
from .sampling import _substreams, _uniforms

#: Default cap on joint alternative combinations enumerated per timestamp.
DEFAULT_JOINT_CAP = 2**22
#: Default cap on lattice candidates validated (plus emitted result sets).
DEFAULT_LATTICE_CAP = 10**6


@dataclass(frozen=True)
class UncertainTrajectory:
    """Per-timestamp alternative positions with probabilities summing to one."""

    id: str
    per_timestamp: "dict[int, tuple[tuple[tuple[float, float], float], ...]]"

    def __post_init__(self):
        for t, alts in self.per_timestamp.items():
            if not alts:
                raise ValidationError(
                    f"trajectory {self.id!r}: timestamp {t} has no alternatives"
                )
            total = math.fsum(p for _, p in alts)
            if abs(total - 1.0) > PROB_TOL:
                raise ValidationError(
                    f"trajectory {self.id!r}: probabilities at timestamp {t} "
                    f"sum to {total}, expected 1"
                )
            for pos, p in alts:
                if not (p > 0.0):
                    raise ValidationError(
                        f"trajectory {self.id!r}: non-positive probability at timestamp {t}"
                    )
                if not all(math.isfinite(c) for c in pos):
                    raise ValidationError(
                        f"trajectory {self.id!r}: non-finite position at timestamp {t}"
                    )

    @property
    def timestamps(self) -> "tuple[int, ...]":
        return tuple(sorted(self.per_timestamp))


@dataclass(frozen=True)
class TrajectoryDataset:
    """A query trajectory plus candidate objects over a shared timestamp domain."""

    timestamps: "tuple[int, ...]"
    query: UncertainTrajectory
    objects: "tuple[UncertainTrajectory, ...]"

    def __post_init__(self):
        domain = tuple(sorted(self.timestamps))
        object.__setattr__(self, "timestamps", domain)
        if not domain:
            raise ValidationError("trajectory dataset has no timestamps")
        seen = {self.query.id}
        for traj in self.objects:
            if traj.id in seen:
                raise ValidationError(f"duplicate trajectory id {traj.id!r}")
            seen.add(traj.id)
        for traj in (self.query, *self.objects):
            if traj.timestamps != domain:
                raise ValidationError(
                    f"trajectory {traj.id!r} does not cover the shared timestamp domain"
                )

    def __getitem__(self, object_id: str) -> UncertainTrajectory:
        for traj in self.objects:
            if traj.id == object_id:
                return traj
        raise KeyError(object_id)

    @property
    def object_ids(self) -> "tuple[str, ...]":
        return tuple(t.id for t in self.objects)


@dataclass(frozen=True)
class TimestampSet:
    """A qualifying subset of the query interval with its all-timestamps NN probability."""

    timestamps: "tuple[int, ...]"
    probability: float

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(sorted(self.timestamps)))
        if not self.timestamps:
            raise ValidationError("timestamp set must be non-empty")


@dataclass(frozen=True)
class NNBitmapSample:
    """Per sampled world and candidate object, the bitmask of timestamps won.

    Bit b of ``masks[oid][i]`` is set when the object is the strict nearest
    neighbor of the query at ``timestamps[b]`` in sample i; per world and
    timestamp exactly one object's bit is set.
    """

    timestamps: "tuple[int, ...]"
    masks: "dict[str, np.ndarray]"


def _parse_per_timestamp(record: dict, trajectory_id: str):
    try:
        raw = record["per_timestamp"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(
            f"trajectory {trajectory_id!r} missing per_timestamp"
        ) from exc
    parsed = {}
    for key, alts in raw.items():
        try:
            t = int(key)
        except ValueError as exc:
            raise ValidationError(
                f"trajectory {trajectory_id!r}: bad timestamp key {key!r}"
            ) from exc
        parsed[t] = tuple(
            ((float(a["x"]), float(a["y"])), float(a["p"])) for a in alts
        )
    return parsed


def loads_trajectory_dataset(text: Union[str, bytes]) -> TrajectoryDataset:
    """Parse the trajectory dataset JSON format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed trajectory JSON: {exc}") from exc
    try:
        timestamps = tuple(int(t) for t in doc["timestamps"])
        query_rec = doc["query"]
        object_recs = doc["objects"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"trajectory dataset missing field: {exc}") from exc
    query = UncertainTrajectory(
        id=str(query_rec["id"]),
        per_timestamp=_parse_per_timestamp(query_rec, str(query_rec["id"])),
    )
    objects = tuple(
        UncertainTrajectory(
            id=str(rec["id"]), per_timestamp=_parse_per_timestamp(rec, str(rec["id"]))
        )
        for rec in object_recs
    )
    return TrajectoryDataset(timestamps=timestamps, query=query, objects=objects)


def load_trajectory_dataset(source: Union[str, bytes, IO]) -> TrajectoryDataset:
    if hasattr(source, "read"):
        source = source.read()
    return loads_trajectory_dataset(source)


class ExactTrajectoryBackend:
    """Exact NN probabilities by joint enumeration at each timestamp.

    Win events at distinct timestamps involve disjoint independent draws, so
    the all-timestamps probability is the product of per-timestamp wins; the
    per-timestamp values are cached across the whole lattice run.  When every
    enumerated combination wins, the probability is returned as exactly 1.0 so
    the certain-timestamp factoring triggers reliably.
    """

    def __init__(self, dataset: TrajectoryDataset, cap: int = DEFAULT_JOINT_CAP):
        self.dataset = dataset
        self.cap = cap
        self._win_cache: Dict[Tuple[str, int], float] = {}

    def _win_probability(self, object_id: str, t: int) -> float:
        key = (object_id, t)
        if key in self._win_cache:
            return self._win_cache[key]
        ds = self.dataset
        target = ds[object_id]
        competitors = [o for o in ds.objects if o.id != object_id]
        joint = len(ds.query.per_timestamp[t]) * len(target.per_timestamp[t])
        for c in competitors:
            joint *= len(c.per_timestamp[t])
        if joint > self.cap:
            raise CapExceededError(
                f"timestamp {t}: {joint} joint alternative combinations exceed cap {self.cap}"
            )
        terms = []
        all_certain = True
        for q_pos, q_p in ds.query.per_timestamp[t]:
            for o_pos, o_p in target.per_timestamp[t]:
                d = euclidean_distance(q_pos, o_pos)
                win_given = 1.0
                for c in competitors:
                    beaten = math.fsum(
                        p
                        for pos, p in c.per_timestamp[t]
                        if euclidean_distance(q_pos, pos) < d
                        or (euclidean_distance(q_pos, pos) == d and c.id < object_id)
                    )
                    win_given *= 1.0 - beaten
                all_certain = all_certain and win_given == 1.0
                terms.append(q_p * o_p * win_given)
        win = 1.0 if all_certain else min(1.0, math.fsum(terms))
        self._win_cache[key] = win
        return win

    def pfann(self, object_id: str, timestamps: Iterable[int]) -> float:
        prob = 1.0
        for t in sorted(set(timestamps)):
            prob *= self._win_probability(object_id, t)
        return prob


class SampledTrajectoryBackend:
    """Monte-Carlo NN probabilities from one fixed shared sample set.

    Every trajectory position at every timestamp is drawn once for n worlds;
    per world, the strict nearest neighbor at each timestamp sets one bit of
    the winner's bitmask.  Estimated probabilities are exactly anti-monotone
    under subset containment because they count bitmask coverage.
    """

    def __init__(self, dataset: TrajectoryDataset, n: int, seed: int = 42):
        if n < 1:
            raise ValidationError("sample count must be at least 1")
        self.dataset = dataset
        self.n = n
        self.seed = seed
        self.sample = self._build_bitmap()

    def _build_bitmap(self) -> NNBitmapSample:
        ds = self.dataset
        timestamps = ds.timestamps
        if len(timestamps) > 63:
            raise CapExceededError("sampled backend supports at most 63 timestamps")
        rows = (ds.query, *ds.objects)
        streams = _substreams(self.seed, self.n)
        n_t = len(timestamps)
        # choice index per (trajectory row, timestamp), one uniform per pair
        choices = {}
        for r, traj in enumerate(rows):
            for bi, t in enumerate(timestamps):
                alts = traj.per_timestamp[t]
                cum = np.cumsum([p for _, p in alts])
                u = _uniforms(streams, r * n_t + bi)
                idx = np.searchsorted(cum, u, side="right")
                idx[idx == len(alts)] = len(alts) - 1  # cumulative round-off guard
                choices[(r, bi)] = idx
        ids = [o.id for o in ds.objects]
        if not ids:
            return NNBitmapSample(timestamps=timestamps, masks={})
        id_order = np.argsort(ids, kind="stable")
        masks = {oid: np.zeros(self.n, dtype=np.uint64) for oid in ids}
        for bi, t in enumerate(timestamps):
            q_alts = ds.query.per_timestamp[t]
            q_idx = choices[(0, bi)]
            dist = np.empty((self.n, len(ids)))
            for col, obj_pos in enumerate(id_order):
                traj = ds.objects[obj_pos]
                alts = traj.per_timestamp[t]
                table = np.empty((len(q_alts), len(alts)))
                for qi, (q_pos, _) in enumerate(q_alts):
                    for ai, (pos, _) in enumerate(alts):
                        table[qi, ai] = euclidean_distance(q_pos, pos)
                dist[:, col] = table[q_idx, choices[(obj_pos + 1, bi)]]
            # columns are in id order, so first-minimum realizes the tie rule
            winner = np.argmin(dist, axis=1)
            bit = np.uint64(1 << bi)
            for col, obj_pos in enumerate(id_order):
                oid = ds.objects[obj_pos].id
                masks[oid] = masks[oid] | np.where(winner == col, bit, np.uint64(0))
        return NNBitmapSample(timestamps=timestamps, masks=masks)

    def _mask_of(self, timestamps: Iterable[int]) -> np.uint64:
        positions = {t: i for i, t in enumerate(self.sample.timestamps)}
        mask = 0
        for t in timestamps:
            if t not in positions:
                raise ValidationError(f"timestamp {t} outside the dataset domain")
            mask |= 1 << positions[t]
        return np.uint64(mask)

    def pfann(self, object_id: str, timestamps: Iterable[int]) -> float:
        want = self._mask_of(timestamps)
        got = self.sample.masks[object_id]
        return float(np.count_nonzero((got & want) == want)) / self.n


Backend = Union[ExactTrajectoryBackend, SampledTrajectoryBackend]


def pfann_probability(
    dataset: TrajectoryDataset,
    object_id: str,
    timestamps: Iterable[int],
    backend: Optional[Backend] = None,
) -> float:
    """Probability that the object is the query's NN at every given timestamp."""
    if backend is None:
        backend = ExactTrajectoryBackend(dataset)
    ts = tuple(sorted(set(timestamps)))
    if not ts:
        raise ValidationError("timestamp set must be non-empty")
    unknown = set(ts) - set(dataset.timestamps)
    if unknown:
        raise ValidationError(f"timestamps {sorted(unknown)} outside the dataset domain")
    dataset[object_id]  # raises KeyError for unknown objects
    return backend.pfann(object_id, ts)


def _powerset(items: Sequence[int]):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def pc_tau_nn(
    dataset: TrajectoryDataset,
    object_id: str,
    timestamps: Iterable[int],
    tau: float,
    backend: Optional[Backend] = None,
    lattice_cap: int = DEFAULT_LATTICE_CAP,
    factor_certain: bool = True,
) -> List[TimestampSet]:
    """All subsets of the query interval where the object's NN probability >= tau.

    Level-wise search: qualifying singletons seed the lattice, and a k-subset
    is validated only when all of its (k-1)-subsets qualified.  Timestamps
    with singleton probability exactly one are factored out and re-attached to
    every result (including on their own), which leaves probabilities
    unchanged.  Results are sorted by size, then lexicographically.
    """
    if not 0.0 < tau <= 1.0:
        raise ValidationError("tau must lie in (0, 1]")
    if backend is None:
        backend = ExactTrajectoryBackend(dataset)
    domain = tuple(sorted(set(timestamps)))
    if not domain:
        raise ValidationError("query interval must be non-empty")
    unknown = set(domain) - set(dataset.timestamps)
    if unknown:
        raise ValidationError(f"timestamps {sorted(unknown)} outside the dataset domain")
    dataset[object_id]

    budget = lattice_cap

    def spend(count: int):
        nonlocal budget
        budget -= count
        if budget < 0:
            raise CapExceededError(
                f"lattice exceeded {lattice_cap} candidates for object {object_id!r}"
            )

    singles = {}
    for t in domain:
        spend(1)
        singles[t] = backend.pfann(object_id, (t,))
    certain = tuple(t for t in domain if factor_certain and singles[t] == 1.0)
    rest = tuple(t for t in domain if t not in certain)

    qualified: Dict[Tuple[int, ...], float] = {}
    level = {(t,): singles[t] for t in rest if singles[t] >= tau}
    qualified.update(level)
    extend_with = sorted(t for (t,) in level)
    k = 2
    while level:
        prev = set(level)
        candidates = []
        for base in sorted(level):
            for t in extend_with:
                if t <= base[-1]:
                    continue
                cand = base + (t,)
                if all(
                    tuple(sub) in prev
                    for sub in itertools.combinations(cand, k - 1)
                ):
                    candidates.append(cand)
        level = {}
        for cand in candidates:
            spend(1)
            p = backend.pfann(object_id, cand)
            if p >= tau:
                level[cand] = p
        qualified.update(level)
        k += 1

    base_results = [((), 1.0)] + sorted(qualified.items())
    spend(len(base_results) * (2 ** len(certain)))
    out = []
    for subset, p in base_results:
        for extra in _powerset(certain):
            combined = tuple(sorted(subset + extra))
            if combined:
                out.append(TimestampSet(timestamps=combined, probability=p))
    out.sort(key=lambda ts: (len(ts.timestamps), ts.timestamps))
    return out


def pcnn_query(
    dataset: TrajectoryDataset,
    timestamps: Iterable[int],
    tau: float,
    backend: Optional[Backend] = None,
    lattice_cap: int = DEFAULT_LATTICE_CAP,
) -> Dict[str, List[TimestampSet]]:
    """Run the qualifying-subsets query for every object; empty outputs are omitted."""
    if backend is None:
        backend = ExactTrajectoryBackend(dataset)
    domain = tuple(sorted(set(timestamps)))
    results = {}
    for traj in dataset.objects:
        found = pc_tau_nn(dataset, traj.id, domain, tau, backend, lattice_cap)
        if found:
            results[traj.id] = found
    return results


def maximal_timestamp_sets(results: Sequence[TimestampSet]) -> List[TimestampSet]:
    """Filter to sets that are not proper subsets of another reported set."""
    keep = []
    for ts in results:
        s = set(ts.timestamps)
        if not any(
            s < set(other.timestamps) for other in results if other is not ts
        ):
            keep.append(ts)
    return keep
