"""Trajectory NN queries: backends, lattice search, anti-monotonicity."""

import itertools
import math

import numpy as np
import pytest

from uncertain_spatial import (
    CapExceededError,
    ExactTrajectoryBackend,
    SampledTrajectoryBackend,
    TrajectoryDataset,
    UncertainTrajectory,
    ValidationError,
    loads_trajectory_dataset,
    maximal_timestamp_sets,
    pc_tau_nn,
    pcnn_query,
    pfann_probability,
)

from conftest import FIXTURES


def traj(tid, spec):
    """Build a trajectory from {timestamp: [(x, y, p), ...]}."""
    return UncertainTrajectory(
        id=tid,
        per_timestamp={
            t: tuple(((float(x), float(y)), float(p)) for x, y, p in alts)
            for t, alts in spec.items()
        },
    )


def random_dataset(rng, max_timestamps=5, max_objects=3, max_alts=2):
    n_t = int(rng.integers(1, max_timestamps + 1))
    timestamps = tuple(range(n_t))

    def random_traj(tid):
        spec = {}
        for t in timestamps:
            m = int(rng.integers(1, max_alts + 1))
            raw = rng.random(m) + 0.1
            probs = raw / raw.sum()
            spec[t] = [(rng.uniform(-10, 10), rng.uniform(-10, 10), probs[j]) for j in range(m)]
        return traj(tid, spec)

    n_obj = int(rng.integers(1, max_objects + 1))
    return TrajectoryDataset(
        timestamps=timestamps,
        query=random_traj("q"),
        objects=tuple(random_traj(f"o{i}") for i in range(n_obj)),
    )


@pytest.fixture
def demo_dataset():
    with open(FIXTURES / "pcnn_demo.json", "rb") as fh:
        return loads_trajectory_dataset(fh.read())


class TestModel:
    def test_fixture_loads(self, demo_dataset):
        assert demo_dataset.timestamps == (0, 1, 2)
        assert demo_dataset.object_ids == ("o1", "o2")
        assert demo_dataset.query.id == "q"

    def test_per_timestamp_probabilities_must_sum_to_one(self):
        with pytest.raises(ValidationError, match="sum"):
            traj("bad", {0: [(0, 0, 0.5), (1, 0, 0.3)]})

    def test_mismatched_domains_rejected(self):
        q = traj("q", {0: [(0, 0, 1.0)], 1: [(0, 0, 1.0)]})
        o = traj("o", {0: [(1, 0, 1.0)]})
        with pytest.raises(ValidationError, match="domain"):
            TrajectoryDataset(timestamps=(0, 1), query=q, objects=(o,))

    def test_duplicate_ids_rejected(self):
        q = traj("q", {0: [(0, 0, 1.0)]})
        o = traj("q", {0: [(1, 0, 1.0)]})
        with pytest.raises(ValidationError, match="duplicate"):
            TrajectoryDataset(timestamps=(0,), query=q, objects=(o,))


class TestExactBackend:
    def test_fixture_singletons(self, demo_dataset):
        be = ExactTrajectoryBackend(demo_dataset)
        assert pfann_probability(demo_dataset, "o1", [0], be) == pytest.approx(0.9, abs=1e-12)
        assert pfann_probability(demo_dataset, "o1", [1], be) == pytest.approx(0.8, abs=1e-12)
        assert pfann_probability(demo_dataset, "o2", [2], be) == pytest.approx(0.4, abs=1e-12)

    def test_certain_winner_is_exactly_one(self):
        ds = TrajectoryDataset(
            timestamps=(0,),
            query=traj("q", {0: [(0, 0, 0.6), (0.5, 0, 0.4)]}),
            objects=(
                traj("near", {0: [(1, 0, 0.7), (1.5, 0, 0.3)]}),
                traj("far", {0: [(50, 0, 1.0)]}),
            ),
        )
        assert pfann_probability(ds, "near", [0]) == 1.0

    def test_sure_timestamp_factors_out(self):
        """With one certain timestamp, adding it never changes a probability."""
        ds = TrajectoryDataset(
            timestamps=(0, 1),
            query=traj("q", {0: [(0, 0, 1.0)], 1: [(0, 0, 1.0)]}),
            objects=(
                traj("a", {0: [(1, 0, 1.0)], 1: [(1, 0, 0.5), (9, 0, 0.5)]}),
                traj("b", {0: [(5, 0, 1.0)], 1: [(4, 0, 1.0)]}),
            ),
        )
        be = ExactTrajectoryBackend(ds)
        assert be.pfann("a", [0]) == 1.0
        assert be.pfann("a", [0, 1]) == be.pfann("a", [1])

    def test_ties_break_by_object_id(self):
        ds = TrajectoryDataset(
            timestamps=(0,),
            query=traj("q", {0: [(0, 0, 1.0)]}),
            objects=(traj("a", {0: [(1, 0, 1.0)]}), traj("b", {0: [(1, 0, 1.0)]})),
        )
        assert pfann_probability(ds, "a", [0]) == 1.0
        assert pfann_probability(ds, "b", [0]) == 0.0

    def test_monotone_under_containment(self):
        rng = np.random.default_rng(51)
        for _ in range(20):
            ds = random_dataset(rng)
            be = ExactTrajectoryBackend(ds)
            oid = ds.object_ids[0]
            ts = list(ds.timestamps)
            for size in range(1, len(ts) + 1):
                for sub in itertools.combinations(ts, size):
                    p_sub = be.pfann(oid, sub)
                    for t in ts:
                        if t not in sub:
                            assert be.pfann(oid, sub + (t,)) <= p_sub + 1e-12

    def test_joint_cap(self, demo_dataset):
        be = ExactTrajectoryBackend(demo_dataset, cap=1)
        with pytest.raises(CapExceededError):
            be.pfann("o1", [0])


class TestSampledBackend:
    def test_within_five_sigma_of_exact(self):
        rng = np.random.default_rng(52)
        n = 20000
        for i in range(10):
            ds = random_dataset(rng, max_timestamps=3, max_objects=2)
            exact = ExactTrajectoryBackend(ds)
            sampled = SampledTrajectoryBackend(ds, n, seed=100 + i)
            for oid in ds.object_ids:
                for size in (1, len(ds.timestamps)):
                    sub = ds.timestamps[:size]
                    p = exact.pfann(oid, sub)
                    sigma = math.sqrt(max(p * (1 - p), 1e-12) / n)
                    assert abs(sampled.pfann(oid, sub) - p) <= 5 * sigma

    def test_shared_sample_monotonicity_is_exact(self):
        rng = np.random.default_rng(53)
        for i in range(10):
            ds = random_dataset(rng)
            sampled = SampledTrajectoryBackend(ds, 500, seed=i)
            ts = ds.timestamps
            for oid in ds.object_ids:
                for size in range(1, len(ts) + 1):
                    for sub in itertools.combinations(ts, size):
                        p_sub = sampled.pfann(oid, sub)
                        for t in ts:
                            if t not in sub:
                                assert sampled.pfann(oid, sub + (t,)) <= p_sub

    def test_exclusive_winner_bits(self):
        rng = np.random.default_rng(54)
        ds = random_dataset(rng, max_objects=3)
        sampled = SampledTrajectoryBackend(ds, 200, seed=9)
        masks = list(sampled.sample.masks.values())
        for bi in range(len(ds.timestamps)):
            bit = np.uint64(1 << bi)
            owners = sum(((m & bit) != 0).astype(int) for m in masks)
            assert np.all(owners == 1)

    def test_determinism(self, demo_dataset):
        a = SampledTrajectoryBackend(demo_dataset, 1000, seed=5)
        b = SampledTrajectoryBackend(demo_dataset, 1000, seed=5)
        for oid in demo_dataset.object_ids:
            assert np.array_equal(a.sample.masks[oid], b.sample.masks[oid])


class TestLattice:
    def test_fixture_results(self, demo_dataset):
        be = ExactTrajectoryBackend(demo_dataset)
        res = pc_tau_nn(demo_dataset, "o1", (0, 1, 2), 0.5, be)
        found = {ts.timestamps: ts.probability for ts in res}
        assert set(found) == {(0,), (1,), (2,), (0, 1), (0, 2)}
        assert found[(0, 1)] == pytest.approx(0.72, abs=1e-12)
        assert found[(0, 2)] == pytest.approx(0.54, abs=1e-12)

    def test_only_singletons_when_pairs_fail(self):
        """Stops at level one when every pairwise probability falls below tau."""
        ds = TrajectoryDataset(
            timestamps=(0, 1, 2),
            query=traj("q", {t: [(0, 0, 1.0)] for t in range(3)}),
            objects=(
                traj("a", {t: [(1, 0, 0.55), (9, 0, 0.45)] for t in range(3)}),
                traj("b", {t: [(5, 0, 1.0)] for t in range(3)}),
            ),
        )
        res = pc_tau_nn(ds, "a", (0, 1, 2), 0.5)
        assert {ts.timestamps for ts in res} == {(0,), (1,), (2,)}

    def test_certain_nn_returns_all_subsets(self):
        ds = TrajectoryDataset(
            timestamps=(0, 1, 2),
            query=traj("q", {t: [(0, 0, 1.0)] for t in range(3)}),
            objects=(
                traj("a", {t: [(1, 0, 0.5), (2, 0, 0.5)] for t in range(3)}),
                traj("b", {t: [(5, 0, 1.0)] for t in range(3)}),
            ),
        )
        res = pc_tau_nn(ds, "a", (0, 1, 2), 0.9)
        assert len(res) == 7
        assert all(ts.probability == 1.0 for ts in res)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(55)
        for _ in range(30):
            ds = random_dataset(rng)
            be = ExactTrajectoryBackend(ds)
            tau = float(rng.uniform(0.05, 0.9))
            oid = str(rng.choice(ds.object_ids))
            res = pc_tau_nn(ds, oid, ds.timestamps, tau, be)
            found = {ts.timestamps: ts.probability for ts in res}
            expected = {}
            for size in range(1, len(ds.timestamps) + 1):
                for sub in itertools.combinations(ds.timestamps, size):
                    p = be.pfann(oid, sub)
                    if p >= tau:
                        expected[sub] = p
            assert set(found) == set(expected)
            for sub, p in expected.items():
                assert found[sub] == pytest.approx(p, abs=1e-12)

    def test_matches_brute_force_with_sampled_backend(self):
        """Pruning on shared-sample estimates loses nothing: containment makes
        the estimates exactly anti-monotone."""
        rng = np.random.default_rng(58)
        for i in range(10):
            ds = random_dataset(rng)
            be = SampledTrajectoryBackend(ds, 300, seed=70 + i)
            tau = float(rng.uniform(0.05, 0.9))
            oid = str(rng.choice(ds.object_ids))
            res = pc_tau_nn(ds, oid, ds.timestamps, tau, be)
            found = {ts.timestamps: ts.probability for ts in res}
            expected = {
                sub: be.pfann(oid, sub)
                for size in range(1, len(ds.timestamps) + 1)
                for sub in itertools.combinations(ds.timestamps, size)
                if be.pfann(oid, sub) >= tau
            }
            assert found == expected

    def test_factoring_changes_nothing(self):
        rng = np.random.default_rng(56)
        for _ in range(10):
            ds = random_dataset(rng)
            be = ExactTrajectoryBackend(ds)
            oid = ds.object_ids[0]
            on = pc_tau_nn(ds, oid, ds.timestamps, 0.2, be, factor_certain=True)
            off = pc_tau_nn(ds, oid, ds.timestamps, 0.2, be, factor_certain=False)
            assert [(t.timestamps) for t in on] == [(t.timestamps) for t in off]
            for a, b in zip(on, off):
                assert a.probability == pytest.approx(b.probability, abs=1e-12)

    def test_tau_validation(self, demo_dataset):
        with pytest.raises(ValidationError):
            pc_tau_nn(demo_dataset, "o1", (0, 1, 2), 0.0)
        with pytest.raises(ValidationError):
            pc_tau_nn(demo_dataset, "o1", (0, 1, 2), 1.5)

    def test_lattice_cap(self):
        ds = TrajectoryDataset(
            timestamps=tuple(range(8)),
            query=traj("q", {t: [(0, 0, 1.0)] for t in range(8)}),
            objects=(
                traj("a", {t: [(1, 0, 0.95), (9, 0, 0.05)] for t in range(8)}),
                traj("b", {t: [(5, 0, 1.0)] for t in range(8)}),
            ),
        )
        with pytest.raises(CapExceededError, match="lattice"):
            pc_tau_nn(ds, "a", ds.timestamps, 0.05, lattice_cap=50)


class TestPcnnQuery:
    def test_single_object_database(self):
        ds = TrajectoryDataset(
            timestamps=(0, 1),
            query=traj("q", {0: [(0, 0, 1.0)], 1: [(0, 0, 1.0)]}),
            objects=(traj("only", {0: [(1, 0, 0.5), (2, 0, 0.5)], 1: [(3, 0, 1.0)]}),),
        )
        res = pcnn_query(ds, (0, 1), 0.5)
        assert set(res) == {"only"}
        assert {ts.timestamps for ts in res["only"]} == {(0,), (1,), (0, 1)}
        assert all(ts.probability == 1.0 for ts in res["only"])

    def test_objects_with_empty_output_omitted(self, demo_dataset):
        res = pcnn_query(demo_dataset, (0, 1, 2), 0.5)
        assert set(res) == {"o1"}

    def test_never_co_nearest_probability_mass(self, demo_dataset):
        be = ExactTrajectoryBackend(demo_dataset)
        for t in demo_dataset.timestamps:
            total = sum(be.pfann(oid, [t]) for oid in demo_dataset.object_ids)
            assert total <= 1.0 + 1e-12

    def test_matches_per_object_brute_force(self):
        rng = np.random.default_rng(57)
        for _ in range(10):
            ds = random_dataset(rng)
            be = ExactTrajectoryBackend(ds)
            tau = float(rng.uniform(0.1, 0.8))
            res = pcnn_query(ds, ds.timestamps, tau, be)
            for oid in ds.object_ids:
                expected = {
                    sub: be.pfann(oid, sub)
                    for size in range(1, len(ds.timestamps) + 1)
                    for sub in itertools.combinations(ds.timestamps, size)
                    if be.pfann(oid, sub) >= tau
                }
                if not expected:
                    assert oid not in res
                else:
                    assert {t.timestamps for t in res[oid]} == set(expected)


class TestMaximalFilter:
    def test_keeps_only_maximal_sets(self, demo_dataset):
        be = ExactTrajectoryBackend(demo_dataset)
        res = pc_tau_nn(demo_dataset, "o1", (0, 1, 2), 0.5, be)
        maximal = maximal_timestamp_sets(res)
        assert {ts.timestamps for ts in maximal} == {(0, 1), (0, 2)}
