import math

import numpy as np
import pytest

from firstvisit import space
from firstvisit.anchors import AnchorFilters, AnchorSource
from firstvisit.derived import (
    SequencePair,
    cb_stratify,
    centers_from_table,
    centers_to_table,
    construct_cluster_sequence,
    construct_rank_sequence,
    derived_set_approx,
    orbit_disjointness_check,
    sup_metric_distance,
)
from firstvisit.errors import ConfigurationError, ConstructionError, UsageError


def oracle_derived(points, delta):
    """Definition-chasing double loop."""
    return [
        q
        for a, q in enumerate(points)
        if any(
            b != a and space.distance(points[b], q) <= delta
            for b in range(len(points))
        )
    ]


def circle_set(values):
    return [space.CirclePoint(v) for v in values]


class TestDerivedSetApprox:
    def test_isolated_pair_vanishes(self):
        assert derived_set_approx(circle_set([0.0, 0.5]), 0.1) == []

    def test_mutual_neighbors_survive(self):
        pts = circle_set([0.0, 0.05, 0.5])
        assert derived_set_approx(pts, 0.1) == pts[:2]

    def test_dyadic_cluster_matches_oracle(self):
        pts = circle_set([0.5 ** k for k in range(1, 21)] + [0.0])
        got = derived_set_approx(pts, 0.001)
        expected = oracle_derived(pts, 0.001)
        assert got == expected
        # gaps between 1/2^k and 1/2^(k+1) shrink below 1e-3 from k = 9 on
        assert got == circle_set([0.5 ** k for k in range(9, 21)] + [0.0])

    def test_random_sets_match_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(200):
            n = int(rng.integers(0, 200))
            pts = circle_set(rng.random(n))
            delta = float(10.0 ** rng.uniform(-4, -0.5))
            assert derived_set_approx(pts, delta) == oracle_derived(pts, delta)

    def test_torus_sets_match_oracle(self):
        rng = np.random.default_rng(4321)
        for _ in range(50):
            n = int(rng.integers(2, 60))
            pts = [space.TorusPoint(u, v) for u, v in rng.random((n, 2))]
            delta = float(10.0 ** rng.uniform(-3, -0.5))
            assert derived_set_approx(pts, delta) == oracle_derived(pts, delta)

    def test_subset_and_monotone_in_delta(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            pts = circle_set(rng.random(40))
            d1, d2 = sorted(rng.uniform(1e-4, 0.3, size=2))
            small = derived_set_approx(pts, d1)
            large = derived_set_approx(pts, d2)
            assert set(p.angle for p in small) <= set(p.angle for p in large)
            assert set(p.angle for p in large) <= set(p.angle for p in pts)

    def test_duplicates_keep_each_other(self):
        pts = circle_set([0.2, 0.2, 0.7])
        assert derived_set_approx(pts, 1e-9) == pts[:2]


class TestCbStratify:
    def test_isolated_points_rank_zero(self):
        sc = cb_stratify(circle_set([0.0, 0.5]), [0.1, 0.01])
        assert [cp.level for cp in sc.points] == [0, 0]
        assert sc.rank == 0
        assert not sc.rank_is_lower_bound

    def test_schedule_must_decrease(self):
        with pytest.raises(UsageError):
            cb_stratify(circle_set([0.0, 0.5]), [0.1, 0.1])

    def test_exhausted_schedule_flags_lower_bound(self):
        pts = circle_set([0.0, 1e-6])
        sc = cb_stratify(pts, [0.1])
        assert sc.rank_is_lower_bound
        assert sc.rank == 1

    def test_levels_count_survived_steps(self):
        pts = circle_set([0.5 ** k for k in range(1, 21)] + [0.0])
        sc = cb_stratify(pts, [0.001, 1e-7])
        expected = oracle_derived(pts, 0.001)
        survivors = {p.angle for p in expected}
        for cp, p in zip(sc.points, pts):
            assert cp.level == (1 if p.angle in survivors else 0)
        assert sc.rank == 1


@pytest.fixture(scope="module")
def golden_anchor_factory():
    rot = space.RotationMap()

    def make(seed):
        return rot, AnchorSource(rot, seed)

    return make


class TestClusterConstruction:
    def test_annulus_membership(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(11)
        x = space.CirclePoint(0.5)
        sc = construct_cluster_sequence(x, 0.1, 4, anchor)
        assert len(sc.points) == 4
        for cp in sc.points[1:]:
            n = cp.index  # shells are assigned in index order 2..count
            d = space.distance(cp.point, x)
            assert 0.1 / 2 ** n < d < 0.1 / 2 ** (n - 1)

    def test_envelopes_closure_disjoint_exactly(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(12)
        sc = construct_cluster_sequence(space.CirclePoint(0.5), 0.1, 5, anchor)
        sats = [c for c in sc.clusters if c.rep != 1]
        for a in range(len(sats)):
            for b in range(a + 1, len(sats)):
                d = space.distance(sats[a].ball.center, sats[b].ball.center)
                assert d - sats[a].ball.radius - sats[b].ball.radius > 0.0

    def test_count_lower_bound(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(13)
        with pytest.raises(UsageError):
            construct_cluster_sequence(space.CirclePoint(0.5), 0.1, 1, anchor)

    def test_impossible_filter_names_the_annulus(self):
        rot = space.RotationMap()
        filters = AnchorFilters(density_threshold=1.01, max_draws=8)
        anchor = AnchorSource(rot, 5, filters)
        with pytest.raises(ConstructionError, match="annulus"):
            construct_cluster_sequence(space.CirclePoint(0.5), 0.1, 3, anchor)

    def test_stratify_round_trip_rank_one(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(14)
        sc = construct_cluster_sequence(space.CirclePoint(0.3), 0.08, 4, anchor)
        res = cb_stratify(sc.space_points(), sc.delta_schedule)
        assert res.points[0].level == 1
        assert not res.rank_is_lower_bound


class TestRankConstruction:
    def test_rank_one_equals_cluster_constructor(self, golden_anchor_factory):
        rot, a1 = golden_anchor_factory(21)
        rot, a2 = golden_anchor_factory(21)
        via_rank = construct_rank_sequence(space.CirclePoint(0.4), 0.06, 1, 3, a1)
        via_cluster = construct_cluster_sequence(space.CirclePoint(0.4), 0.06, 4, a2)
        assert via_rank == via_cluster

    def test_population_and_containment(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(22)
        sc = construct_rank_sequence(space.CirclePoint(0.4), 0.08, 2, 3, anchor)
        assert len(sc.points) == 13
        by_index = {cp.index: cp for cp in sc.points}
        env = {c.rep: c for c in sc.clusters}
        for cp in sc.points[1:]:
            parent_env = env[cp.parent]
            assert space.distance(cp.point, parent_env.ball.center) < parent_env.ball.radius

    def test_declared_levels_follow_tree_depth(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(23)
        sc = construct_rank_sequence(space.CirclePoint(0.4), 0.08, 2, 3, anchor)
        by_index = {cp.index: cp for cp in sc.points}
        for cp in sc.points:
            if cp.parent:
                assert cp.level == by_index[cp.parent].level - 1
        assert sc.points[0].level == 2
        leaves = [cp for cp in sc.points if cp.level == 0]
        assert len(leaves) == 9

    def test_envelopes_form_laminar_family(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(24)
        sc = construct_rank_sequence(space.CirclePoint(0.4), 0.08, 3, 2, anchor)
        balls = [c.ball for c in sc.clusters]
        for a in range(len(balls)):
            for b in range(a + 1, len(balls)):
                d = space.distance(balls[a].center, balls[b].center)
                nested = (
                    d + balls[a].radius <= balls[b].radius
                    or d + balls[b].radius <= balls[a].radius
                )
                disjoint = d - balls[a].radius - balls[b].radius > 0.0
                assert nested or disjoint

    def test_population_cap(self, golden_anchor_factory):
        rot, anchor = golden_anchor_factory(25)
        with pytest.raises(ConfigurationError, match="population_cap"):
            construct_rank_sequence(space.CirclePoint(0.4), 0.08, 5, 10, anchor)

    @pytest.mark.parametrize("rank,branching", [(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)])
    def test_stratify_recovers_rank(self, golden_anchor_factory, rank, branching):
        rot, anchor = golden_anchor_factory(100 + 10 * rank + branching)
        sc = construct_rank_sequence(space.CirclePoint(0.37), 0.08, rank, branching, anchor)
        res = cb_stratify(sc.space_points(), sc.delta_schedule)
        assert res.points[0].level == rank
        assert not res.rank_is_lower_bound
        assert res.rank == rank


class TestSupMetric:
    def test_identical_sequences(self):
        pts = tuple(circle_set([0.1, 0.2, 0.3]))
        res = sup_metric_distance(SequencePair(pts, pts, 0.0))
        assert res.max_distance == 0.0
        assert res.upper == 0.0

    @staticmethod
    def perturbed_pair(i, length=20):
        """Sequence converging to a positive value vs its vanishing limit.

        Coordinates are a_n = 1/n shifted by b = 2^-i (except coordinate i,
        which sits at b).  Float sums are nudged down one ulp at a time
        until the realized circle distance does not exceed b, so the sup
        equals the closed form max(b, |b - a_i|) exactly.
        """
        b = 0.5 ** i
        base = [space.wrap(1.0 / n) for n in range(1, length + 1)]
        shifted = []
        for n, a in enumerate(base, start=1):
            if n == i:
                shifted.append(space.wrap(b))
                continue
            p = space.wrap(a + b)
            for _ in range(4):
                if space.distance(space.CirclePoint(p), space.CirclePoint(a)) <= b:
                    break
                p = space.wrap(math.nextafter(p, p - 1.0))
            shifted.append(p)
        return SequencePair(
            tuple(space.CirclePoint(v) for v in shifted),
            tuple(space.CirclePoint(v) for v in base),
            tail_bound=b,
        )

    def test_fixture_value_at_two(self):
        res = sup_metric_distance(self.perturbed_pair(2))
        assert res.max_distance == 0.25

    def test_closed_form_exact_for_all_indices(self):
        for i in range(1, 21):
            res = sup_metric_distance(self.perturbed_pair(i))
            closed = max(0.5 ** i, abs(0.5 ** i - 1.0 / i))
            assert res.max_distance == closed
            assert res.upper == closed + 0.5 ** i

    def test_values_decrease_toward_zero(self):
        vals = [sup_metric_distance(self.perturbed_pair(i)).max_distance for i in range(1, 21)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert vals[-1] < 0.06

    def test_length_mismatch_rejected(self):
        with pytest.raises(UsageError):
            SequencePair(tuple(circle_set([0.1])), tuple(circle_set([0.1, 0.2])))


class TestOrbitDisjointness:
    def test_same_orbit_fails_at_zero(self, golden):
        p1 = space.CirclePoint(0.11)
        p2 = space.iterate(golden, p1, 3)
        report = orbit_disjointness_check([p1, p2], golden, 50, 1e-9)
        assert not report.passed
        assert report.min_distance == 0.0
        assert report.pair == (1, 2)
        k, h = report.steps
        assert k - h == 3

    def test_separated_centers_pass(self, golden):
        pts = circle_set([0.1, 0.31, 0.57])
        report = orbit_disjointness_check(pts, golden, 1000, 1e-9)
        assert report.passed
        assert report.min_distance > 1e-9

    def test_small_case_matches_double_loop(self, golden):
        pts = circle_set([0.12, 0.53])
        K = 40
        report = orbit_disjointness_check(pts, golden, K, 1e-9)
        best = math.inf
        orbit1 = [space.iterate(golden, pts[0], k) for k in range(-K, K + 1)]
        orbit2 = [space.iterate(golden, pts[1], k) for k in range(-K, K + 1)]
        for a in orbit1:
            for b in orbit2:
                best = min(best, space.distance(a, b))
        assert report.min_distance == best

    def test_single_center_vacuous(self, golden):
        report = orbit_disjointness_check(circle_set([0.2]), golden, 100, 1e-9)
        assert report.passed
        assert report.pair is None


class TestSerialization:
    def test_round_trip_bit_exact(self, rank1_centers):
        text = centers_to_table(rank1_centers)
        back = centers_from_table(text)
        assert back == rank1_centers
        assert centers_to_table(back) == text

    def test_flat_set_round_trip(self):
        sc = cb_stratify(circle_set([0.0, 1e-5, 0.6]), [1e-4, 1e-9])
        text = centers_to_table(sc)
        assert centers_from_table(text) == sc

    def test_rejects_foreign_text(self):
        with pytest.raises(ConfigurationError):
            centers_from_table("not a table\n")
