import dataclasses
import math

import numpy as np
import pytest

from firstvisit import space
from firstvisit.derived import flat_centers
from firstvisit.errors import ConfigurationError, ScheduleRangeError
from firstvisit.targets import (
    ExplicitSchedule,
    GeometricSchedule,
    HarmonicSchedule,
    TargetFamily,
    build_family_somewhere_dense,
    certificate_from_csv,
    certificate_to_csv,
    family_from_table,
    family_to_table,
    select_tails_countable,
    select_tails_nowhere_dense,
    verify_certificate,
)


def circle_points(values):
    return [space.CirclePoint(v) for v in values]


class TestRadiusAt:
    def test_harmonic_formula(self):
        fam = select_tails_nowhere_dense(circle_points([0.0]), HarmonicSchedule(1.0))
        fam = dataclasses.replace(fam, tails=(2,), certificate=None)
        assert fam.radius_at(1, 1) == 1.0 / 3.0

    def test_geometric_formula(self):
        fam = select_tails_nowhere_dense(circle_points([0.0]), GeometricSchedule(1.0, 0.5))
        fam = dataclasses.replace(fam, tails=(1,), certificate=None)
        assert fam.radius_at(1, 3) == 0.0625

    def test_harmonic_monotone_over_ten_thousand_scales(self):
        fam = select_tails_nowhere_dense(circle_points([0.0]), HarmonicSchedule(1.0))
        prev = math.inf
        for n in range(1, 10_001):
            v = fam.radius_at(1, n)
            assert v < prev
            prev = v

    def test_geometric_monotone_within_positive_range(self):
        fam = select_tails_nowhere_dense(circle_points([0.0]), GeometricSchedule(1.0, 0.5))
        prev = math.inf
        for n in range(1, 1001):
            v = fam.radius_at(1, n)
            assert 0.0 < v < prev
            prev = v

    def test_geometric_underflow_raises(self):
        fam = select_tails_nowhere_dense(circle_points([0.0]), GeometricSchedule(1.0, 0.5))
        with pytest.raises(ScheduleRangeError):
            fam.radius_at(1, 2000)

    def test_explicit_exhaustion_names_max(self):
        fam = select_tails_nowhere_dense(
            circle_points([0.0]), ExplicitSchedule((0.5, 0.25, 0.125))
        )
        with pytest.raises(ScheduleRangeError, match="max is 3"):
            fam.radius_at(1, 4)

    def test_explicit_must_decrease(self):
        with pytest.raises(ConfigurationError):
            ExplicitSchedule((0.5, 0.5))


def minimal_tail_oracle(values, bound):
    """Exhaustive scan: smallest N >= 0 with values(N+1) < bound."""
    N = 0
    while not values(N + 1) < bound:
        N += 1
    return N


class TestCountableSelection:
    def test_single_isolated_center_vacuous_bound(self):
        fam = select_tails_countable(flat_centers(circle_points([0.3])), HarmonicSchedule(1.0))
        assert fam.tails == (0,)
        assert fam.radius_at(1, 1) == 1.0
        assert fam.certificate.passed
        assert fam.certificate.constraints == ()

    def test_two_point_stratum_matches_scan_oracle(self):
        # Exhaustive oracle in the same float arithmetic as the selection:
        # the first center is bounded by the pair distance, the second by
        # what the first's closed ball leaves over.
        h = HarmonicSchedule(1.0)
        d12 = space.distance(space.CirclePoint(0.0), space.CirclePoint(0.5))
        n1 = minimal_tail_oracle(h.value, d12)
        rho1 = h.value(n1 + 1)
        n2 = minimal_tail_oracle(h.value, d12 - rho1)
        assert (n1, n2) == (2, 5)
        fam = select_tails_countable(
            flat_centers(circle_points([0.0, 0.5])), HarmonicSchedule(1.0)
        )
        assert fam.tails == (n1, n2)
        assert fam.radius_at(1, 1) == rho1 == 1.0 / 3.0
        assert fam.certificate.passed

    def test_rank_one_cluster_certificate(self, rank1_family):
        cert = rank1_family.certificate
        assert cert.passed
        assert all(c.margin > 0.0 for c in cert.constraints)

    def test_certificate_matches_brute_force_pair_loop(self, rank1_family):
        fam = rank1_family
        centers = fam.centers
        rho1 = {i: fam.radius_at(i, 1) for i in range(1, fam.size + 1)}
        level = {cp.index: cp.level for cp in centers.points}
        expected = []
        for lam in sorted({cp.level for cp in centers.points}):
            stratum = [cp.index for cp in centers.points if cp.level == lam]
            for a in range(len(stratum)):
                for b in range(a + 1, len(stratum)):
                    j, k = stratum[a], stratum[b]
                    d = space.distance(centers.point_of(j), centers.point_of(k))
                    expected.append(("stratum-pair", j, k, d - rho1[j] - rho1[k]))
        for j in range(1, fam.size + 1):
            for k in range(1, fam.size + 1):
                if level[k] > level[j]:
                    d = space.distance(centers.point_of(j), centers.point_of(k))
                    expected.append(
                        ("upper-clearance", j, k, d - centers.tail_radius_of(k) - rho1[j])
                    )
        for i in range(1, fam.size + 1):
            for j in range(1, fam.size + 1):
                if i != j:
                    d = space.distance(centers.point_of(i), centers.point_of(j))
                    if d < rho1[i]:
                        expected.append(
                            ("nested-containment", i, j, 2.0 * rho1[i] - d - rho1[j])
                        )
        got = [(c.kind, c.i, c.j, c.margin) for c in fam.certificate.constraints]
        assert got == expected

    def test_same_stratum_balls_disjoint_at_deeper_scales(self, rank1_family):
        fam = rank1_family
        for n in (1, 2, 10):
            for lam in sorted({cp.level for cp in fam.centers.points}):
                stratum = [cp.index for cp in fam.centers.points if cp.level == lam]
                for a in range(len(stratum)):
                    for b in range(a + 1, len(stratum)):
                        j, k = stratum[a], stratum[b]
                        d = space.distance(
                            fam.centers.point_of(j), fam.centers.point_of(k)
                        )
                        assert d - fam.radius_at(j, n) - fam.radius_at(k, n) > 0.0

    def test_nested_ball_containment_at_scales(self, rank1_family):
        # whenever p_j sits inside ball i at scale n, every ball of j stays
        # inside the doubled ball of i
        fam = rank1_family
        for n in (1, 5):
            for i in range(1, fam.size + 1):
                for j in range(1, fam.size + 1):
                    if i == j:
                        continue
                    d = space.distance(
                        fam.centers.point_of(i), fam.centers.point_of(j)
                    )
                    if d < fam.radius_at(i, n):
                        assert d + fam.radius_at(j, 1) < 2.0 * fam.radius_at(i, n)

    def test_overlapping_envelope_bound_rejected(self):
        # a fake stratification whose higher point carries a huge tail
        from firstvisit.derived import CenterPoint, ClusterEnvelope, StratifiedCenters

        pts = (
            CenterPoint(1, space.CirclePoint(0.0), 0, 0),
            CenterPoint(2, space.CirclePoint(0.1), 1, 0),
        )
        clusters = (
            ClusterEnvelope(2, space.Ball(space.CirclePoint(0.1), 0.3), 0.3),
        )
        sc = StratifiedCenters(points=pts, clusters=clusters)
        with pytest.raises(ConfigurationError, match="nonpositive separation"):
            select_tails_countable(sc, HarmonicSchedule(1.0))


class TestNowhereDenseSelection:
    def test_worked_three_center_example(self):
        fam = select_tails_nowhere_dense(
            circle_points([0.0, 0.5, 0.25]), HarmonicSchedule(1.0)
        )
        assert fam.tails == (1, 2, 4)
        assert fam.scale_one_radii() == [0.5, 1.0 / 3.0, 0.2]
        assert fam.certificate.passed

    def test_geometric_two_center_example(self):
        fam = select_tails_nowhere_dense(
            circle_points([0.0, 0.5]), GeometricSchedule(1.0, 0.5)
        )
        assert fam.tails[1] == 1
        assert fam.radius_at(2, 1) == 0.25

    def test_matches_exhaustive_scan_oracle(self):
        rng = np.random.default_rng(88)
        pts = circle_points(rng.random(12))
        h = HarmonicSchedule(1.0)
        fam = select_tails_nowhere_dense(pts, h)
        for i in range(1, 13):
            bound = 1.0 / i
            for j in range(i - 1):
                bound = min(bound, space.distance(pts[i - 1], pts[j]))
            assert fam.tails[i - 1] == minimal_tail_oracle(h.value, bound)

    def test_predecessors_outside_closed_balls(self):
        rng = np.random.default_rng(89)
        pts = circle_points(rng.random(20))
        fam = select_tails_nowhere_dense(pts, HarmonicSchedule(1.0))
        for i in range(1, 21):
            for j in range(1, i):
                d = space.distance(pts[i - 1], pts[j - 1])
                assert d > fam.radius_at(i, 1)

    def test_radius_caps_and_sup_decay(self):
        rng = np.random.default_rng(90)
        pts = circle_points(rng.random(30))
        fam = select_tails_nowhere_dense(pts, HarmonicSchedule(1.0))
        for i in range(1, 31):
            for n in (1, 10, 100):
                assert fam.radius_at(i, n) < 1.0 / i
        sup1 = max(fam.radius_at(i, 1) for i in range(1, 31))
        sup100 = max(fam.radius_at(i, 100) for i in range(1, 31))
        assert sup100 < sup1

    def test_duplicate_centers_rejected(self):
        with pytest.raises(ConfigurationError, match="duplicate"):
            select_tails_nowhere_dense(
                circle_points([0.1, 0.1]), HarmonicSchedule(1.0)
            )


def _decremented(family, i):
    tails = list(family.tails)
    tails[i - 1] -= 1
    return dataclasses.replace(
        family, tails=tuple(tails), certificate=None
    )


class TestMinimality:
    def test_countable_tails_are_minimal(self, rank1_family):
        fam = rank1_family
        for i in range(1, fam.size + 1):
            if fam.tails[i - 1] == 0:
                continue
            cert = verify_certificate(_decremented(fam, i))
            assert not cert.passed

    def test_nowhere_dense_tails_are_minimal(self):
        rng = np.random.default_rng(91)
        pts = circle_points(rng.random(50))
        fam = select_tails_nowhere_dense(pts, HarmonicSchedule(1.0))
        for i in range(1, 51):
            if fam.tails[i - 1] == 0:
                continue
            cert = verify_certificate(_decremented(fam, i))
            assert not cert.passed


class TestVerification:
    def test_hand_built_violation_fails_on_pair(self):
        pts = flat_centers(circle_points([0.0, 0.5]))
        fam = TargetFamily(
            centers=pts,
            schedules=(ExplicitSchedule((0.5, 0.25)), ExplicitSchedule((0.1, 0.05))),
            tails=(0, 0),
            regime="countable",
        )
        cert = verify_certificate(fam)
        assert not cert.passed
        assert cert.first_violation.kind == "stratum-pair"
        assert cert.first_violation.margin <= 0.0

    def test_single_center_vacuous(self):
        fam = select_tails_countable(
            flat_centers(circle_points([0.2])), HarmonicSchedule(1.0)
        )
        assert fam.certificate.passed
        assert fam.certificate.min_margin == math.inf

    def test_somewhere_dense_records_failures(self):
        rng = np.random.default_rng(92)
        pts = circle_points(0.3 * rng.random(500))
        fam = build_family_somewhere_dense(pts, HarmonicSchedule(1.0))
        assert fam.regime == "somewhere_dense"
        assert fam.tails == (0,) * 500
        assert not fam.certificate.passed
        assert len(fam.certificate.violations()) >= 1


class TestSerialization:
    def test_family_round_trip(self, rank1_family):
        text = family_to_table(rank1_family)
        back = family_from_table(text)
        assert back.centers == rank1_family.centers
        assert back.schedules == rank1_family.schedules
        assert back.tails == rank1_family.tails
        assert back.regime == rank1_family.regime
        assert family_to_table(back) == text

    def test_certificate_csv_round_trip(self, rank1_family):
        cert = rank1_family.certificate
        text = certificate_to_csv(cert)
        back = certificate_from_csv(text, cert.regime)
        assert back == cert
        assert text.endswith("\n")
        assert text.splitlines()[0] == "kind,i,j,margin"

    def test_mixed_schedules_round_trip(self):
        fam = select_tails_nowhere_dense(
            circle_points([0.0, 0.5, 0.25]),
            [HarmonicSchedule(1.0), GeometricSchedule(1.0, 0.5), ExplicitSchedule((0.2, 0.1, 0.05))],
        )
        back = family_from_table(family_to_table(fam))
        assert back.schedules == fam.schedules
        assert back.tails == fam.tails
