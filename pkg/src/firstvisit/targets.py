"""Radius schedules, tail-offset selection, and separation certificates.

A target family assigns each center i a strictly decreasing, vanishing base
schedule a^i and a tail offset N_i; the working radii are
rho^i_n = a^i_{N_i + n}.  Tail selection picks each N_i minimal so that the
scale-1 balls satisfy the separation contract of the regime:

* countable: within each stratification level, closed scale-1 balls are
  pairwise disjoint, and every ball's closure keeps clear of all points of
  higher levels (cluster tails included, via the stored tail radii);
* nowhere-dense: each ball's closure excludes all earlier-indexed centers,
  and rho^i_1 < 1/i so the radii vanish uniformly in i;
* somewhere-dense: no separation is enforced; tails are zero and the
  certificate records the (expected) violations instead.

Decisions use literal strict float comparisons; certificates record every
constraint's numeric margin so callers can reject wins that live below
representation noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from . import space
from .derived import StratifiedCenters, flat_centers
from .errors import ConfigurationError, ScheduleRangeError, UsageError

COUNTABLE = "countable"
NOWHERE_DENSE = "nowhere_dense"
SOMEWHERE_DENSE = "somewhere_dense"

REGIMES = (COUNTABLE, NOWHERE_DENSE, SOMEWHERE_DENSE)


@dataclass(frozen=True)
class HarmonicSchedule:
    """a_n = c / n."""

    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0.0:
            raise ConfigurationError(f"harmonic coefficient must be positive, got {self.c}")

    def value(self, n: int) -> float:
        return self.c / n

    def first_below(self, bound: float) -> int:
        guess = int(self.c / bound) - 2
        return max(1, guess)

    def describe(self) -> str:
        return f"harmonic c={format(self.c, '.17g')}"


@dataclass(frozen=True)
class GeometricSchedule:
    """a_n = c * q^n with 0 < q < 1."""

    c: float = 1.0
    q: float = 0.5

    def __post_init__(self):
        if self.c <= 0.0:
            raise ConfigurationError(f"geometric coefficient must be positive, got {self.c}")
        if not 0.0 < self.q < 1.0:
            raise ConfigurationError(f"geometric ratio must lie in (0,1), got {self.q}")

    def value(self, n: int) -> float:
        return self.c * self.q ** n

    def first_below(self, bound: float) -> int:
        if bound >= self.c * self.q:
            return 1
        guess = int(math.log(bound / self.c) / math.log(self.q)) - 2
        return max(1, guess)

    def describe(self) -> str:
        return f"geometric c={format(self.c, '.17g')} q={format(self.q, '.17g')}"


@dataclass(frozen=True)
class ExplicitSchedule:
    """A finite, strictly decreasing table of positive radii.

    Its declared tail rule is exhaustion: evaluation past the last entry
    raises ScheduleRangeError instead of inventing smaller values.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError("explicit schedule needs at least one value")
        if any(v <= 0.0 for v in vals):
            raise ConfigurationError("explicit schedule values must be positive")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("explicit schedule must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    def value(self, n: int) -> float:
        if n > len(self.values):
            raise ScheduleRangeError(
                f"explicit schedule exhausted: requested entry {n}, max is {len(self.values)}"
            )
        return self.values[n - 1]

    def first_below(self, bound: float) -> int:
        return 1

    def describe(self) -> str:
        return "explicit " + " ".join(format(v, ".17g") for v in self.values)


RadiusSchedule = Union[HarmonicSchedule, GeometricSchedule, ExplicitSchedule]


def schedule_value(schedule: RadiusSchedule, n: int) -> float:
    if n < 1:
        raise UsageError(f"schedule index must be >= 1, got {n}")
    v = schedule.value(n)
    if v <= 0.0:
        raise ScheduleRangeError(
            f"schedule {schedule.describe()} underflowed to {v} at n={n}"
        )
    return v


def minimal_tail(schedule: RadiusSchedule, bound: float) -> int:
    """Smallest N >= 0 with a_{N+1} < bound (strict float comparison)."""
    if not bound > 0.0:
        raise ConfigurationError(
            f"separation bound must be positive, got {bound}"
        )
    if math.isinf(bound):
        return 0
    n = schedule.first_below(bound)  # safe underestimate of the first index below
    while not schedule_value(schedule, n) < bound:
        n += 1
    return n - 1


def parse_schedule(text: str) -> RadiusSchedule:
    parts = text.split()
    if not parts:
        raise ConfigurationError("empty schedule description")
    name, args = parts[0], parts[1:]
    kv = {}
    rest = []
    for a in args:
        if "=" in a:
            k, _, v = a.partition("=")
            kv[k] = float(v)
        else:
            rest.append(float(a))
    if name == "harmonic":
        return HarmonicSchedule(c=kv.get("c", rest[0] if rest else 1.0))
    if name == "geometric":
        return GeometricSchedule(
            c=kv.get("c", rest[0] if len(rest) > 0 else 1.0),
            q=kv.get("q", rest[1] if len(rest) > 1 else 0.5),
        )
    if name == "explicit":
        return ExplicitSchedule(values=tuple(rest))
    raise ConfigurationError(f"unknown schedule family {name!r}")


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class ConstraintRecord:
    kind: str      # stratum-pair | upper-clearance | nested-containment |
                   # predecessor-clearance | radius-cap
    i: int         # 1-based center index
    j: int         # second index, 0 when the constraint is unary
    margin: float

    @property
    def satisfied(self) -> bool:
        return self.margin > 0.0


@dataclass(frozen=True)
class SeparationCertificate:
    regime: str
    constraints: tuple[ConstraintRecord, ...]
    passed: bool
    first_violation: ConstraintRecord | None

    @property
    def min_margin(self) -> float:
        if not self.constraints:
            return math.inf
        return min(c.margin for c in self.constraints)

    def violations(self) -> list[ConstraintRecord]:
        return [c for c in self.constraints if not c.satisfied]


def _certificate(regime: str, records: list[ConstraintRecord]) -> SeparationCertificate:
    first_bad = next((r for r in records if not r.satisfied), None)
    return SeparationCertificate(
        regime=regime,
        constraints=tuple(records),
        passed=first_bad is None,
        first_violation=first_bad,
    )


# ---------------------------------------------------------------------------
# target families


@dataclass(frozen=True)
class TargetFamily:
    centers: StratifiedCenters
    schedules: tuple[RadiusSchedule, ...]   # one per center index
    tails: tuple[int, ...]                  # N_i, nonnegative
    regime: str
    certificate: SeparationCertificate | None = None

    def __post_init__(self):
        n = len(self.centers.points)
        if len(self.schedules) != n or len(self.tails) != n:
            raise ConfigurationError("schedules and tails must match the center count")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if any(t < 0 for t in self.tails):
            raise ConfigurationError("tail offsets must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.centers.points)

    def radius_at(self, i: int, n: int) -> float:
        """rho^i_n = a^i_{N_i + n}; strictly decreasing in n."""
        if not 1 <= i <= self.size:
            raise UsageError(f"center index {i} out of range 1..{self.size}")
        if n < 1:
            raise UsageError(f"scale must be >= 1, got {n}")
        return schedule_value(self.schedules[i - 1], self.tails[i - 1] + n)

    def scale_one_radii(self) -> list[float]:
        return [self.radius_at(i, 1) for i in range(1, self.size + 1)]

    def radii_matrix(self, indices: Sequence[int], scales: int) -> np.ndarray:
        """(len(indices), scales) matrix of rho^i_n; validates strict decrease."""
        out = np.empty((len(indices), scales), dtype=np.float64)
        for row, i in enumerate(indices):
            for n in range(1, scales + 1):
                out[row, n - 1] = self.radius_at(i, n)
            if np.any(out[row, 1:] >= out[row, :-1]):
                raise ConfigurationError(
                    f"radii for center {i} are not strictly decreasing over "
                    f"scales 1..{scales}"
                )
        return out

    def ball(self, i: int, n: int) -> space.Ball:
        return space.Ball(self.centers.point_of(i), self.radius_at(i, n))


def _normalize_schedules(schedules, count: int) -> tuple[RadiusSchedule, ...]:
    if isinstance(schedules, (HarmonicSchedule, GeometricSchedule, ExplicitSchedule)):
        return (schedules,) * count
    sched = tuple(schedules)
    if len(sched) != count:
        raise ConfigurationError(
            f"need one schedule or {count} schedules, got {len(sched)}"
        )
    return sched


def select_tails_countable(
    centers: StratifiedCenters, schedules
) -> TargetFamily:
    """Minimal tails satisfying the stratified separation contract.

    Levels are processed from 0 upward, each level in ascending index
    order.  The separation bound for center i at level L is the minimum
    over exact distances to later same-level points, distances to higher-
    level points reduced by their cluster tail radii, and distances to
    earlier same-level points reduced by their already chosen radii.
    """
    scheds = _normalize_schedules(schedules, len(centers.points))
    chosen_rho: dict[int, float] = {}
    tails: dict[int, int] = {}
    level_of = {cp.index: cp.level for cp in centers.points}
    for level in centers.levels_present():
        stratum = centers.indices_at_level(level)
        for pos, i in enumerate(stratum):
            p_i = centers.point_of(i)
            bound = math.inf
            for j in stratum[pos + 1:]:
                bound = min(bound, space.distance(p_i, centers.point_of(j)))
            for k in (idx for idx, lvl in level_of.items() if lvl > level):
                d = space.distance(p_i, centers.point_of(k))
                bound = min(bound, d - centers.tail_radius_of(k))
            for h in stratum[:pos]:
                d = space.distance(p_i, centers.point_of(h))
                bound = min(bound, d - chosen_rho[h])
            if not bound > 0.0:
                raise ConfigurationError(
                    f"center {i} (level {level}) has nonpositive separation "
                    f"bound {bound}; envelopes overlap"
                )
            tails[i] = minimal_tail(scheds[i - 1], bound)
            chosen_rho[i] = schedule_value(scheds[i - 1], tails[i] + 1)
    family = TargetFamily(
        centers=centers,
        schedules=scheds,
        tails=tuple(tails[i] for i in range(1, len(centers.points) + 1)),
        regime=COUNTABLE,
    )
    return replace(family, certificate=verify_certificate(family))


def select_tails_nowhere_dense(centers, schedules) -> TargetFamily:
    """Minimal tails with rho^i_1 < min(distance to predecessors, 1/i)."""
    if not isinstance(centers, StratifiedCenters):
        centers = flat_centers(centers)
    scheds = _normalize_schedules(schedules, len(centers.points))
    pts = centers.space_points()
    tails = []
    for i, p in enumerate(pts, start=1):
        dmin = math.inf
        for j in range(i - 1):
            d = space.distance(p, pts[j])
            if d == 0.0:
                raise ConfigurationError(
                    f"duplicate centers at indices {j + 1} and {i}"
                )
            dmin = min(dmin, d)
        bound = min(dmin, 1.0 / i)
        tails.append(minimal_tail(scheds[i - 1], bound))
    family = TargetFamily(
        centers=centers,
        schedules=scheds,
        tails=tuple(tails),
        regime=NOWHERE_DENSE,
    )
    return replace(family, certificate=verify_certificate(family))


def build_family_somewhere_dense(centers, schedules) -> TargetFamily:
    """Zero tails; separation failures are recorded, not enforced."""
    if not isinstance(centers, StratifiedCenters):
        centers = flat_centers(centers)
    scheds = _normalize_schedules(schedules, len(centers.points))
    family = TargetFamily(
        centers=centers,
        schedules=scheds,
        tails=(0,) * len(centers.points),
        regime=SOMEWHERE_DENSE,
    )
    return replace(family, certificate=verify_certificate(family))


# ---------------------------------------------------------------------------
# verification


def verify_certificate(family: TargetFamily) -> SeparationCertificate:
    """Recompute every separation constraint with its numeric margin.

    Margins use fixed operand order (left-to-right subtraction) so that an
    independent reimplementation of the same formulas matches bit for bit.
    """
    if family.regime == COUNTABLE:
        records = _verify_countable(family)
    elif family.regime == NOWHERE_DENSE:
        records = _verify_nowhere_dense(family)
    else:
        records = _verify_somewhere_dense(family)
    return _certificate(family.regime, records)


def _verify_countable(family: TargetFamily) -> list[ConstraintRecord]:
    centers = family.centers
    rho1 = {i: family.radius_at(i, 1) for i in range(1, family.size + 1)}
    level_of = {cp.index: cp.level for cp in centers.points}
    records: list[ConstraintRecord] = []
    for level in centers.levels_present():
        stratum = centers.indices_at_level(level)
        for a in range(len(stratum)):
            for b in range(a + 1, len(stratum)):
                j, k = stratum[a], stratum[b]
                d = space.distance(centers.point_of(j), centers.point_of(k))
                margin = d - rho1[j] - rho1[k]
                records.append(ConstraintRecord("stratum-pair", j, k, margin))
    for j in range(1, family.size + 1):
        for k in range(1, family.size + 1):
            if level_of[k] > level_of[j]:
                d = space.distance(centers.point_of(j), centers.point_of(k))
                margin = d - centers.tail_radius_of(k) - rho1[j]
                records.append(ConstraintRecord("upper-clearance", j, k, margin))
    for i in range(1, family.size + 1):
        for j in range(1, family.size + 1):
            if i == j:
                continue
            d = space.distance(centers.point_of(i), centers.point_of(j))
            if d < rho1[i]:  # p_j lies in the scale-1 ball of center i
                margin = 2.0 * rho1[i] - d - rho1[j]
                records.append(ConstraintRecord("nested-containment", i, j, margin))
    return records


def _verify_nowhere_dense(family: TargetFamily) -> list[ConstraintRecord]:
    centers = family.centers
    pts = centers.space_points()
    records: list[ConstraintRecord] = []
    for i in range(1, family.size + 1):
        rho = family.radius_at(i, 1)
        for j in range(1, i):
            d = space.distance(pts[i - 1], pts[j - 1])
            records.append(
                ConstraintRecord("predecessor-clearance", i, j, d - rho)
            )
        records.append(ConstraintRecord("radius-cap", i, 0, 1.0 / i - rho))
    return records


def _verify_somewhere_dense(family: TargetFamily) -> list[ConstraintRecord]:
    # Nearest-neighbor disjointness checks stand in for the full pair set,
    # which is quadratic in the (typically dense, large) center count.
    centers = family.centers
    pts = centers.space_points()
    arr = space.points_array(pts)
    kind = centers.space_kind
    records: list[ConstraintRecord] = []
    if len(pts) < 2:
        return records
    chunk = max(1, 4_000_000 // len(pts))
    rho1 = [family.radius_at(i, 1) for i in range(1, family.size + 1)]
    for lo in range(0, len(pts), chunk):
        hi = min(len(pts), lo + chunk)
        mat = space.pairwise_distance_matrix(arr[lo:hi], arr, kind)
        for r in range(hi - lo):
            mat[r, lo + r] = np.inf
        nn = np.argmin(mat, axis=1)
        for r in range(hi - lo):
            i = lo + r + 1
            j = int(nn[r]) + 1
            d = float(mat[r, j - 1])
            margin = d - rho1[i - 1] - rho1[j - 1]
            records.append(ConstraintRecord("stratum-pair", i, j, margin))
    return records


# ---------------------------------------------------------------------------
# serialization

_FAMILY_VERSION = "firstvisit-family v1"


def family_to_table(family: TargetFamily) -> str:
    from .derived import centers_to_table

    lines = [f"# {_FAMILY_VERSION}", f"# regime {family.regime}"]
    lines.append(centers_to_table(family.centers).rstrip("\n"))
    lines.append("# schedules: index family-description N")
    for i in range(1, family.size + 1):
        lines.append(
            f"{i} {family.schedules[i - 1].describe()} {family.tails[i - 1]}"
        )
    return "\n".join(lines) + "\n"


def family_from_table(text: str) -> TargetFamily:
    from .derived import centers_from_table

    lines = text.splitlines()
    if not lines or lines[0] != f"# {_FAMILY_VERSION}":
        raise ConfigurationError("unrecognized family table header")
    regime = lines[1].split()[-1]
    try:
        split = lines.index("# schedules: index family-description N")
    except ValueError:
        raise ConfigurationError("family table lacks a schedules section") from None
    centers = centers_from_table("\n".join(lines[2:split]))
    schedules: list[RadiusSchedule] = []
    tails: list[int] = []
    for ln in lines[split + 1:]:
        if not ln.strip():
            continue
        parts = ln.split()
        schedules.append(parse_schedule(" ".join(parts[1:-1])))
        tails.append(int(parts[-1]))
    family = TargetFamily(
        centers=centers,
        schedules=tuple(schedules),
        tails=tuple(tails),
        regime=regime,
    )
    return replace(family, certificate=verify_certificate(family))


def certificate_to_csv(cert: SeparationCertificate) -> str:
    lines = ["kind,i,j,margin"]
    for c in cert.constraints:
        lines.append(f"{c.kind},{c.i},{c.j},{format(c.margin, '.17g')}")
    return "\n".join(lines) + "\n"


def certificate_from_csv(text: str, regime: str) -> SeparationCertificate:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "kind,i,j,margin":
        raise ConfigurationError("unrecognized certificate CSV header")
    records = []
    for ln in lines[1:]:
        kind, i, j, margin = ln.split(",")
        records.append(ConstraintRecord(kind, int(i), int(j), float(margin)))
    return _certificate(regime, records)
