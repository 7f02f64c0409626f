"""Derived sets, rank stratification, and cluster constructions.

The derived set of a finite truncation is always empty, so accumulation is
approximated at declared scales: a point survives one sieve step at scale
``delta`` when some other point lies within ``delta`` of it.  Iterating the
sieve along a strictly decreasing schedule assigns each point a level (the
number of steps it survives), and the largest level is the detected rank.
Analyzing an arbitrary finite set this way yields a lower bound on the rank
of whatever infinite object it truncates; only constructions that emit a
schedule matched to their own realized gaps can be re-analyzed exactly.

Constructions build nested clusters: around a root point, satellites are
placed in dyadic annuli (radii between delta/2^n and delta/2^(n-1)), each
wrapped in an envelope ball small enough that sibling envelopes have
disjoint closures.  Recursing inside envelopes yields finite truncations of
arbitrary finite rank.  Levels recorded on the result are the construction
tree depths; ranks are finite ordinals stored as plain nonnegative ints
(the transfinite hierarchy collapses to finite ranks at any truncation).

Every cluster record carries, besides its enclosing envelope, a tail
radius: the ball around the cluster center that would contain all the
satellites a finite truncation leaves out.  Separation logic downstream
subtracts this radius to stay sound for the untruncated object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import space
from .anchors import AnchorSource
from .errors import ConfigurationError, UsageError

# Mid-annulus sampling band, as multiples of the inner annulus radius.
# Keeping draws away from both annulus boundaries leaves exact, verifiable
# margins for the envelope radii.
_BAND_LO = 1.25
_BAND_HI = 1.75

_ENVELOPE_SHRINK = 0.9  # envelope radius = 0.9 x its strict upper bound

DEFAULT_POPULATION_CAP = 10_000


@dataclass(frozen=True)
class CenterPoint:
    index: int            # 1-based, contiguous over the whole truncation
    point: space.SpacePoint
    level: int            # stratification level (finite ordinal)
    parent: int = 0       # index of the owning cluster's center, 0 = none


@dataclass(frozen=True)
class ClusterEnvelope:
    rep: int              # index of the cluster's center point
    ball: space.Ball      # enclosing ball of the cluster rooted at rep
    tail_radius: float    # holds every satellite the truncation omits


@dataclass(frozen=True)
class StratifiedCenters:
    points: tuple[CenterPoint, ...]
    clusters: tuple[ClusterEnvelope, ...] = ()
    delta_schedule: tuple[float, ...] | None = None
    rank: int = 0
    rank_is_lower_bound: bool = False

    def __post_init__(self):
        indices = [cp.index for cp in self.points]
        if indices != list(range(1, len(indices) + 1)):
            raise ConfigurationError("center indices must be contiguous from 1")

    @property
    def space_kind(self) -> str:
        return self.points[0].point.kind

    def point_of(self, index: int) -> space.SpacePoint:
        return self.points[index - 1].point

    def level_of(self, index: int) -> int:
        return self.points[index - 1].level

    def envelope_of(self, index: int) -> ClusterEnvelope | None:
        for c in self.clusters:
            if c.rep == index:
                return c
        return None

    def tail_radius_of(self, index: int) -> float:
        env = self.envelope_of(index)
        return env.tail_radius if env is not None else 0.0

    def indices_at_level(self, level: int) -> list[int]:
        return [cp.index for cp in self.points if cp.level == level]

    def levels_present(self) -> list[int]:
        return sorted({cp.level for cp in self.points})

    def space_points(self) -> list[space.SpacePoint]:
        return [cp.point for cp in self.points]


def flat_centers(points) -> StratifiedCenters:
    """All points at level 0, no cluster structure."""
    pts = tuple(
        CenterPoint(i + 1, p, 0, 0) for i, p in enumerate(points)
    )
    if not pts:
        raise ConfigurationError("at least one center is required")
    return StratifiedCenters(points=pts)


# ---------------------------------------------------------------------------
# delta-scale derived sets


def derived_set_approx(points, delta: float):
    """Points with another point (by position in the list) within delta.

    Non-strict comparison (d <= delta); input order is preserved.  Entries
    are distinguished by list position, so duplicated coordinates keep each
    other alive.
    """
    if delta <= 0.0:
        raise UsageError(f"delta must be positive, got {delta}")
    pts = list(points)
    if len(pts) < 2:
        return []
    arr = space.points_array(pts)
    kind = pts[0].kind
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    chunk = max(1, min(n, 4_000_000 // max(n, 1)))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        mat = space.pairwise_distance_matrix(arr[lo:hi], arr, kind)
        for r in range(hi - lo):
            mat[r, lo + r] = np.inf
        keep[lo:hi] = mat.min(axis=1) <= delta
    return [p for p, k in zip(pts, keep) if k]


def cb_stratify(points, delta_schedule) -> StratifiedCenters:
    """Iterate the delta-sieve and record how many steps each point survives.

    The schedule must be strictly decreasing.  If the surviving set is
    nonempty when the schedule runs out, the reported rank is only a lower
    bound and the result is flagged accordingly.
    """
    schedule = tuple(float(d) for d in delta_schedule)
    if not schedule:
        raise UsageError("delta schedule must be nonempty")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise UsageError("delta schedule must be strictly decreasing")
    pts = list(points)
    levels = [0] * len(pts)
    survivors = list(range(len(pts)))
    exhausted = False
    for step, delta in enumerate(schedule, start=1):
        if not survivors:
            break
        current = [pts[i] for i in survivors]
        kept = derived_set_approx(current, delta)
        kept_ids = set(id(p) for p in kept)
        survivors = [i for i, p in zip(survivors, current) if id(p) in kept_ids]
        for i in survivors:
            levels[i] = step
    else:
        exhausted = bool(survivors)
    rank = max(levels) if levels else 0
    return StratifiedCenters(
        points=tuple(
            CenterPoint(i + 1, p, lvl, 0) for i, (p, lvl) in enumerate(zip(pts, levels))
        ),
        clusters=(),
        delta_schedule=schedule,
        rank=rank,
        rank_is_lower_bound=exhausted,
    )


# ---------------------------------------------------------------------------
# cluster constructions


def _annulus_sampler(center: space.SpacePoint, inner: float, outer: float):
    """Uniform draw from the mid-annulus band around center.

    The radial offset is confined to [_BAND_LO, _BAND_HI) times the inner
    radius, strictly inside (inner, outer); on the torus the non-radial
    coordinate gets a jitter smaller than the offset, so the max-metric
    distance from the center is exactly the radial offset.
    """
    lo = _BAND_LO * inner
    hi = _BAND_HI * inner

    def sample(rng: np.random.Generator) -> space.SpacePoint:
        u = lo + (hi - lo) * rng.random()
        side = 1.0 if rng.random() < 0.5 else -1.0
        if isinstance(center, space.CirclePoint):
            return space.CirclePoint(center.angle + side * u)
        jitter = (rng.random() - 0.5) * u
        return space.TorusPoint(center.x + side * u, center.y + jitter)

    return sample


def _build_cluster(
    centers: list[CenterPoint],
    clusters: list[ClusterEnvelope],
    parent_index: int,
    parent_point: space.SpacePoint,
    delta: float,
    level: int,
    branching: int,
    anchor: AnchorSource,
) -> None:
    """Attach `branching` satellites at dyadic annuli inside B_delta(parent)."""
    cluster_anchor = anchor.child(parent_index)
    for shell in range(2, branching + 2):
        inner = delta / 2.0 ** shell
        outer = delta / 2.0 ** (shell - 1)
        sampler = _annulus_sampler(parent_point, inner, outer)
        description = (
            f"annulus radii ({inner:.6g}, {outer:.6g}) around center "
            f"#{parent_index}"
        )
        for _ in range(32):
            candidate = cluster_anchor.draw(sampler, description)
            d = space.distance(candidate, parent_point)
            if inner < d < outer:
                break
        else:
            raise ConfigurationError(
                f"could not realize a point strictly inside {description}"
            )
        envelope_radius = _ENVELOPE_SHRINK * min(outer - d, d - inner)
        idx = len(centers) + 1
        centers.append(CenterPoint(idx, candidate, level, parent_index))
        tail = envelope_radius / 2.0 ** (branching + 1) if level >= 1 else 0.0
        clusters.append(
            ClusterEnvelope(idx, space.Ball(candidate, envelope_radius), tail)
        )
        if level >= 1:
            _build_cluster(
                centers, clusters, idx, candidate, envelope_radius,
                level - 1, branching, anchor,
            )


def _matched_schedule(pts, rank: int) -> tuple[float, ...]:
    """Sieve schedule under which the root survives exactly `rank` steps.

    In a finite truncation the root is the most isolated point of its own
    cluster tree (structure refines downward), so the only sieve profile
    reaching the declared rank keeps every point alive through `rank`
    steps -- the thresholds sit just above the connectivity radius -- and
    wipes the set at step rank + 1 with half the minimal pairwise gap.
    """
    arr = space.points_array(pts)
    kind = pts[0].kind
    mat = space.pairwise_distance_matrix(arr, arr, kind)
    np.fill_diagonal(mat, np.inf)
    nearest = mat.min(axis=1)
    connectivity = float(nearest.max())
    min_gap = float(mat.min())
    head = [connectivity * (1.0 + 0.25 * (rank - j)) for j in range(rank)]
    return tuple(head + [min_gap / 2.0])


def construct_rank_sequence(
    x: space.SpacePoint,
    delta: float,
    rank: int,
    branching: int,
    anchor: AnchorSource,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> StratifiedCenters:
    """Finite truncation of a rank-`rank` center set accumulating at x.

    The root sits at level `rank`; each level-(l+1) point carries a cluster
    of `branching` level-l satellites inside its envelope.  Total population
    is sum(branching^j, j = 0..rank) and must stay within population_cap.
    """
    if rank < 1:
        raise UsageError(f"rank must be at least 1, got {rank}")
    if branching < 2:
        raise UsageError(f"branching must be at least 2, got {branching}")
    if not 0.0 < delta <= 0.5:
        raise UsageError(f"delta must lie in (0, 0.5], got {delta}")
    population = sum(branching ** j for j in range(rank + 1))
    if population > population_cap:
        raise ConfigurationError(
            f"rank {rank} with branching {branching} needs {population} points; "
            f"raise population_cap (currently {population_cap})"
        )
    anchor.register(x)
    centers: list[CenterPoint] = [CenterPoint(1, x, rank, 0)]
    clusters: list[ClusterEnvelope] = [
        ClusterEnvelope(1, space.Ball(x, delta), delta / 2.0 ** (branching + 1))
    ]
    _build_cluster(centers, clusters, 1, x, delta, rank - 1, branching, anchor)
    schedule = _matched_schedule([cp.point for cp in centers], rank)
    return StratifiedCenters(
        points=tuple(centers),
        clusters=tuple(clusters),
        delta_schedule=schedule,
        rank=rank,
    )


def construct_cluster_sequence(
    x: space.SpacePoint,
    delta: float,
    count: int,
    anchor: AnchorSource,
) -> StratifiedCenters:
    """Single cluster: x plus count-1 satellites in dyadic annuli around it."""
    if count < 2:
        raise UsageError(f"count must be at least 2, got {count}")
    return construct_rank_sequence(x, delta, 1, count - 1, anchor)


# ---------------------------------------------------------------------------
# sup-metric on truncated sequences


@dataclass(frozen=True)
class SequencePair:
    """Two same-length truncations of point sequences plus a tail bound.

    The tail bound is an analytic bound on sup distance over the omitted
    indices; it widens the reported value into an interval.
    """

    first: tuple[space.SpacePoint, ...]
    second: tuple[space.SpacePoint, ...]
    tail_bound: float = 0.0

    def __post_init__(self):
        if len(self.first) != len(self.second) or len(self.first) < 1:
            raise UsageError("sequence pair needs equal truncation length >= 1")
        if self.tail_bound < 0.0:
            raise UsageError("tail bound must be nonnegative")
        kinds = {p.kind for p in self.first} | {p.kind for p in self.second}
        if len(kinds) != 1:
            raise UsageError("sequence pair mixes space kinds")


@dataclass(frozen=True)
class SupMetricResult:
    max_distance: float   # sup over the stored truncation
    tail_bound: float
    argmax: int           # 1-based coordinate attaining the max

    @property
    def upper(self) -> float:
        return self.max_distance + self.tail_bound


def sup_metric_distance(pair: SequencePair) -> SupMetricResult:
    """Truncated sup metric, reported as [max, max + tail_bound]."""
    best = -1.0
    arg = 1
    for n, (p, q) in enumerate(zip(pair.first, pair.second), start=1):
        d = space.distance(p, q)
        if d > best:
            best = d
            arg = n
    return SupMetricResult(best, pair.tail_bound, arg)


# ---------------------------------------------------------------------------
# orbit disjointness surrogate


@dataclass(frozen=True)
class OrbitDisjointnessReport:
    passed: bool
    min_distance: float
    tolerance: float
    window: int
    pair: tuple[int, int] | None       # center indices (1-based), None if < 2
    steps: tuple[int, int] | None      # iterates (k, h) attaining the minimum


def orbit_disjointness_check(
    centers, map_: space.DynamicalMap, K: int, tol: float
) -> OrbitDisjointnessReport:
    """Minimum distance between distinct centers' orbit segments, |k|,|h| <= K.

    Failure (min <= tol) is reported, never raised.
    """
    if K < 1:
        raise UsageError(f"window must be at least 1, got {K}")
    if isinstance(centers, StratifiedCenters):
        pts = centers.space_points()
    else:
        pts = list(centers)
    if len(pts) < 2:
        return OrbitDisjointnessReport(True, math.inf, tol, K, None, None)
    kind = pts[0].kind
    segments = [space.orbit_segment_array(map_, p, K) for p in pts]
    best = math.inf
    best_pair = None
    best_steps = None
    width = 2 * K + 1
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            a, b = segments[i], segments[j]
            chunk = max(1, 2_000_000 // width)
            for lo in range(0, width, chunk):
                hi = min(width, lo + chunk)
                mat = space.pairwise_distance_matrix(a[lo:hi], b, kind)
                pos = int(np.argmin(mat))
                r, c = divmod(pos, width)
                if mat[r, c] < best:
                    best = float(mat[r, c])
                    best_pair = (i + 1, j + 1)
                    best_steps = (lo + r - K, c - K)
    return OrbitDisjointnessReport(
        passed=bool(best > tol),
        min_distance=best,
        tolerance=tol,
        window=K,
        pair=best_pair,
        steps=best_steps,
    )


# ---------------------------------------------------------------------------
# plain-text serialization (bit-exact round trip)

_TABLE_VERSION = "firstvisit-centers v1"


def _fmt(v: float) -> str:
    return format(v, ".17g")


def centers_to_table(sc: StratifiedCenters) -> str:
    """Versioned plain-text table; floats carry 17 significant digits."""
    lines = [f"# {_TABLE_VERSION}"]
    lines.append(f"# space {sc.space_kind}")
    lines.append(f"# rank {sc.rank}")
    lines.append(f"# lower_bound {int(sc.rank_is_lower_bound)}")
    if sc.delta_schedule is not None:
        lines.append("# schedule " + " ".join(_fmt(d) for d in sc.delta_schedule))
    else:
        lines.append("# schedule none")
    coord_cols = "x" if sc.space_kind == space.CIRCLE else "x y"
    lines.append(
        f"# columns: index level {coord_cols} parent envelope_radius tail_radius"
    )
    env = {c.rep: c for c in sc.clusters}
    for cp in sc.points:
        coords = " ".join(_fmt(c) for c in cp.point.coords)
        rec = env.get(cp.index)
        radius = rec.ball.radius if rec is not None else 0.0
        tail = rec.tail_radius if rec is not None else 0.0
        lines.append(
            f"{cp.index} {cp.level} {coords} {cp.parent} {_fmt(radius)} {_fmt(tail)}"
        )
    return "\n".join(lines) + "\n"


def centers_from_table(text: str) -> StratifiedCenters:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {_TABLE_VERSION}":
        raise ConfigurationError("unrecognized centers table header")
    meta = {}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# columns:"):
            continue
        if ln.startswith("# "):
            key, _, value = ln[2:].partition(" ")
            meta[key] = value
            continue
        rows.append(ln.split())
    kind = meta.get("space")
    if kind not in (space.CIRCLE, space.TORUS):
        raise ConfigurationError(f"bad space kind in table: {kind!r}")
    ncoords = 1 if kind == space.CIRCLE else 2
    points = []
    clusters = []
    for row in rows:
        if len(row) != 5 + ncoords:
            raise ConfigurationError(f"malformed table row: {row!r}")
        index = int(row[0])
        level = int(row[1])
        coords = tuple(float(v) for v in row[2:2 + ncoords])
        parent = int(row[2 + ncoords])
        radius = float(row[3 + ncoords])
        tail = float(row[4 + ncoords])
        pt = space.make_point(kind, coords)
        points.append(CenterPoint(index, pt, level, parent))
        if radius > 0.0:
            clusters.append(ClusterEnvelope(index, space.Ball(pt, radius), tail))
    schedule_txt = meta.get("schedule", "none")
    schedule = (
        None if schedule_txt == "none"
        else tuple(float(v) for v in schedule_txt.split())
    )
    return StratifiedCenters(
        points=tuple(points),
        clusters=tuple(clusters),
        delta_schedule=schedule,
        rank=int(meta.get("rank", "0")),
        rank_is_lower_bound=bool(int(meta.get("lower_bound", "0"))),
    )
