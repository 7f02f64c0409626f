"""Hit times, per-scale winners, classification, and witness searches.

A sample's interaction with a target family is summarized by its hit-time
matrix: the smallest step k in 0..K whose orbit point lies in the ball of
center i at scale n.  One compiled sweep produces the whole matrix, deriving
all per-scale memberships of step k from a single distance evaluation per
center, so winner rows, hit times, and traces are mutually consistent by
construction.  The winner at scale n is the center whose ball is entered
strictly first; equal first entries or no entries at all leave the scale
winnerless.

Classification is the horizon-truncated version of the decisive/indecisive
taxonomy: a point is indecisive when at least two centers each win at least
m scales, completely indecisive when every tracked center does.

First-capture membership uses the companion convention that starts counting
at step 1 (both step conventions appear in the underlying theory; the
adapter between them is one application of the map).  Witness searches
certify, by exhaustive sampling, the two constructive facts behind the
countable and nowhere-dense regimes: first-capture sets contain whole balls
around backward iterates of isolated centers, and accumulate on boundary
points at cluster limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, space
from .errors import ResolutionError, UsageError
from .targets import TargetFamily

DEFAULT_HORIZON_ROTATION = 1_000_000
DEFAULT_HORIZON_TORAL = 10_000  # mixing reaches balls fast on the torus


def default_horizon(map_: space.DynamicalMap) -> int:
    if isinstance(map_, space.RotationMap):
        return DEFAULT_HORIZON_ROTATION
    return DEFAULT_HORIZON_TORAL


@dataclass(frozen=True)
class HitOutcome:
    """First entry step into a ball, or the exhausted horizon."""

    step: int | None
    horizon: int

    def __post_init__(self):
        if self.step is not None and not 0 <= self.step <= self.horizon:
            raise UsageError("hit step must lie in 0..horizon")

    @property
    def hit(self) -> bool:
        return self.step is not None


def _hit_matrix(
    map_: space.DynamicalMap,
    x: space.SpacePoint,
    centers_arr: np.ndarray,
    radii: np.ndarray,
    K: int,
) -> np.ndarray:
    if isinstance(map_, space.RotationMap):
        return kernels.rotation_hit_sweep(x.angle, map_.alpha, centers_arr, radii, K)
    (m00, m01), (m10, m11) = map_.matrix
    return kernels.torus_hit_sweep(
        x.x, x.y, float(m00), float(m01), float(m10), float(m11),
        centers_arr, radii, K,
    )


def _hit_matrix_batch(map_, xs_arr, centers_arr, radii, K) -> np.ndarray:
    if isinstance(map_, space.RotationMap):
        return kernels.rotation_hit_sweep_batch(xs_arr, map_.alpha, centers_arr, radii, K)
    (m00, m01), (m10, m11) = map_.matrix
    return kernels.torus_hit_sweep_batch(
        xs_arr, float(m00), float(m01), float(m10), float(m11),
        centers_arr, radii, K,
    )


def hit_time(
    map_: space.DynamicalMap, x: space.SpacePoint, ball: space.Ball, K: int
) -> HitOutcome:
    """Smallest k in 0..K with f^k(x) inside the open ball."""
    if K < 0:
        raise UsageError(f"horizon must be nonnegative, got {K}")
    centers_arr = space.points_array([ball.center])
    if ball.center.kind == space.TORUS:
        centers_arr = centers_arr.reshape(1, 2)
    radii = np.array([[ball.radius]], dtype=np.float64)
    hits = _hit_matrix(map_, x, centers_arr, radii, K)
    step = int(hits[0, 0])
    return HitOutcome(step if step >= 0 else None, K)


WINNER_TIE = "tie"
WINNER_NO_HIT = "no-hit"


@dataclass(frozen=True)
class ScaleRow:
    """Hit steps of every tracked center at one scale, plus the winner."""

    scale: int
    tracked: tuple[int, ...]
    steps: tuple[int | None, ...]
    winner: int | None
    reason: str | None  # WINNER_TIE or WINNER_NO_HIT when winner is None


def _resolve_winner(tracked, steps_row) -> tuple[int | None, str | None]:
    valid = [(s, i) for s, i in zip(steps_row, tracked) if s >= 0]
    if not valid:
        return None, WINNER_NO_HIT
    k_star = min(s for s, _ in valid)
    leaders = [i for s, i in valid if s == k_star]
    if len(leaders) > 1:
        return None, WINNER_TIE
    return leaders[0], None


def _scale_row(tracked, hits, n) -> ScaleRow:
    col = hits[:, n - 1]
    winner, reason = _resolve_winner(tracked, col)
    return ScaleRow(
        scale=n,
        tracked=tuple(tracked),
        steps=tuple(int(s) if s >= 0 else None for s in col),
        winner=winner,
        reason=reason,
    )


def _tracked_arrays(family: TargetFamily, tracked, scales: int):
    tracked = tuple(tracked)
    if not tracked:
        raise UsageError("tracked index set must be nonempty")
    bad = [i for i in tracked if not 1 <= i <= family.size]
    if bad:
        raise UsageError(f"tracked indices {bad} outside 1..{family.size}")
    pts = [family.centers.point_of(i) for i in tracked]
    centers_arr = space.points_array(pts)
    if family.centers.space_kind == space.TORUS:
        centers_arr = centers_arr.reshape(len(tracked), 2)
    radii = family.radii_matrix(tracked, scales)
    return tracked, centers_arr, radii


def winner_at_scale(
    map_: space.DynamicalMap,
    x: space.SpacePoint,
    family: TargetFamily,
    tracked,
    n: int,
    K: int,
) -> ScaleRow:
    """Winner among tracked centers at scale n: strictly first entry wins."""
    tracked, centers_arr, radii = _tracked_arrays(family, tracked, n)
    hits = _hit_matrix(map_, x, centers_arr, np.ascontiguousarray(radii[:, n - 1:n]), K)
    winner, reason = _resolve_winner(tracked, hits[:, 0])
    return ScaleRow(
        scale=n,
        tracked=tracked,
        steps=tuple(int(s) if s >= 0 else None for s in hits[:, 0]),
        winner=winner,
        reason=reason,
    )


@dataclass(frozen=True)
class WinnerTrace:
    """Per-scale hit steps and winners for one sample point."""

    sample: space.SpacePoint
    tracked: tuple[int, ...]
    scales: int
    horizon: int
    hit_steps: np.ndarray  # (len(tracked), scales) int64, -1 = no hit

    def row(self, n: int) -> ScaleRow:
        if not 1 <= n <= self.scales:
            raise UsageError(f"scale {n} outside 1..{self.scales}")
        return _scale_row(self.tracked, self.hit_steps, n)

    def rows(self) -> list[ScaleRow]:
        return [self.row(n) for n in range(1, self.scales + 1)]

    def winners(self) -> list[int | None]:
        return [self.row(n).winner for n in range(1, self.scales + 1)]


def winner_trace(
    map_: space.DynamicalMap,
    x: space.SpacePoint,
    family: TargetFamily,
    tracked,
    scales: int,
    K: int,
) -> WinnerTrace:
    """One orbit pass resolving every (center, scale) hit time."""
    if scales < 1:
        raise UsageError(f"scales must be >= 1, got {scales}")
    tracked, centers_arr, radii = _tracked_arrays(family, tracked, scales)
    hits = _hit_matrix(map_, x, centers_arr, radii, K)
    return WinnerTrace(x, tracked, scales, K, hits)


def winner_trace_batch(
    map_: space.DynamicalMap,
    xs,
    family: TargetFamily,
    tracked,
    scales: int,
    K: int,
) -> list[WinnerTrace]:
    """Traces for many samples; samples are independent, order preserved."""
    xs = list(xs)
    if not xs:
        return []
    tracked, centers_arr, radii = _tracked_arrays(family, tracked, scales)
    xs_arr = space.points_array(xs)
    if family.centers.space_kind == space.TORUS:
        xs_arr = xs_arr.reshape(len(xs), 2)
    hits = _hit_matrix_batch(map_, xs_arr, centers_arr, radii, K)
    return [
        WinnerTrace(x, tracked, scales, K, hits[s])
        for s, x in enumerate(xs)
    ]


@dataclass(frozen=True)
class ClassificationReport:
    """Horizon-truncated decisive/indecisive classification of one sample."""

    tracked: tuple[int, ...]
    scales: int
    horizon: int
    threshold: int
    win_counts: tuple[int, ...]        # aligned with tracked
    misses_everything: bool            # no hits at all from some scale on
    eventual_winner: int | None        # constant winner on the final scales
    indecisive: bool                   # >= 2 centers with >= threshold wins
    completely_indecisive: bool        # every tracked center has >= threshold

    def count_of(self, index: int) -> int:
        return self.win_counts[self.tracked.index(index)]


def classify_trace(trace: WinnerTrace, m: int) -> ClassificationReport:
    """Apply the win-count taxonomy at threshold m (>= 2)."""
    if m < 2:
        raise UsageError(f"threshold must be >= 2, got {m}")
    winners = trace.winners()
    counts = {i: 0 for i in trace.tracked}
    for w in winners:
        if w is not None:
            counts[w] += 1
    # Balls are nested across scales, so a scale with no hits at all makes
    # every later scale hitless as well.
    no_hits_final = bool(np.all(trace.hit_steps[:, -1] < 0))
    big = [i for i in trace.tracked if counts[i] >= m]
    return ClassificationReport(
        tracked=trace.tracked,
        scales=trace.scales,
        horizon=trace.horizon,
        threshold=m,
        win_counts=tuple(counts[i] for i in trace.tracked),
        misses_everything=no_hits_final,
        eventual_winner=winners[-1],
        indecisive=len(big) >= 2,
        completely_indecisive=len(big) == len(trace.tracked),
    )


# ---------------------------------------------------------------------------
# first-capture sets (step count starts at 1)


def first_capture(
    map_: space.DynamicalMap,
    x: space.SpacePoint,
    family: TargetFamily,
    i: int,
    n: int,
    K: int,
) -> bool:
    """True iff the orbit enters ball i at scale n strictly before every
    other ball of the family, counting steps from 1."""
    if K < 1:
        raise UsageError(f"horizon must be >= 1, got {K}")
    tracked, centers_arr, radii = _tracked_arrays(
        family, range(1, family.size + 1), n
    )
    radii_n = np.ascontiguousarray(radii[:, n - 1])
    target = i - 1
    if isinstance(map_, space.RotationMap):
        return bool(
            kernels.rotation_first_capture(
                x.angle, map_.alpha, centers_arr, radii_n, target, K
            )
        )
    (m00, m01), (m10, m11) = map_.matrix
    return bool(
        kernels.torus_first_capture(
            x.x, x.y, float(m00), float(m01), float(m10), float(m11),
            centers_arr, radii_n, target, K,
        )
    )


def _first_capture_batch(map_, xs_arr, centers_arr, radii_n, target, K) -> np.ndarray:
    if isinstance(map_, space.RotationMap):
        return kernels.rotation_first_capture_batch(
            xs_arr, map_.alpha, centers_arr, radii_n, target, K
        )
    (m00, m01), (m10, m11) = map_.matrix
    return kernels.torus_first_capture_batch(
        xs_arr, float(m00), float(m01), float(m10), float(m11),
        centers_arr, radii_n, target, K,
    )


# ---------------------------------------------------------------------------
# witness searches


@dataclass(frozen=True)
class WitnessParams:
    n_max: int = 200
    radius_ladder: tuple[float, ...] = tuple(0.5 ** t for t in range(1, 13))
    samples: int = 1000
    horizon: int = DEFAULT_HORIZON_ROTATION
    seed: int = 0
    max_draws: int = 4096


@dataclass(frozen=True)
class OpenWitnessResult:
    """Ball around a backward iterate all of whose samples are captured first."""

    success: bool
    center_index: int
    m: int
    scale: int | None
    witness_center: space.SpacePoint | None
    witness_radius: float | None
    samples: int
    fraction: float                 # capture fraction of the best attempt
    best_scale: int | None          # best (n, r) seen, useful on failure
    best_radius: float | None


def _sample_in_ball(rng, center: space.SpacePoint, r: float) -> space.SpacePoint:
    if isinstance(center, space.CirclePoint):
        while True:
            u = (2.0 * rng.random() - 1.0) * r
            if abs(u) < r:
                return space.CirclePoint(center.angle + u)
    while True:
        u = (2.0 * rng.random() - 1.0) * r
        v = (2.0 * rng.random() - 1.0) * r
        if max(abs(u), abs(v)) < r:
            return space.TorusPoint(center.x + u, center.y + v)


def open_witness_search(
    map_: space.DynamicalMap,
    family: TargetFamily,
    i: int,
    m: int,
    params: WitnessParams = WitnessParams(),
) -> OpenWitnessResult:
    """Find (n, r) with the whole sampled ball B_r(f^-m(p_i)) captured first.

    Requires an isolated center (stratification level 0) and m >= 1.  Scales
    ascend to n_max; at each scale the center point is screened before the
    radius ladder is descended.  Success means every sample of the ball is a
    first-capture point; failure reports the best fraction found.
    """
    if family.centers.level_of(i) != 0:
        raise UsageError(
            f"center {i} has level {family.centers.level_of(i)}; the open "
            "witness search applies to isolated centers only"
        )
    if m < 1:
        raise UsageError(f"backward depth m must be >= 1, got {m}")
    c = space.iterate(map_, family.centers.point_of(i), -m)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    tracked, centers_arr, radii_full = _tracked_arrays(
        family, range(1, family.size + 1), params.n_max
    )
    target = i - 1
    best = (0.0, None, None)
    for n in range(1, params.n_max + 1):
        radii_n = np.ascontiguousarray(radii_full[:, n - 1])
        if not first_capture(map_, c, family, i, n, params.horizon):
            continue
        rho_in = radii_n[target]
        for frac in params.radius_ladder:
            r = frac * rho_in
            pts = [_sample_in_ball(rng, c, r) for _ in range(params.samples)]
            xs_arr = space.points_array(pts)
            if family.centers.space_kind == space.TORUS:
                xs_arr = xs_arr.reshape(len(pts), 2)
            wins = _first_capture_batch(
                map_, xs_arr, centers_arr, radii_n, target, params.horizon
            )
            fraction = float(wins.mean())
            if fraction > best[0]:
                best = (fraction, n, r)
            if fraction == 1.0:
                return OpenWitnessResult(
                    True, i, m, n, c, r, params.samples, 1.0, n, r
                )
    return OpenWitnessResult(
        False, i, m, None, None, None, params.samples,
        best[0], best[1], best[2],
    )


@dataclass(frozen=True)
class BoundaryWitnessResult:
    """First-capture points approaching a backward iterate of a cluster limit."""

    success: bool
    center_index: int
    m: int
    scale: int | None
    witnesses: tuple[space.SpacePoint, ...]   # t-th witness within 2^-t of target
    target: space.SpacePoint
    found: int
    requested: int


def boundary_witness_search(
    map_: space.DynamicalMap,
    family: TargetFamily,
    i: int,
    m: int,
    T: int,
    params: WitnessParams = WitnessParams(),
) -> BoundaryWitnessResult:
    """Find y_1..y_T in the scale-n first-capture set of an accumulation
    center with d(y_t, f^-m(p_i)) < 2^-t.

    Candidates are backward iterates of points sampled close to p_i inside
    its own ball but outside every sibling ball at that scale.
    """
    level = family.centers.level_of(i)
    if level < 1:
        raise UsageError(
            f"center {i} is isolated (level 0); the boundary witness search "
            "applies to accumulation centers"
        )
    if m < 1:
        raise UsageError(f"backward depth m must be >= 1, got {m}")
    if T < 0:
        raise UsageError(f"witness count must be >= 0, got {T}")
    p_i = family.centers.point_of(i)
    c = space.iterate(map_, p_i, -m)
    if T == 0:
        return BoundaryWitnessResult(True, i, m, None, (), c, 0, 0)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    others = [j for j in range(1, family.size + 1) if j != i]
    best_found = 0
    best_scale = None
    for n in range(1, params.n_max + 1):
        rho_in = family.radius_at(i, n)
        sibling = [
            (family.centers.point_of(j), family.radius_at(j, n))
            for j in others
            if space.distance(p_i, family.centers.point_of(j)) < rho_in
        ]
        witnesses = []
        ok = True
        for t in range(1, T + 1):
            r_draw = 0.999 * min(2.0 ** -t, rho_in)
            y = None
            for _ in range(params.max_draws):
                z = _sample_in_ball(rng, p_i, r_draw)
                if any(space.distance(z, q) <= rho for q, rho in sibling):
                    continue
                cand = space.iterate(map_, z, -m)
                if space.distance(cand, c) >= 2.0 ** -t:
                    r_draw *= 0.5  # expansive inverse: shrink and retry
                    continue
                if first_capture(map_, cand, family, i, n, params.horizon):
                    y = cand
                    break
            if y is None:
                ok = False
                break
            witnesses.append(y)
        if ok:
            return BoundaryWitnessResult(
                True, i, m, n, tuple(witnesses), c, T, T
            )
        if len(witnesses) > best_found:
            best_found = len(witnesses)
            best_scale = n
    return BoundaryWitnessResult(
        False, i, m, best_scale, (), c, best_found, T
    )


# ---------------------------------------------------------------------------
# somewhere-dense collapse diagnostic


def collapse_diagnostic(
    family: TargetFamily, i: int, n: int, grid_eps: float
) -> float:
    """Fraction of grid points inside ball i at scale n that sibling balls
    (centers lying in that ball) also cover.

    Map-independent: this measures the geometry that forces a somewhere-
    dense family's first-capture sets to be negligible.
    """
    p_i = family.centers.point_of(i)
    rho_in = family.radius_at(i, n)
    kind = family.centers.space_kind
    cells = space.subdivisions_for(grid_eps)
    if kind == space.CIRCLE:
        # enumerate only grid indices within the ball's angular span
        lo = int(math.floor((p_i.angle - rho_in) * cells)) - 1
        hi = int(math.ceil((p_i.angle + rho_in) * cells)) + 1
        idx = np.arange(lo, hi + 1, dtype=np.int64) % cells
        grid = np.unique(idx).astype(np.float64) / cells
        d = np.abs(grid - p_i.angle)
        d = np.minimum(d, 1.0 - d)
        inside = grid[d < rho_in]
        if inside.size == 0:
            raise ResolutionError(
                f"no grid point of spacing 1/{cells} falls in the ball of "
                f"radius {rho_in}; decrease grid_eps"
            )
        siblings = [
            j for j in range(1, family.size + 1)
            if j != i
            and space.distance(p_i, family.centers.point_of(j)) < rho_in
        ]
        if not siblings:
            return 0.0
        covered = np.zeros(inside.shape, dtype=bool)
        for j in siblings:
            pj = family.centers.point_of(j)
            dj = np.abs(inside - pj.angle)
            dj = np.minimum(dj, 1.0 - dj)
            covered |= dj < family.radius_at(j, n)
        return float(covered.mean())
    # torus: product sub-grid over the ball's bounding square
    lo_x = int(math.floor((p_i.x - rho_in) * cells)) - 1
    hi_x = int(math.ceil((p_i.x + rho_in) * cells)) + 1
    lo_y = int(math.floor((p_i.y - rho_in) * cells)) - 1
    hi_y = int(math.ceil((p_i.y + rho_in) * cells)) + 1
    gx = (np.arange(lo_x, hi_x + 1, dtype=np.int64) % cells).astype(np.float64) / cells
    gy = (np.arange(lo_y, hi_y + 1, dtype=np.int64) % cells).astype(np.float64) / cells
    gx = np.unique(gx)
    gy = np.unique(gy)
    xs, ys = np.meshgrid(gx, gy, indexing="ij")
    dx = np.abs(xs - p_i.x)
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.abs(ys - p_i.y)
    dy = np.minimum(dy, 1.0 - dy)
    mask = np.maximum(dx, dy) < rho_in
    if not mask.any():
        raise ResolutionError(
            f"no grid point of spacing 1/{cells} falls in the ball of radius "
            f"{rho_in}; decrease grid_eps"
        )
    pts_x = xs[mask]
    pts_y = ys[mask]
    siblings = [
        j for j in range(1, family.size + 1)
        if j != i and space.distance(p_i, family.centers.point_of(j)) < rho_in
    ]
    if not siblings:
        return 0.0
    covered = np.zeros(pts_x.shape, dtype=bool)
    for j in siblings:
        pj = family.centers.point_of(j)
        djx = np.abs(pts_x - pj.x)
        djx = np.minimum(djx, 1.0 - djx)
        djy = np.abs(pts_y - pj.y)
        djy = np.minimum(djy, 1.0 - djy)
        covered |= np.maximum(djx, djy) < family.radius_at(j, n)
    return float(covered.mean())
