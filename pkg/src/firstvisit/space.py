"""Concrete compact metric spaces and the homeomorphisms acting on them.

Two spaces are supported: the unit circle with coordinate in [0,1) and the
flat 2-torus with coordinates in [0,1)^2.  The circle metric is the usual
wraparound distance; the torus metric is the maximum of the per-coordinate
circle distances, so balls are squares and membership tests reduce to two
scalar comparisons.

All coordinates are wrap-normalized into [0,1); values within 1e-15 of 1.0
collapse to 0.0 so that arithmetic noise at the seam cannot produce a
coordinate equal to 1.  Points, maps, and balls are immutable; every
operation here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import kernels
from .errors import UsageError

# Reciprocal golden ratio: strongly irrational, so rational approximations
# (and hence premature orbit near-returns) converge as slowly as possible.
DEFAULT_ROTATION_ANGLE = 0.618033988749895

_WRAP_HI = 1.0 - 1e-15

CIRCLE = "circle"
TORUS = "torus"


def wrap(y: float) -> float:
    """Normalize a coordinate into [0,1), collapsing the seam band to 0."""
    y = y % 1.0
    if y >= _WRAP_HI:
        y = 0.0
    return y


@dataclass(frozen=True)
class CirclePoint:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", wrap(self.angle))

    @property
    def kind(self) -> str:
        return CIRCLE

    @property
    def coords(self) -> tuple[float, ...]:
        return (self.angle,)


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", wrap(self.x))
        object.__setattr__(self, "y", wrap(self.y))

    @property
    def kind(self) -> str:
        return TORUS

    @property
    def coords(self) -> tuple[float, ...]:
        return (self.x, self.y)


SpacePoint = Union[CirclePoint, TorusPoint]


def make_point(kind: str, coords) -> SpacePoint:
    if kind == CIRCLE:
        (a,) = coords
        return CirclePoint(a)
    if kind == TORUS:
        x, y = coords
        return TorusPoint(x, y)
    raise UsageError(f"unknown space kind {kind!r}")


@dataclass(frozen=True)
class RotationMap:
    """Rigid circle rotation x -> x + alpha (mod 1)."""

    alpha: float = DEFAULT_ROTATION_ANGLE

    @property
    def space_kind(self) -> str:
        return CIRCLE


@dataclass(frozen=True)
class ToralAutomorphismMap:
    """Invertible integer-matrix automorphism of the 2-torus."""

    matrix: tuple[tuple[int, int], tuple[int, int]] = ((2, 1), (1, 1))

    def __post_init__(self):
        (a, b), (c, d) = self.matrix
        if any(int(v) != v for v in (a, b, c, d)):
            raise UsageError("toral automorphism matrix must be integer")
        det = a * d - b * c
        if det not in (1, -1):
            raise UsageError(f"toral automorphism matrix must have |det| = 1, got {det}")
        object.__setattr__(
            self, "matrix", ((int(a), int(b)), (int(c), int(d)))
        )

    @property
    def determinant(self) -> int:
        (a, b), (c, d) = self.matrix
        return a * d - b * c

    @property
    def inverse_matrix(self) -> tuple[tuple[int, int], tuple[int, int]]:
        (a, b), (c, d) = self.matrix
        det = a * d - b * c
        return ((d * det, -b * det), (-c * det, a * det))

    @property
    def space_kind(self) -> str:
        return TORUS


DynamicalMap = Union[RotationMap, ToralAutomorphismMap]


@dataclass(frozen=True)
class Ball:
    """Open metric ball; membership uses strict inequality."""

    center: SpacePoint
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise UsageError(f"ball radius must be positive, got {self.radius}")

    def contains(self, q: SpacePoint) -> bool:
        return distance(self.center, q) < self.radius


def circle_dist(a: float, b: float) -> float:
    d = abs(a - b)
    if d > 0.5:
        d = 1.0 - d
    return d


def distance(a: SpacePoint, b: SpacePoint) -> float:
    """Metric distance between two points of the same space."""
    if isinstance(a, CirclePoint) and isinstance(b, CirclePoint):
        return circle_dist(a.angle, b.angle)
    if isinstance(a, TorusPoint) and isinstance(b, TorusPoint):
        return max(circle_dist(a.x, b.x), circle_dist(a.y, b.y))
    raise UsageError(f"cannot measure distance between {a!r} and {b!r}")


def _check_compatible(map_: DynamicalMap, p: SpacePoint) -> None:
    if isinstance(map_, RotationMap) and isinstance(p, CirclePoint):
        return
    if isinstance(map_, ToralAutomorphismMap) and isinstance(p, TorusPoint):
        return
    raise UsageError(f"map {map_!r} is not defined on point {p!r}")


def apply_map(map_: DynamicalMap, p: SpacePoint, direction: str = "forward") -> SpacePoint:
    """One application of the map or its inverse."""
    _check_compatible(map_, p)
    if direction not in ("forward", "inverse"):
        raise UsageError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if isinstance(map_, RotationMap):
        if direction == "forward":
            return CirclePoint(p.angle + map_.alpha)
        return CirclePoint(p.angle - map_.alpha)
    m = map_.matrix if direction == "forward" else map_.inverse_matrix
    (a, b), (c, d) = m
    return TorusPoint(a * p.x + b * p.y, c * p.x + d * p.y)


def iterate(map_: DynamicalMap, p: SpacePoint, k: int) -> SpacePoint:
    """k-fold application; negative k iterates the inverse."""
    direction = "forward" if k >= 0 else "inverse"
    for _ in range(abs(int(k))):
        p = apply_map(map_, p, direction)
    return p


def subdivisions_for(eps: float) -> int:
    """Per-coordinate grid count for an eps-net: ceil(1/eps) cells."""
    if not 0.0 < eps < 1.0:
        raise UsageError(f"epsilon must lie in (0, 1), got {eps}")
    return int(math.ceil(1.0 / eps - 1e-12))


def epsilon_net(kind: str, eps: float) -> list[SpacePoint]:
    """Regular grid with spacing <= eps covering the space, in a fixed order."""
    n = subdivisions_for(eps)
    if kind == CIRCLE:
        return [CirclePoint(j / n) for j in range(n)]
    if kind == TORUS:
        return [TorusPoint(i / n, j / n) for i in range(n) for j in range(n)]
    raise UsageError(f"unknown space kind {kind!r}")


def epsilon_net_array(kind: str, eps: float) -> np.ndarray:
    """Same grid as :func:`epsilon_net` but as a coordinate array."""
    n = subdivisions_for(eps)
    line = np.arange(n, dtype=np.float64) / n
    if kind == CIRCLE:
        return line
    if kind == TORUS:
        xs = np.repeat(line, n)
        ys = np.tile(line, n)
        return np.column_stack((xs, ys))
    raise UsageError(f"unknown space kind {kind!r}")


def points_array(points) -> np.ndarray:
    """Coordinates of same-kind points as an (n,) or (n, 2) float array."""
    pts = list(points)
    if not pts:
        return np.empty(0, dtype=np.float64)
    kind = pts[0].kind
    if any(p.kind != kind for p in pts):
        raise UsageError("points of mixed space kinds")
    if kind == CIRCLE:
        return np.array([p.angle for p in pts], dtype=np.float64)
    return np.array([[p.x, p.y] for p in pts], dtype=np.float64)


def pairwise_distance_matrix(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """All circle/torus distances between coordinate arrays a and b."""
    if kind == CIRCLE:
        d = np.abs(a[:, None] - b[None, :])
        return np.minimum(d, 1.0 - d)
    dx = np.abs(a[:, None, 0] - b[None, :, 0])
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.abs(a[:, None, 1] - b[None, :, 1])
    dy = np.minimum(dy, 1.0 - dy)
    return np.maximum(dx, dy)


def hausdorff_distance(a_points, b_points) -> float:
    """Max over the two directed sup-inf distances between finite sets."""
    a = list(a_points)
    b = list(b_points)
    if not a or not b:
        raise UsageError("Hausdorff distance requires nonempty point sets")
    if a[0].kind != b[0].kind:
        raise UsageError("Hausdorff distance requires same-kind point sets")
    kind = a[0].kind
    mat = pairwise_distance_matrix(points_array(a), points_array(b), kind)
    return float(max(mat.min(axis=1).max(), mat.min(axis=0).max()))


def backward_density_score(
    map_: DynamicalMap, p: SpacePoint, K: int, eps: float
) -> float:
    """Fraction of eps-net cells visited by the backward orbit f^{-k}(p), k=1..K.

    A score of 1.0 is the finite surrogate for a dense backward orbit; the
    anchor sampler uses it to screen cluster candidates.
    """
    _check_compatible(map_, p)
    if K < 0:
        raise UsageError(f"horizon must be nonnegative, got {K}")
    n = subdivisions_for(eps)
    if K == 0:
        return 0.0
    if isinstance(map_, RotationMap):
        count = kernels.rotation_backward_cells(p.angle, map_.alpha, K, n)
        return count / n
    (i00, i01), (i10, i11) = map_.inverse_matrix
    count = kernels.torus_backward_cells(
        p.x, p.y, float(i00), float(i01), float(i10), float(i11), K, n
    )
    return count / (n * n)


def orbit_segment_array(map_: DynamicalMap, p: SpacePoint, window: int) -> np.ndarray:
    """Coordinates of f^k(p) for k = -window..window, stepwise both ways."""
    _check_compatible(map_, p)
    if isinstance(map_, RotationMap):
        return kernels.rotation_orbit_segment(p.angle, map_.alpha, window)
    (m00, m01), (m10, m11) = map_.matrix
    (i00, i01), (i10, i11) = map_.inverse_matrix
    return kernels.torus_orbit_segment(
        p.x, p.y,
        float(m00), float(m01), float(m10), float(m11),
        float(i00), float(i01), float(i10), float(i11),
        window,
    )
