"""Filtered candidate sampling for cluster constructions.

Cluster constructors need center candidates whose backward orbit sweeps the
whole space and whose full orbit keeps clear of every previously accepted
center's orbit.  Neither property is decidable at desk scale, so the anchor
source screens candidates with two finite surrogates:

* backward-density: the backward orbit over ``density_horizon`` steps must
  visit at least ``density_threshold`` of the ``density_eps``-net cells;
* orbit separation: the orbit segment over ``|k| <= orbit_window`` must stay
  at least ``orbit_gap`` away from all previously accepted orbit segments.

Accepted orbits accumulate in a store shared across an entire construction,
so every pair of accepted centers is mutually separated.  Draws are driven
by a seeded generator; child sources (one per cluster) derive their seed as
``seed ^ cluster_index`` while sharing the store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import space
from .errors import ConstructionError


@dataclass(frozen=True)
class AnchorFilters:
    density_threshold: float = 0.99
    density_horizon: int = 100_000
    density_eps: float = 0.01
    orbit_window: int = 1000
    orbit_gap: float = 1e-9
    max_draws: int = 256


class _CircleOrbitStore:
    def __init__(self):
        self._sorted = np.empty(0, dtype=np.float64)

    def add(self, positions: np.ndarray) -> None:
        self._sorted = np.sort(np.concatenate((self._sorted, positions)))

    def too_close(self, positions: np.ndarray, gap: float) -> bool:
        store = self._sorted
        if store.size == 0:
            return False
        idx = np.searchsorted(store, positions)
        # neighbors on both sides, with circular wrap at the array ends
        left = store[(idx - 1) % store.size]
        right = store[idx % store.size]
        for nb in (left, right):
            d = np.abs(positions - nb)
            d = np.minimum(d, 1.0 - d)
            if np.any(d < gap):
                return True
        return False


class _TorusOrbitStore:
    _BUCKETS = 1000  # bucket width 1e-3 >> any sensible orbit_gap

    def __init__(self):
        self._cells: dict[tuple[int, int], list[tuple[float, float]]] = {}

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        n = self._BUCKETS
        return (min(int(x * n), n - 1), min(int(y * n), n - 1))

    def add(self, positions: np.ndarray) -> None:
        for x, y in positions:
            self._cells.setdefault(self._cell(x, y), []).append((x, y))

    def too_close(self, positions: np.ndarray, gap: float) -> bool:
        n = self._BUCKETS
        for x, y in positions:
            cx, cy = self._cell(x, y)
            for ox in (-1, 0, 1):
                for oy in (-1, 0, 1):
                    cell = ((cx + ox) % n, (cy + oy) % n)
                    for px, py in self._cells.get(cell, ()):
                        dx = abs(x - px)
                        if dx > 0.5:
                            dx = 1.0 - dx
                        dy = abs(y - py)
                        if dy > 0.5:
                            dy = 1.0 - dy
                        if max(dx, dy) < gap:
                            return True
        return False


class AnchorSource:
    """Seeded sampler that only yields density- and separation-screened points."""

    def __init__(self, map_: space.DynamicalMap, seed: int,
                 filters: AnchorFilters | None = None, _store=None):
        self.map = map_
        self.seed = int(seed)
        self.filters = filters or AnchorFilters()
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        if _store is None:
            _store = (_CircleOrbitStore() if map_.space_kind == space.CIRCLE
                      else _TorusOrbitStore())
        self._store = _store

    def child(self, index: int) -> "AnchorSource":
        """Per-cluster source: fresh seed, shared orbit store."""
        return AnchorSource(self.map, self.seed ^ int(index), self.filters,
                            _store=self._store)

    def register(self, p: space.SpacePoint) -> None:
        """Record an externally chosen point's orbit without screening it."""
        seg = space.orbit_segment_array(self.map, p, self.filters.orbit_window)
        self._store.add(seg.reshape(-1) if seg.ndim == 1 else seg)

    def draw(self, region_sampler, description: str) -> space.SpacePoint:
        """Return the first screened candidate produced by region_sampler."""
        f = self.filters
        for _ in range(f.max_draws):
            candidate = region_sampler(self.rng)
            score = space.backward_density_score(
                self.map, candidate, f.density_horizon, f.density_eps
            )
            if score < f.density_threshold:
                continue
            seg = space.orbit_segment_array(self.map, candidate, f.orbit_window)
            flat = seg.reshape(-1) if seg.ndim == 1 else seg
            if self._store.too_close(flat, f.orbit_gap):
                continue
            self._store.add(flat)
            return candidate
        raise ConstructionError(
            f"no admissible anchor point in {description} "
            f"after {f.max_draws} draws"
        )
