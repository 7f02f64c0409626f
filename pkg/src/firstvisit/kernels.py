"""Compiled orbit sweeps.

Every long orbit in the package goes through one of these kernels so that
hit times, winner traces, and witness checks all see the same step-by-step
arithmetic: positions advance by repeated addition (rotation) or repeated
matrix application (torus), wrapped into [0,1) after every step.  Values
that land within 1e-15 of 1.0 are nudged to 0.0, matching
:func:`firstvisit.space.wrap`.

Hit sweeps fill, for each tracked center i and scale n, the smallest step
k in 0..K whose orbit point lies strictly inside the ball of radius
radii[i, n] around the center (-1 when the horizon is exhausted).  Radii
rows must be strictly decreasing, so the per-center scale pointer only
moves forward and each step costs one distance evaluation per center.

Batch variants parallelize over sample points; every sample is computed
independently, so results are bit-identical for any worker count.
"""

import numpy as np
from numba import njit, prange

_WRAP_HI = 1.0 - 1e-15


@njit(cache=True)
def _wrap(y):
    y = y % 1.0
    if y >= _WRAP_HI:
        y = 0.0
    return y


@njit(cache=True)
def _circle_dist(a, b):
    d = abs(a - b)
    if d > 0.5:
        d = 1.0 - d
    return d


@njit(cache=True)
def rotation_hit_sweep(x0, alpha, centers, radii, K):
    """Hit-time matrix (I, N) for one circle sample; -1 marks no hit by K."""
    I, N = radii.shape
    hits = np.full((I, N), -1, dtype=np.int64)
    nxt = np.zeros(I, dtype=np.int64)
    remaining = I * N
    x = x0
    k = 0
    while True:
        for i in range(I):
            ni = nxt[i]
            if ni < N:
                d = _circle_dist(x, centers[i])
                while ni < N and d < radii[i, ni]:
                    hits[i, ni] = k
                    ni += 1
                    remaining -= 1
                nxt[i] = ni
        if remaining == 0 or k == K:
            break
        x = _wrap(x + alpha)
        k += 1
    return hits


@njit(cache=True)
def torus_hit_sweep(x0, y0, m00, m01, m10, m11, centers, radii, K):
    """Hit-time matrix (I, N) for one torus sample under an integer matrix."""
    I, N = radii.shape
    hits = np.full((I, N), -1, dtype=np.int64)
    nxt = np.zeros(I, dtype=np.int64)
    remaining = I * N
    x = x0
    y = y0
    k = 0
    while True:
        for i in range(I):
            ni = nxt[i]
            if ni < N:
                dx = _circle_dist(x, centers[i, 0])
                dy = _circle_dist(y, centers[i, 1])
                d = dx if dx > dy else dy
                while ni < N and d < radii[i, ni]:
                    hits[i, ni] = k
                    ni += 1
                    remaining -= 1
                nxt[i] = ni
        if remaining == 0 or k == K:
            break
        xn = _wrap(m00 * x + m01 * y)
        yn = _wrap(m10 * x + m11 * y)
        x = xn
        y = yn
        k += 1
    return hits


@njit(cache=True, parallel=True)
def rotation_hit_sweep_batch(xs, alpha, centers, radii, K):
    S = xs.shape[0]
    I, N = radii.shape
    out = np.full((S, I, N), -1, dtype=np.int64)
    for s in prange(S):
        out[s] = rotation_hit_sweep(xs[s], alpha, centers, radii, K)
    return out


@njit(cache=True, parallel=True)
def torus_hit_sweep_batch(xys, m00, m01, m10, m11, centers, radii, K):
    S = xys.shape[0]
    I, N = radii.shape
    out = np.full((S, I, N), -1, dtype=np.int64)
    for s in prange(S):
        out[s] = torus_hit_sweep(
            xys[s, 0], xys[s, 1], m00, m01, m10, m11, centers, radii, K
        )
    return out


@njit(cache=True)
def rotation_orbit_segment(x0, alpha, window):
    """Positions f^k(x0) for k = -window..window, stepwise in both directions."""
    out = np.empty(2 * window + 1, dtype=np.float64)
    out[window] = x0
    x = x0
    for k in range(1, window + 1):
        x = _wrap(x + alpha)
        out[window + k] = x
    x = x0
    for k in range(1, window + 1):
        x = _wrap(x - alpha)
        out[window - k] = x
    return out


@njit(cache=True)
def torus_orbit_segment(x0, y0, m00, m01, m10, m11, i00, i01, i10, i11, window):
    """Torus orbit positions for k = -window..window as a (2w+1, 2) array."""
    out = np.empty((2 * window + 1, 2), dtype=np.float64)
    out[window, 0] = x0
    out[window, 1] = y0
    x = x0
    y = y0
    for k in range(1, window + 1):
        xn = _wrap(m00 * x + m01 * y)
        yn = _wrap(m10 * x + m11 * y)
        x = xn
        y = yn
        out[window + k, 0] = x
        out[window + k, 1] = y
    x = x0
    y = y0
    for k in range(1, window + 1):
        xn = _wrap(i00 * x + i01 * y)
        yn = _wrap(i10 * x + i11 * y)
        x = xn
        y = yn
        out[window - k, 0] = x
        out[window - k, 1] = y
    return out


@njit(cache=True)
def rotation_backward_cells(x0, alpha, K, cells):
    """Count distinct 1/cells-width bins visited by f^{-k}(x0), k = 1..K."""
    visited = np.zeros(cells, dtype=np.bool_)
    x = x0
    count = 0
    for _ in range(K):
        x = _wrap(x - alpha)
        c = int(x * cells)
        if c >= cells:
            c = cells - 1
        if not visited[c]:
            visited[c] = True
            count += 1
    return count


@njit(cache=True)
def torus_backward_cells(x0, y0, i00, i01, i10, i11, K, cells):
    """Count distinct grid cells (cells x cells) visited by the backward orbit."""
    visited = np.zeros(cells * cells, dtype=np.bool_)
    x = x0
    y = y0
    count = 0
    for _ in range(K):
        xn = _wrap(i00 * x + i01 * y)
        yn = _wrap(i10 * x + i11 * y)
        x = xn
        y = yn
        cx = int(x * cells)
        if cx >= cells:
            cx = cells - 1
        cy = int(y * cells)
        if cy >= cells:
            cy = cells - 1
        c = cx * cells + cy
        if not visited[c]:
            visited[c] = True
            count += 1
    return count


@njit(cache=True)
def rotation_first_capture(x0, alpha, centers, radii_n, target, K):
    """First-entry race from step 1: 1 if the target ball is entered strictly
    before every other ball within K steps, else 0.

    radii_n holds one radius per center (a single scale).  The race is
    decided at the first step whose position lies in any ball: a unique hit
    of the target wins; a competitor hit or a simultaneous hit loses.
    """
    I = centers.shape[0]
    x = x0
    for _ in range(K):
        x = _wrap(x + alpha)
        hit_target = False
        hit_other = False
        for i in range(I):
            if _circle_dist(x, centers[i]) < radii_n[i]:
                if i == target:
                    hit_target = True
                else:
                    hit_other = True
        if hit_other:
            return 0
        if hit_target:
            return 1
    return 0


@njit(cache=True)
def torus_first_capture(x0, y0, m00, m01, m10, m11, centers, radii_n, target, K):
    I = centers.shape[0]
    x = x0
    y = y0
    for _ in range(K):
        xn = _wrap(m00 * x + m01 * y)
        yn = _wrap(m10 * x + m11 * y)
        x = xn
        y = yn
        hit_target = False
        hit_other = False
        for i in range(I):
            dx = _circle_dist(x, centers[i, 0])
            dy = _circle_dist(y, centers[i, 1])
            d = dx if dx > dy else dy
            if d < radii_n[i]:
                if i == target:
                    hit_target = True
                else:
                    hit_other = True
        if hit_other:
            return 0
        if hit_target:
            return 1
    return 0


@njit(cache=True, parallel=True)
def rotation_first_capture_batch(xs, alpha, centers, radii_n, target, K):
    S = xs.shape[0]
    out = np.zeros(S, dtype=np.int64)
    for s in prange(S):
        out[s] = rotation_first_capture(xs[s], alpha, centers, radii_n, target, K)
    return out


@njit(cache=True, parallel=True)
def torus_first_capture_batch(xys, m00, m01, m10, m11, centers, radii_n, target, K):
    S = xys.shape[0]
    out = np.zeros(S, dtype=np.int64)
    for s in prange(S):
        out[s] = torus_first_capture(
            xys[s, 0], xys[s, 1], m00, m01, m10, m11, centers, radii_n, target, K
        )
    return out
