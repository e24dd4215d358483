"""Numba loops for the signed-distance rasterizer.

Coordinates here are in pixels; pixel (r, c) is sampled at (c + 0.5, r + 0.5).

The unsigned distance to a polyline is the p-norm soft minimum
``(sum_k d_k**-P) ** (-1/P)`` of the per-edge distances, with P = 16.  It is
zero exactly on the polyline and never exceeds the true distance, but has no
gradient kink where the nearest edge switches.
"""
import math

import numpy as np
from numba import njit

SQUARINGS = 3
P = 2.0 ** (SQUARINGS + 1)
BLOCK = 8
# Signed distance assigned to saturated pixels; sigmoid(FAR / tau) is exactly 1.
FAR = 1e6


@njit(cache=True, nogil=True, inline="always")
def _edge_sq_distance(vx, vy, k, k2, px, py):
    ax = vx[k]
    ay = vy[k]
    dx = vx[k2] - ax
    dy = vy[k2] - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    ex = px - ax - t * dx
    ey = py - ay - t * dy
    return ex * ex + ey * ey, t


@njit(cache=True, nogil=True, inline="always")
def _winding(vx, vy, px, py):
    k_count = vx.shape[0]
    wn = 0
    for k in range(k_count):
        k2 = k + 1
        if k2 == k_count:
            k2 = 0
        ax = vx[k]
        ay = vy[k]
        cross = (vx[k2] - ax) * (py - ay) - (px - ax) * (vy[k2] - ay)
        if ay <= py:
            if vy[k2] > py and cross > 0.0:
                wn += 1
        elif vy[k2] <= py and cross < 0.0:
            wn -= 1
    return wn


@njit(cache=True, nogil=True)
def signed_distance_window(vx, vy, r0, r1, c0, c1, sd, skip):
    """Fill ``sd`` for the pixel window [r0, r1) x [c0, c1).

    ``sd`` is negative where the nonzero winding number is nonzero.  Blocks
    of BLOCK x BLOCK pixels whose every pixel is provably further than
    ``skip`` (in soft distance) from the polyline get ``+-FAR`` instead.
    """
    k_count = vx.shape[0]
    d2 = np.empty(k_count)
    # the soft distance is at least the true distance / k_count ** (1 / P)
    shrink = k_count ** (-1.0 / P)
    for br in range(r0, r1, BLOCK):
        rb = min(br + BLOCK, r1)
        for bc in range(c0, c1, BLOCK):
            cb = min(bc + BLOCK, c1)
            cy = 0.5 * (br + rb)
            cx = 0.5 * (bc + cb)
            best = np.inf
            for k in range(k_count):
                k2 = k + 1
                if k2 == k_count:
                    k2 = 0
                e2, _ = _edge_sq_distance(vx, vy, k, k2, cx, cy)
                if e2 < best:
                    best = e2
            half = 0.5 * math.sqrt((rb - br - 1) ** 2 + (cb - bc - 1) ** 2)
            if (math.sqrt(best) - half) * shrink > skip:
                val = -FAR if _winding(vx, vy, cx, cy) != 0 else FAR
                for r in range(br, rb):
                    for c in range(bc, cb):
                        sd[r - r0, c - c0] = val
                continue
            for r in range(br, rb):
                py = r + 0.5
                for c in range(bc, cb):
                    px = c + 0.5
                    best = np.inf
                    for k in range(k_count):
                        k2 = k + 1
                        if k2 == k_count:
                            k2 = 0
                        e2, _ = _edge_sq_distance(vx, vy, k, k2, px, py)
                        d2[k] = e2
                        if e2 < best:
                            best = e2
                    if best <= 0.0:
                        sd[r - r0, c - c0] = 0.0
                        continue
                    acc = 0.0
                    for k in range(k_count):
                        q = best / d2[k]
                        for _ in range(SQUARINGS):
                            q = q * q
                        acc += q
                    d = math.sqrt(best) * acc ** (-1.0 / P)
                    sd[r - r0, c - c0] = -d if _winding(vx, vy, px, py) != 0 else d


@njit(cache=True, nogil=True)
def signed_distance_backward(vx, vy, r0, c0, dsd, sd, gx, gy):
    """Accumulate d(loss)/d(vertex) into ``gx``/``gy`` given d(loss)/d(sd)."""
    k_count = vx.shape[0]
    h, w = dsd.shape
    for i in range(h):
        py = r0 + i + 0.5
        for j in range(w):
            g = dsd[i, j]
            if g == 0.0:
                continue
            s = sd[i, j]
            dist = abs(s)
            if dist < 1e-12:
                continue
            if s < 0.0:
                g = -g
            px = c0 + j + 0.5
            for k in range(k_count):
                k2 = k + 1
                if k2 == k_count:
                    k2 = 0
                e2, t = _edge_sq_distance(vx, vy, k, k2, px, py)
                ratio = dist * dist / e2
                if ratio < 0.05:
                    continue
                # d(soft)/d(d_k) = (soft / d_k) ** (P + 1); folding in the unit
                # normal's 1 / d_k leaves ratio ** (P / 2) * soft / d_k**2
                q = ratio
                for _ in range(SQUARINGS):
                    q = q * q
                f = g * q * dist / e2
                ex = px - vx[k] - t * (vx[k2] - vx[k])
                ey = py - vy[k] - t * (vy[k2] - vy[k])
                # d d_k / d q = -n with q = (1 - t) a + t b at the optimal t
                gx[k] -= f * ex * (1.0 - t)
                gy[k] -= f * ey * (1.0 - t)
                gx[k2] -= f * ex * t
                gy[k2] -= f * ey * t
