"""Independent reference implementations used by the tests.

Each oracle recomputes a quantity by brute force or with a different library
so that the package code is never checked against itself.
"""

from __future__ import annotations

import colorsys
import math
from collections import deque

import numpy as np

MARCH_STEP = 1e-4


def camera_ray(fx, fy, cx, cy, theta, u, v):
    """World ray (up, right, forward) through pixel (u, v) for a camera pitched by theta.

    Built from the camera's own axes instead of a rotation matrix: the optical
    axis tilts down by -theta, image right stays lateral, image down is the
    optical axis rotated a quarter turn towards the ground.
    """
    axis = np.array([math.sin(theta), 0.0, math.cos(theta)])
    right = np.array([0.0, 1.0, 0.0])
    down = np.array([-math.cos(theta), 0.0, math.sin(theta)])
    return axis + (u - cx) / fx * right + (v - cy) / fy * down


def march_to_ground(height, direction, step=MARCH_STEP, max_distance=60.0, block=200_000):
    """Walk from (height, 0, 0) along ``direction`` in fixed steps until x <= 0; return the distance."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    if d[0] >= 0:
        return math.inf
    start = 0
    while start * step < max_distance:
        k = np.arange(start, start + block)
        below = np.flatnonzero(height + k * step * d[0] <= 0.0)
        if len(below):
            return float(k[below[0]] * step)
        start += block
    return math.inf


def march_corridor(origin, direction, planes, step=MARCH_STEP, max_distance=30.0, block=100_000):
    """First corridor plane crossed when walking from ``origin``.

    ``planes`` maps a name to (axis, coordinate). Returns the name, or None
    when nothing is crossed within ``max_distance``, or "tie" when two planes
    are crossed in the same step.
    """
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    start = 0
    while start * step < max_distance:
        t = np.arange(start, start + block + 1) * step
        first = {}
        for name, (axis, coord) in planes.items():
            side = np.sign(o[axis] + t * d[axis] - coord)
            change = np.flatnonzero(side[1:] != side[0])
            if len(change):
                first[name] = change[0]
        if first:
            best = min(first.values())
            names = [n for n, k in first.items() if k == best]
            return names[0] if len(names) == 1 else "tie"
        start += block
    return None


def hsv_colorsys(rgb_u8):
    """Per-pixel HSV via the standard library (H in degrees)."""
    flat = np.asarray(rgb_u8, float).reshape(-1, 3) / 255.0
    out = np.array([colorsys.rgb_to_hsv(*px) for px in flat])
    out[:, 0] *= 360.0
    return out.reshape(np.shape(rgb_u8))


def naive_histograms(patch_u8, hue_bins=90, sat_bins=64, val_bins=36):
    """Loop-based histogram of a patch, one pixel at a time."""
    h = np.zeros(hue_bins)
    s = np.zeros(sat_bins)
    v = np.zeros(val_bins)
    for px in np.asarray(patch_u8).reshape(-1, 3):
        hh, ss, vv = colorsys.rgb_to_hsv(*(px / 255.0))
        h[min(int(hh * 360.0 / (360.0 / hue_bins)), hue_bins - 1)] += 1
        s[min(int(ss * sat_bins), sat_bins - 1)] += 1
        v[min(int(vv * val_bins), val_bins - 1)] += 1
    return np.concatenate([h / h.sum(), s / s.sum(), v / v.sum()])


def flood_fill_components(mask, value):
    """4-connected components of ``mask == value`` by breadth-first search; list of pixel sets."""
    h, w = mask.shape
    seen = np.zeros(mask.shape, bool)
    comps = []
    for r in range(h):
        for c in range(w):
            if mask[r, c] != value or seen[r, c]:
                continue
            comp = []
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                y, x = queue.popleft()
                comp.append((y, x))
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and mask[ny, nx] == value:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            comps.append(comp)
    return comps


def reference_largest_component(mask, skip, unknown):
    """Flood-fill version of the largest-component filter (first largest in scan order wins ties)."""
    out = mask.copy()
    for value in np.unique(mask):
        if value in skip or value == unknown:
            continue
        comps = flood_fill_components(mask, value)
        if len(comps) <= 1:
            continue
        keep = max(range(len(comps)), key=lambda i: (len(comps[i]), -i))
        for i, comp in enumerate(comps):
            if i != keep:
                for y, x in comp:
                    out[y, x] = unknown
    return out


def slab_hit(origin, direction, lo, hi):
    """Entry distance of a ray into an axis-aligned box (scalar slab test), or inf."""
    t0, t1 = -math.inf, math.inf
    for a in range(3):
        if direction[a] == 0.0:
            if not lo[a] <= origin[a] <= hi[a]:
                return math.inf
            continue
        ta = (lo[a] - origin[a]) / direction[a]
        tb = (hi[a] - origin[a]) / direction[a]
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    if t1 < max(t0, 0.0):
        return math.inf
    return t0 if t0 > 0 else math.inf
