"""Convex hulls, degenerate-hull dilation and polygon masking.

Points are ``(x, y)`` with ``x`` the pixel column and ``y`` the row; pixel
``(r, c)`` sits at ``(c, r)``. Hulls are returned counter-clockwise in these
coordinates with collinear points dropped.
"""
from __future__ import annotations

import numpy as np

DILATION_PX = 2.0


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull; fewer than three vertices means the input is degenerate."""
    pts = sorted({(float(x), float(y)) for x, y in np.asarray(points, dtype=np.float64).reshape(-1, 2)})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.asarray(hull, dtype=np.float64)


def octagon(center, radius: float = DILATION_PX) -> np.ndarray:
    ang = np.arange(8) * (np.pi / 4)
    return np.asarray(center, dtype=np.float64) + radius * np.column_stack([np.cos(ang), np.sin(ang)])


def frame_hull(points, radius: float = DILATION_PX) -> np.ndarray:
    """Hull of ``points``; a point or segment is first dilated by ``radius`` into an octagon."""
    hull = convex_hull(points)
    if len(hull) >= 3:
        return hull
    return convex_hull(np.concatenate([octagon(p, radius) for p in hull]))


def points_in_polygon(polygon, xs, ys, tol: float = 1e-9) -> np.ndarray:
    """Membership (inside or on the boundary) of points in a convex CCW polygon."""
    poly = np.asarray(polygon, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.ones(np.broadcast(xs, ys).shape, dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        inside &= (b[0] - a[0]) * (ys - a[1]) - (b[1] - a[1]) * (xs - a[0]) >= -tol
    return inside


def hull_mask(polygon, shape: tuple[int, int]) -> np.ndarray:
    """Boolean ``H x W`` mask of pixels inside or on ``polygon``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return points_in_polygon(polygon, xs, ys)


def mask_blob(frame: np.ndarray, polygon) -> np.ndarray:
    """Copy of ``frame`` with every pixel inside or on ``polygon`` zeroed in all channels."""
    out = np.array(frame, copy=True)
    out[hull_mask(polygon, out.shape[:2])] = 0
    return out
