"""Independent reference implementations used only by the tests.

Each one is written the slow, obvious way and shares no code with the
package, so agreement is evidence rather than tautology.
"""
from __future__ import annotations

import math

import numpy as np


def conv2d_direct(image: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Cross-correlation with TensorFlow-style SAME zero padding, by explicit loops.

    ``image`` is ``H x W x C``; ``kernel`` is ``KH x KW x C x O``.
    """
    h, w, c = image.shape
    kh, kw, _, o = kernel.shape
    oh, ow = -(-h // stride), -(-w // stride)
    pad_h = max((oh - 1) * stride + kh - h, 0)
    pad_w = max((ow - 1) * stride + kw - w, 0)
    top, left = pad_h // 2, pad_w // 2
    out = np.zeros((oh, ow, o))
    for i in range(oh):
        for j in range(ow):
            for a in range(kh):
                for b in range(kw):
                    y, x = i * stride + a - top, j * stride + b - left
                    if 0 <= y < h and 0 <= x < w:
                        out[i, j] += image[y, x] @ kernel[a, b]
    return out


def interp_two_point(ts, vs, q):
    """Linear interpolation by locating the bracketing pair explicitly."""
    for k in range(len(ts) - 1):
        if ts[k] <= q <= ts[k + 1]:
            f = (q - ts[k]) / (ts[k + 1] - ts[k])
            return vs[k] + f * (vs[k + 1] - vs[k])
    raise ValueError("outside range")


def nearest_resize(img: np.ndarray, th: int, tw: int) -> np.ndarray:
    h, w = img.shape[:2]
    out = np.empty((th, tw) + img.shape[2:], img.dtype)
    for i in range(th):
        for j in range(tw):
            out[i, j] = img[int((i + 0.5) * h / th), int((j + 0.5) * w / tw)]
    return out


def lstm_cell_reference(y, h, c, wy, wh, b):
    """64-bit LSTM cell with gate order i, f, o, g."""
    z = y @ wy + h @ wh + b
    n = h.shape[-1]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    i, f, o, g = sig(z[..., :n]), sig(z[..., n:2 * n]), sig(z[..., 2 * n:3 * n]), np.tanh(z[..., 3 * n:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def softmax_reference(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def blur_direct(image: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """2-D Gaussian blur with clamped borders by summing the full 2-D kernel."""
    x = np.arange(-radius, radius + 1)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = image.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(-radius, radius + 1):
                for b in range(-radius, radius + 1):
                    y = min(max(i + a, 0), h - 1)
                    xx = min(max(j + b, 0), w - 1)
                    acc += k2[a + radius, b + radius] * image[y, xx]
            out[i, j] = acc
    return out


def dbscan_reference(points, eps: float, min_pts: int) -> np.ndarray:
    """Brute-force DBSCAN via connected components of the core-point graph.

    Clusters are numbered by their smallest core index; a border point takes
    the smallest cluster id among its core neighbours.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    adj = d2 <= eps * eps
    core = adj.sum(1) >= min_pts
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        if core[i]:
            for j in range(i + 1, n):
                if core[j] and adj[i, j]:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    first: dict[int, int] = {}
    for k in range(n):
        if core[k]:
            first.setdefault(find(k), k)          # smallest core index per component
    order = {root: cid for cid, (root, _) in enumerate(sorted(first.items(), key=lambda kv: kv[1]))}
    labels = np.full(n, -1)
    for i in range(n):
        if core[i]:
            labels[i] = order[find(i)]
    for i in range(n):
        if not core[i]:
            ids = [labels[j] for j in range(n) if core[j] and adj[i, j]]
            if ids:
                labels[i] = min(ids)
    return labels


def hull_vertices_bruteforce(points) -> set[tuple[float, float]]:
    """O(n^3) hull: ``(p, q)`` is a hull edge when every other point lies to its left
    or strictly between ``p`` and ``q``; the vertices are the edge endpoints."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) < 3:
        return set(pts)
    out = set()
    for p in pts:
        for q in pts:
            if p == q:
                continue
            ok = True
            for r in pts:
                if r == p or r == q:
                    continue
                cr = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
                if cr < 0:
                    ok = False
                    break
                if cr == 0:
                    dot = (r[0] - p[0]) * (q[0] - p[0]) + (r[1] - p[1]) * (q[1] - p[1])
                    if not 0 < dot < (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2:
                        ok = False
                        break
            if ok:
                out.update((p, q))
    return out


def ray_cast_inside(poly, x: float, y: float) -> bool:
    """Even-odd ray casting plus an explicit on-boundary test."""
    n = len(poly)
    for k in range(n):
        (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % n]
        cr = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cr) <= 1e-9 and min(x1, x2) - 1e-9 <= x <= max(x1, x2) + 1e-9 \
                and min(y1, y2) - 1e-9 <= y <= max(y1, y2) + 1e-9:
            return True
    inside = False
    for k in range(n):
        (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def bilinear_reference(patch: np.ndarray, size: int) -> np.ndarray:
    """Corner-aligned bilinear resize evaluated one output pixel at a time."""
    h, w = patch.shape[:2]
    out = np.zeros((size, size) + patch.shape[2:])
    for i in range(size):
        for j in range(size):
            y = i * (h - 1) / (size - 1) if h > 1 else 0.0
            x = j * (w - 1) / (size - 1) if w > 1 else 0.0
            y0, x0 = math.floor(y), math.floor(x)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = ((1 - fy) * (1 - fx) * patch[y0, x0] + (1 - fy) * fx * patch[y0, x1]
                         + fy * (1 - fx) * patch[y1, x0] + fy * fx * patch[y1, x1])
    return out
