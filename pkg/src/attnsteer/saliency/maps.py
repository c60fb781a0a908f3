"""Attention maps, particle sampling and fixed-size saliency patches."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

UPSAMPLE = 8
SIGMA = 4.0
RADIUS = 8


def gaussian_kernel(sigma: float = SIGMA, radius: int = RADIUS) -> np.ndarray:
    """Sampled 1-D Gaussian on ``[-radius, radius]`` normalised to sum 1."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur(image: np.ndarray, sigma: float = SIGMA, radius: int = RADIUS) -> np.ndarray:
    """Separable Gaussian blur with clamped (edge-replicating) borders."""
    k = gaussian_kernel(sigma, radius)
    out = correlate1d(np.asarray(image, dtype=np.float64), k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def build_map(alpha, grid: tuple[int, int], factor: int = UPSAMPLE, sigma: float = SIGMA,
              radius: int = RADIUS) -> np.ndarray:
    """Attention weights over ``H' x W'`` cells -> blurred ``8H' x 8W'`` heat map.

    Each cell's weight is copied to its ``factor x factor`` block before
    blurring, so a map built from a normalised ``alpha`` has total mass
    ``factor**2`` (up to what the clamped border redistributes).
    """
    a = np.asarray(alpha, dtype=np.float64)
    h, w = grid
    if a.size != h * w:
        raise ValueError(f"attention has {a.size} weights but grid {h}x{w} has {h * w} cells")
    up = np.repeat(np.repeat(a.reshape(h, w), factor, axis=0), factor, axis=1)
    return blur(up, sigma, radius)


def build_maps(alphas, grid: tuple[int, int], **kw) -> np.ndarray:
    """Stack of maps for a ``T x L`` attention sequence."""
    return np.stack([build_map(a, grid, **kw) for a in np.asarray(alphas)])


def sample_particles(maps, n: int = 500, seed=0) -> np.ndarray:
    """Draw ``n`` pixels per map with probability proportional to map value.

    Returns an ``(T * n) x 3`` integer array of ``(x, y, t)`` with ``x`` the
    column, ``y`` the row and ``t`` the map's position in the sequence.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim == 2:
        maps = maps[None]
    if maps.shape[0] == 0:
        raise ValueError("need at least one map to sample from")
    if np.any(maps < 0):
        raise ValueError("attention maps must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    _, h, w = maps.shape
    out = []
    for t, m in enumerate(maps):
        total = m.sum()
        if not total > 0:
            raise ValueError(f"map {t} has no mass to sample from")
        flat = rng.choice(h * w, size=n, replace=True, p=(m / total).ravel())
        ys, xs = np.divmod(flat, w)
        out.append(np.column_stack([xs, ys, np.full(n, t)]))
    return np.concatenate(out).astype(np.int64)


def bounding_box(hull, shape: tuple[int, int]) -> tuple[int, int, int, int]:
    """Inclusive pixel box ``(x0, y0, x1, y1)`` around ``hull``, clipped to ``shape``."""
    v = np.asarray(hull, dtype=np.float64)
    h, w = shape
    x0 = int(np.clip(np.floor(v[:, 0].min()), 0, w - 1))
    x1 = int(np.clip(np.ceil(v[:, 0].max()), 0, w - 1))
    y0 = int(np.clip(np.floor(v[:, 1].min()), 0, h - 1))
    y1 = int(np.clip(np.ceil(v[:, 1].max()), 0, h - 1))
    return x0, y0, x1, y1


def resample_bilinear(patch: np.ndarray, size: int = 64) -> np.ndarray:
    """Resize ``h x w (x C)`` to ``size x size`` with corner-aligned bilinear sampling."""
    src = np.asarray(patch, dtype=np.float64)
    h, w = src.shape[:2]
    ys = np.linspace(0.0, h - 1, size) if h > 1 else np.zeros(size)
    xs = np.linspace(0.0, w - 1, size) if w > 1 else np.zeros(size)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if src.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def warp_saliency(frame: np.ndarray, hull, size: int = 64) -> np.ndarray:
    """Crop the hull's bounding box from ``frame`` and resample it to ``size x size``."""
    x0, y0, x1, y1 = bounding_box(hull, np.asarray(frame).shape[:2])
    return resample_bilinear(np.asarray(frame)[y0:y1 + 1, x0:x1 + 1], size)
