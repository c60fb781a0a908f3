"""Heat-map overlays for attention maps and refined (causal-only) maps."""
from __future__ import annotations

import numpy as np

from .saliency.geometry import hull_mask

RED = np.array([255.0, 0.0, 0.0])
OUTLINE = np.array([0, 255, 0], dtype=np.uint8)


def normalise_map(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    top = m.max() if m.size else 0.0
    return m / top if top > 0 else np.zeros_like(m)


def render_overlay(frame: np.ndarray, attention_map: np.ndarray, causal_hulls=None,
                   opacity: float = 0.6) -> np.ndarray:
    """Blend the per-frame normalised map over ``frame`` towards red.

    A pixel with normalised weight ``w`` becomes
    ``(1 - opacity * w) * frame + opacity * w * red``. With ``causal_hulls``
    the map is kept only inside those hulls and each hull's outline is drawn.
    """
    frame = np.asarray(frame)
    if frame.shape[:2] != np.asarray(attention_map).shape:
        raise ValueError(f"map {np.asarray(attention_map).shape} and frame {frame.shape[:2]} differ in extent")
    w = normalise_map(attention_map)
    if causal_hulls is not None:
        keep = np.zeros(w.shape, dtype=bool)
        for hull in causal_hulls:
            keep |= hull_mask(hull, w.shape)
        w = np.where(keep, w, 0.0)
    a = (opacity * w)[..., None]
    out = frame.astype(np.float64) * (1.0 - a) + RED * a
    out = np.where(a > 0, np.clip(np.rint(out), 0, 255), frame).astype(np.uint8)
    for hull in causal_hulls or ():
        draw_polygon(out, hull)
    return out


def draw_polygon(image: np.ndarray, polygon, color=OUTLINE) -> None:
    """Draw a closed polyline in place, one pixel wide."""
    poly = np.asarray(polygon, dtype=np.float64)
    h, w = image.shape[:2]
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        n = int(np.ceil(np.abs(b - a).max())) + 1
        xs = np.rint(np.linspace(a[0], b[0], n)).astype(int)
        ys = np.rint(np.linspace(a[1], b[1], n)).astype(int)
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        image[ys[ok], xs[ok]] = color
