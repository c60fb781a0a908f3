"""Telemetry and frame preprocessing.

Covers interpolation of telemetry to frame timestamps, single exponential
smoothing, the Ackermann relation between steering angle and inverse turning
radius, crop/resize to the network's input size, HSV normalization, and
exclusion of frames where the vehicle is stopped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

FRAME_SIZE = (80, 160)
STOP_SPEED_MPS = 1.0


@dataclass(frozen=True)
class TelemetrySample:
    timestamp: float
    steering_deg: float
    velocity_mps: float


@dataclass(frozen=True)
class VehicleParams:
    """Ackermann constants: steering ratio, slip coefficient (s^2/m^2), wheelbase (m)."""

    k_s: float = 16.0
    k_slip: float = 0.004
    d_w: float = 2.7

    def __post_init__(self):
        if self.d_w <= 0 or self.k_s <= 0 or self.k_slip < 0:
            raise ValueError(f"invalid vehicle parameters: {self}")


@dataclass(frozen=True)
class SmoothingConfig:
    alpha_s: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.alpha_s <= 1.0:
            raise ValueError(f"smoothing factor must lie in [0, 1], got {self.alpha_s}")


@dataclass
class ProcessedFrame:
    pixels: np.ndarray  # H x W x 3 float32 HSV in [0, 1]
    timestamp: float
    target_u: float
    velocity: float


def interpolate_telemetry(samples: Sequence[TelemetrySample],
                          query_times: Sequence[float]) -> list[TelemetrySample]:
    """Linearly interpolate steering and velocity at ``query_times``.

    Queries outside the sampled time range are rejected; there is no
    extrapolation.
    """
    table = np.array([[s.timestamp, s.steering_deg, s.velocity_mps] for s in samples], dtype=np.float64)
    out = interpolate_table(table.reshape(-1, 3), query_times)
    return [TelemetrySample(float(a), float(b), float(c)) for a, b, c in out]


def interpolate_table(table: np.ndarray, query_times) -> np.ndarray:
    """Array form of :func:`interpolate_telemetry` over ``M x 3`` rows."""
    if len(table) < 2:
        raise ValueError("need at least two telemetry samples to interpolate")
    t = table[:, 0]
    if np.any(np.diff(t) <= 0):
        raise ValueError("telemetry timestamps must be strictly increasing")
    q = np.asarray(query_times, dtype=np.float64)
    if q.size and (q.min() < t[0] or q.max() > t[-1]):
        raise ValueError(
            f"query times [{q.min()}, {q.max()}] fall outside telemetry range [{t[0]}, {t[-1]}]"
        )
    return np.column_stack([q, np.interp(q, t, table[:, 1]), np.interp(q, t, table[:, 2])])


def smooth_series(values: Sequence[float], config: SmoothingConfig | float = SmoothingConfig()) -> np.ndarray:
    """Single exponential smoothing, initialised at the first raw value."""
    alpha = config.alpha_s if isinstance(config, SmoothingConfig) else float(config)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"smoothing factor must lie in [0, 1], got {alpha}")
    y = np.asarray(values, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot smooth an empty series")
    out = np.empty_like(y)
    out[0] = y[0]
    for i in range(1, y.size):
        out[i] = alpha * y[i] + (1.0 - alpha) * out[i - 1]
    return out


def theta_from_u(u, v, params: VehicleParams):
    """Steering angle (degrees) from inverse turning radius (1/m) and speed (m/s)."""
    return np.asarray(u) * params.d_w * params.k_s * (1.0 + params.k_slip * np.asarray(v) ** 2)


def u_from_theta(theta, v, params: VehicleParams):
    """Inverse of :func:`theta_from_u` at fixed speed."""
    return np.asarray(theta) / (params.d_w * params.k_s * (1.0 + params.k_slip * np.asarray(v) ** 2))


def _nearest_index(src: int, dst: int) -> np.ndarray:
    return np.floor((np.arange(dst) + 0.5) * (src / dst)).astype(np.intp)


def crop_resize(image: np.ndarray, size: tuple[int, int] = FRAME_SIZE) -> np.ndarray:
    """Center-crop to the target aspect ratio, then nearest-neighbour resize.

    Works for H x W and H x W x C arrays of any dtype (frames and masks).
    """
    img = np.asarray(image)
    th, tw = size
    h, w = img.shape[:2]
    if h < th or w < tw:
        raise ValueError(f"image {h}x{w} is smaller than the target {th}x{tw}")
    # height is cropped when too tall, width when too wide
    want_h = (w * th) // tw
    if h > want_h:
        top = (h - want_h) // 2
        img = img[top:top + want_h]
    elif h < want_h:
        want_w = (h * tw) // th
        left = (w - want_w) // 2
        img = img[:, left:left + want_w]
    h, w = img.shape[:2]
    rows = _nearest_index(h, th)
    cols = _nearest_index(w, tw)
    return img[rows][:, cols]


def hsv_normalize(image: np.ndarray) -> np.ndarray:
    """RGB bytes to HSV with every channel scaled to [0, 1] (hexcone model)."""
    rgb = np.asarray(image, dtype=np.float32) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    vmax = rgb.max(axis=-1)
    vmin = rgb.min(axis=-1)
    delta = vmax - vmin
    sat = np.where(vmax > 0, delta / np.where(vmax > 0, vmax, 1), 0.0)
    safe = np.where(delta > 0, delta, 1)
    hr = ((g - b) / safe) % 6.0
    hg = (b - r) / safe + 2.0
    hb = (r - g) / safe + 4.0
    hue = np.where(vmax == r, hr, np.where(vmax == g, hg, hb)) / 6.0
    hue = np.where(delta > 0, hue, 0.0)
    hue = np.where(hue >= 1.0, hue - 1.0, hue)
    return np.stack([hue, sat, vmax], axis=-1).astype(np.float32)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hsv_normalize`; returns RGB bytes."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] * 6.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h).astype(int) % 6
    f = h - np.floor(h)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros(hsv.shape, dtype=np.float64)
    for k, (a, b, c) in enumerate(choices):
        sel = i == k
        out[..., 0] = np.where(sel, a, out[..., 0])
        out[..., 1] = np.where(sel, b, out[..., 1])
        out[..., 2] = np.where(sel, c, out[..., 2])
    return np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)


def filter_stopped(frames: Sequence[ProcessedFrame], min_speed: float = STOP_SPEED_MPS) -> list[ProcessedFrame]:
    """Drop frames whose smoothed speed is below ``min_speed``; keeps order."""
    return [f for f in frames if f.velocity >= min_speed]
