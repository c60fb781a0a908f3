"""Deterministic synthetic driving scenes with known causal regions.

A forward camera looks down a road whose two lane markings bend with the
vehicle's inverse turning radius ``u``. Bright rectangles drift through the
sky independently of ``u``; they are the planted spurious features. Every
random process draws from its own stream derived from the scene seed, so the
distractors are statistically independent of the curvature.

Lane geometry, for image row ``y`` below the horizon with
``s = (H - 1 - y) / (H - 1 - horizon)``::

    center(y) = W/2 + offset * (1 - s) + bend_gain * u * s**2
    markings at center(y) +- half_width * (1 - 0.8 s)

so ``u`` can be read back exactly (up to pixel rounding) by a least-squares
fit of the marking centers, see :func:`oracle_controller`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .preprocess import VehicleParams, theta_from_u

# independent rng streams
_CURVATURE, _OFFSET, _DISTRACTOR, _VELOCITY, _NOISE, _TEXTURE = range(6)


@dataclass(frozen=True)
class SceneParams:
    seed: int = 0
    length: int = 2000                 # frames
    fps: float = 10.0
    telemetry_rate: float = 20.0       # Hz
    frame_offset: float = 0.025        # s, frame clock vs telemetry clock
    # curvature: u integrates an OU steering-rate process
    ou_rate: float = 0.3               # 1/s, mean reversion of the rate
    ou_volatility: float = 0.001       # (1/m)/s^1.5
    u_reversion: float = 0.03          # 1/s, weak pull of u toward 0
    u_clamp: float = 0.02              # 1/m
    # image geometry (full resolution)
    height: int = 80
    width: int = 160
    horizon: int = 28
    lane_half_width: float = 48.0      # px at the bottom row
    marking_width: int = 3             # px
    bend_gain: float = 1500.0          # px per (1/m) at the horizon
    offset_volatility: float = 1.5     # px/s^0.5
    offset_clamp: float = 6.0          # px
    # distractors
    distractor_rate: float = 0.3       # spawn probability per frame
    distractor_life: tuple[int, int] = (2, 6)
    # velocity and measurement noise
    v_mean: float = 20.0
    v_amplitude: float = 5.0
    v_period: float = 60.0             # s
    stop_rate: float = 0.0             # probability per frame of starting a stop
    steering_noise_deg: float = 0.2
    velocity_noise: float = 0.2
    vehicle: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be >= 1 frame, got {self.length}")
        if not 0 < self.u_clamp <= 0.1:
            raise ValueError("u_clamp must keep |u| <= 0.1 1/m")
        if not 0 < self.horizon < self.height - 8:
            raise ValueError("horizon must leave room for the road")
        if isinstance(self.vehicle, dict):
            object.__setattr__(self, "vehicle", VehicleParams(**self.vehicle))
        object.__setattr__(self, "distractor_life", tuple(self.distractor_life))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distractor_life"] = list(self.distractor_life)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        return cls(**d)


@dataclass
class SyntheticSequence:
    params: SceneParams
    frames: np.ndarray            # N x H x W x 3 uint8 RGB
    timestamps: np.ndarray        # N
    u: np.ndarray                 # N, generating inverse turning radius
    velocity: np.ndarray          # N, true speed at the frame
    telemetry: np.ndarray         # M x 3: timestamp, steering_deg, velocity_mps (measured)
    lane_masks: np.ndarray        # N x H x W bool, causal
    distractor_masks: np.ndarray  # N x H x W bool, spurious
    distractor_present: np.ndarray  # N bool


def _rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, *extra])


def _curvature(p: SceneParams, n: int, dt: float) -> np.ndarray:
    rng = _rng(p.seed, _CURVATURE)
    xi = rng.standard_normal(n)
    u = np.zeros(n)
    r = 0.0
    for j in range(1, n):
        r += -p.ou_rate * r * dt + p.ou_volatility * np.sqrt(dt) * xi[j]
        u[j] = np.clip(u[j - 1] + (r - p.u_reversion * u[j - 1]) * dt, -p.u_clamp, p.u_clamp)
    return u


def _velocity(p: SceneParams, t: np.ndarray, dt: float) -> np.ndarray:
    rng = _rng(p.seed, _VELOCITY)
    phase = rng.uniform(0, 2 * np.pi)
    v = p.v_mean + p.v_amplitude * np.sin(2 * np.pi * t / p.v_period + phase)
    if p.stop_rate > 0:
        factor = np.ones_like(t)
        j = 0
        while j < t.size:
            if rng.random() < p.stop_rate * dt * p.fps:
                dur = int(rng.integers(40, 120))
                ramp = np.concatenate([np.linspace(1, 0, 10), np.zeros(max(dur - 20, 0)), np.linspace(0, 1, 10)])
                seg = slice(j, min(j + ramp.size, t.size))
                factor[seg] = np.minimum(factor[seg], ramp[: seg.stop - seg.start])
                j += ramp.size
            j += 1
        v = v * factor
    return np.maximum(v, 0.0)


def _offsets(p: SceneParams, n: int) -> np.ndarray:
    rng = _rng(p.seed, _OFFSET)
    dt = 1.0 / p.fps
    out = np.zeros(n)
    for k in range(1, n):
        out[k] = np.clip(out[k - 1] * (1 - 0.2 * dt) + p.offset_volatility * np.sqrt(dt) * rng.standard_normal(),
                         -p.offset_clamp, p.offset_clamp)
    return out


def _distractors(p: SceneParams, n: int) -> list[list[tuple]]:
    """Per-frame list of (top, left, h, w, rgb) rectangles confined to the sky."""
    rng = _rng(p.seed, _DISTRACTOR)
    active: list[dict] = []
    per_frame: list[list[tuple]] = []
    colors = np.array([[255, 230, 0], [255, 40, 40], [255, 255, 255], [255, 120, 0], [200, 0, 255]])
    for _ in range(n):
        if rng.random() < p.distractor_rate:
            h = int(rng.integers(5, 11))
            w = int(rng.integers(8, 21))
            active.append({
                "top": float(rng.uniform(1, p.horizon - 1 - h)),
                "left": float(rng.uniform(0, p.width - w)),
                "h": h, "w": w,
                "dx": float(rng.uniform(-1.0, 1.0)),
                "life": int(rng.integers(p.distractor_life[0], p.distractor_life[1] + 1)),
                "rgb": tuple(int(c) for c in colors[rng.integers(len(colors))]),
            })
        rects = []
        for d in active:
            rects.append((int(round(d["top"])), int(round(d["left"])), d["h"], d["w"], d["rgb"]))
            d["left"] = float(np.clip(d["left"] + d["dx"], 0, p.width - d["w"]))
            d["life"] -= 1
        active = [d for d in active if d["life"] > 0]
        per_frame.append(rects)
    return per_frame


def lane_geometry(p: SceneParams, u: float, offset: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows below the horizon with their lane center and half width (pixels)."""
    rows = np.arange(p.horizon + 1, p.height)
    s = (p.height - 1 - rows) / (p.height - 1 - p.horizon)
    center = p.width / 2 + offset * (1 - s) + p.bend_gain * u * s ** 2
    half = p.lane_half_width * (1 - 0.8 * s)
    return rows, center, half


def render_frame(p: SceneParams, index: int, u: float, offset: float,
                 rects: list[tuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    H, W = p.height, p.width
    rng = _rng(p.seed, _TEXTURE, index)
    img = np.zeros((H, W, 3), dtype=np.float64)
    sky_rows = np.arange(p.horizon + 1)[:, None]
    img[: p.horizon + 1] = (np.array([120.0, 170.0, 230.0]) + 20.0 * sky_rows[..., None] / p.horizon)[:, :, :]
    rows, center, half = lane_geometry(p, u, offset)
    cols = np.arange(W)[None, :]
    road = np.abs(cols - center[:, None]) <= half[:, None] + 8 * (1 - 0.7 * (p.height - 1 - rows[:, None]) / (p.height - 1 - p.horizon))
    ground = np.where(road[..., None], np.array([105.0, 105.0, 108.0]), np.array([60.0, 125.0, 55.0]))
    ground = ground + rng.normal(0.0, 6.0, size=ground.shape[:2])[..., None]
    img[p.horizon + 1:] = ground
    lane = np.zeros((H, W), dtype=bool)
    hw = p.marking_width // 2
    for r, c, h in zip(rows, center, half):
        for x in (c - h, c + h):
            xi = int(np.rint(x))
            lane[r, max(xi - hw, 0):min(xi + hw + (p.marking_width % 2), W)] = True
    img[lane] = 250.0
    distractor = np.zeros((H, W), dtype=bool)
    for top, left, h, w, rgb in rects:
        distractor[top:top + h, left:left + w] = True
        img[top:top + h, left:left + w] = rgb
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), lane, distractor


def generate_sequence(params: SceneParams) -> SyntheticSequence:
    """Render frames, measured telemetry and ground-truth masks for ``params``."""
    p = params
    n = p.length
    frame_t = p.frame_offset + np.arange(n) / p.fps
    dt = 1.0 / p.telemetry_rate
    m = int(np.ceil((frame_t[-1] + dt) / dt)) + 1
    tel_t = np.arange(m) * dt
    u_tel = _curvature(p, m, dt)
    v_tel = _velocity(p, tel_t, dt)
    theta_tel = theta_from_u(u_tel, v_tel, p.vehicle)
    noise = _rng(p.seed, _NOISE)
    measured = np.column_stack([
        tel_t,
        theta_tel + p.steering_noise_deg * noise.standard_normal(m),
        np.maximum(v_tel + p.velocity_noise * noise.standard_normal(m), 0.0),
    ])
    u = np.interp(frame_t, tel_t, u_tel)
    vel = np.interp(frame_t, tel_t, v_tel)
    offsets = _offsets(p, n)
    rects = _distractors(p, n)
    frames = np.empty((n, p.height, p.width, 3), dtype=np.uint8)
    lanes = np.empty((n, p.height, p.width), dtype=bool)
    dists = np.empty((n, p.height, p.width), dtype=bool)
    for k in range(n):
        frames[k], lanes[k], dists[k] = render_frame(p, k, u[k], offsets[k], rects[k])
    return SyntheticSequence(
        params=p, frames=frames, timestamps=frame_t, u=u, velocity=vel, telemetry=measured,
        lane_masks=lanes, distractor_masks=dists, distractor_present=dists.any(axis=(1, 2)),
    )


def oracle_controller(frame: np.ndarray, lane_mask: np.ndarray, params: SceneParams = SceneParams(),
                      min_rows: int = 8) -> float | None:
    """Recover ``u`` from the lane markings visible in ``frame``.

    Marking pixels are the bright pixels inside ``lane_mask``. Each row with
    both markings gives a center; a least-squares fit of
    ``center - W/2 = offset * (1 - s) + bend_gain * u * s**2`` yields ``u``.
    Returns ``None`` when too few rows show both markings (e.g. the lane
    region was masked out).
    """
    p = params
    bright = np.asarray(frame).min(axis=-1) >= 200
    marks = bright & np.asarray(lane_mask, dtype=bool)
    ss, cs = [], []
    for r in range(p.horizon + 1, p.height):
        cols = np.flatnonzero(marks[r])
        if cols.size < 2:
            continue
        gaps = np.flatnonzero(np.diff(cols) > 1)
        if gaps.size != 1:
            continue
        left = cols[: gaps[0] + 1]
        right = cols[gaps[0] + 1:]
        center = 0.25 * (left[0] + left[-1] + right[0] + right[-1])
        ss.append((p.height - 1 - r) / (p.height - 1 - p.horizon))
        cs.append(center - p.width / 2)
    if len(ss) < min_rows:
        return None
    s = np.asarray(ss)
    design = np.column_stack([1 - s, s ** 2])
    coef, *_ = np.linalg.lstsq(design, np.asarray(cs), rcond=None)
    return float(coef[1] / p.bend_gain)
