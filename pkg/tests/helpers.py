"""Small builders shared by several test modules."""
from __future__ import annotations

import numpy as np

from attnsteer.dataset import PreprocessConfig, RawDataset, SteeringDataset, prepare
from attnsteer.preprocess import VehicleParams, theta_from_u
from attnsteer.synth import SceneParams, generate_sequence


def make_dataset(u, size=(8, 16), segment=None, velocity=10.0, seed=0) -> SteeringDataset:
    """A dataset with random pixels and the given targets."""
    u = np.asarray(u, dtype=np.float64)
    n = len(u)
    rng = np.random.default_rng(seed)
    pixels = rng.uniform(size=(n,) + tuple(size) + (3,)).astype(np.float32)
    vel = np.full(n, float(velocity))
    vehicle = VehicleParams()
    seg = np.zeros(n, np.int64) if segment is None else np.asarray(segment, np.int64)
    return SteeringDataset(pixels, (pixels * 255).astype(np.uint8), np.arange(n) / 10.0, u,
                           theta_from_u(u, vel, vehicle), vel, seg, np.arange(n), vehicle)


def synthetic_dataset(seed: int, length: int, alpha_s: float = 0.05, smooth: bool = True,
                      **scene) -> SteeringDataset:
    seq = generate_sequence(SceneParams(seed=seed, length=length, **scene))
    raw = RawDataset(seq.frames, seq.timestamps, seq.telemetry, seq.lane_masks, seq.distractor_masks)
    return prepare(raw, PreprocessConfig(alpha_s=alpha_s, smooth=smooth, frame_size=(40, 80)))
