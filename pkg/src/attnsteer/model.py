"""Steering models: the attention network plus simple stand-ins.

Everything that predicts from frames exposes ``predict(frames) -> u`` over a
``T x H x W x 3`` window of HSV frames. The attention model additionally
returns per-step attention from :meth:`AttentionSteeringModel.rollout`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decoder as dec
from .decoder import DecoderConfig
from .encoder import EncoderConfig, encode, flatten_cube, init_encoder
from .params import Params, as_arrays, from_arrays, subset
from .tensor import Tensor, checkpoint


@dataclass
class AttentionSteeringModel:
    encoder_config: EncoderConfig
    decoder_config: DecoderConfig
    params: Params = field(default_factory=dict)

    kind = "attention"

    @classmethod
    def initialise(cls, encoder_config: EncoderConfig, decoder_config: DecoderConfig, seed: int) -> "AttentionSteeringModel":
        rng = np.random.default_rng(seed)
        params = init_encoder(encoder_config, rng)
        params.update(dec.init_decoder(decoder_config, rng))
        return cls(encoder_config, decoder_config, params)

    def features(self, frames, batch: int = 256) -> np.ndarray:
        """Flattened feature cubes ``N x L x D`` for ``N`` frames (no tape)."""
        frames = np.asarray(frames, dtype=np.float32)
        out = []
        for i in range(0, len(frames), batch):
            cube = encode(frames[i:i + batch], self.params, self.encoder_config)
            out.append(flatten_cube(cube).data)
        return np.concatenate(out, axis=0) if out else np.zeros((0,), np.float32)

    def rollout_features(self, feats) -> tuple[np.ndarray, np.ndarray]:
        u, alpha = dec.rollout(Tensor(np.asarray(feats, dtype=np.float32), requires_grad=False),
                               self.params, self.decoder_config)
        return np.asarray(u.data), np.asarray(alpha.data)

    def rollout(self, frames) -> tuple[np.ndarray, np.ndarray]:
        """Predictions ``T`` (or ``B x T``) and attention ``T x L`` for a frame window."""
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim == 5:
            b, t = frames.shape[:2]
            feats = self.features(frames.reshape((b * t,) + frames.shape[2:]))
            return self.rollout_features(feats.reshape((b, t) + feats.shape[1:]))
        return self.rollout_features(self.features(frames))

    def predict(self, frames) -> np.ndarray:
        return self.rollout(frames)[0]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return as_arrays(self.params)

    def save(self, path) -> None:
        checkpoint.save(path, self.state_arrays())

    @classmethod
    def load(cls, path, encoder_config: EncoderConfig, decoder_config: DecoderConfig) -> "AttentionSteeringModel":
        return cls(encoder_config, decoder_config, from_arrays(checkpoint.load(path)))

    def encoder_params(self) -> Params:
        return subset(self.params, "encoder/")


class ConstantModel:
    """Predicts the same ``u`` for every frame regardless of input."""

    kind = "constant"

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def predict(self, frames) -> np.ndarray:
        return np.full(len(frames), self.value)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"stub/constant": np.array([self.value], np.float32)}


class RegionMeanModel:
    """Predicts ``gain * mean(V channel)`` over a fixed pixel region.

    Its output depends only on that region, which makes the effect of masking
    any other region exactly zero.
    """

    kind = "region_mean"

    def __init__(self, region: np.ndarray, gain: float = 0.01, channel: int = 2):
        self.region = np.asarray(region, dtype=bool)
        self.gain = float(gain)
        self.channel = channel

    def predict(self, frames) -> np.ndarray:
        frames = np.asarray(frames)
        vals = frames[..., self.channel][:, self.region]
        return self.gain * vals.mean(axis=1)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"stub/region": self.region.astype(np.float32), "stub/gain": np.array([self.gain], np.float32)}


class LookupModel:
    """Replays stored per-frame predictions by dataset index (test double for ``evaluate``)."""

    kind = "lookup"

    def __init__(self, u):
        self.u = np.asarray(u, dtype=np.float64)

    def predict(self, frames) -> np.ndarray:
        raise TypeError("LookupModel predicts by frame index; use predict_window")

    def predict_window(self, dataset, index) -> np.ndarray:
        return self.u[np.asarray(index)]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"stub/u": self.u.astype(np.float32)}


def predict_window(model, dataset, index) -> np.ndarray:
    """Predictions for the consecutive dataset frames ``index``."""
    if hasattr(model, "predict_window"):
        return np.asarray(model.predict_window(dataset, index), dtype=np.float64)
    return np.asarray(model.predict(dataset.pixels[np.asarray(index)]), dtype=np.float64)


# -- checkpoints with a JSON sidecar -------------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_model(path, model, extra: dict | None = None) -> None:
    """Write the checkpoint and ``<name>.json`` describing how to rebuild the model."""
    meta = {"kind": model.kind, "format": checkpoint.MAGIC.decode()}
    if isinstance(model, AttentionSteeringModel):
        meta["encoder"] = model.encoder_config.to_dict()
        meta["decoder"] = model.decoder_config.to_dict()
    elif isinstance(model, RegionMeanModel):
        meta["channel"] = model.channel
    meta.update(extra or {})
    checkpoint.save(path, model.state_arrays())
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, metadata)``."""
    side = sidecar_path(path)
    if not side.exists():
        raise checkpoint.CheckpointError(f"missing model description {side}")
    meta = json.loads(side.read_text())
    arrays = checkpoint.load(path)
    kind = meta.get("kind")
    if kind == "attention":
        model = AttentionSteeringModel(EncoderConfig.from_dict(meta["encoder"]),
                                       DecoderConfig.from_dict(meta["decoder"]), from_arrays(arrays))
    elif kind == "constant":
        model = ConstantModel(float(arrays["stub/constant"][0]))
    elif kind == "region_mean":
        model = RegionMeanModel(arrays["stub/region"] > 0.5, float(arrays["stub/gain"][0]), meta.get("channel", 2))
    elif kind == "lookup":
        model = LookupModel(arrays["stub/u"])
    else:
        raise checkpoint.CheckpointError(f"{side}: unknown model kind {kind!r}")
    return model, meta
