"""Loss, optimisation and evaluation for the attention steering model.

The data term is the L1 error summed over a window of ``T`` steps. The
attention penalty comes in two forms:

``literal``
    ``sum_i (1 - sum_t alpha[t, i])``. Because every ``alpha[t]`` sums to
    one this always equals ``L - T``, so it never moves the parameters.
``squared``
    ``sum_i (1 - sum_t alpha[t, i]) ** 2``, the doubly stochastic
    regulariser, which does push attention to spread over time.

Training at desk scale runs in two phases. The encoder is first fitted
per-frame through a fully connected head, then frozen; its feature cubes are
cached and the decoder is trained on windows of cached cubes. Setting
``pretrain_steps=0`` and ``freeze_encoder=False`` trains end to end instead.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .dataset import SteeringDataset
from .decoder import DecoderConfig, rollout
from .encoder import EncoderConfig, encode, flatten_cube
from .model import AttentionSteeringModel, predict_window
from .params import Params, xavier_init, zeros
from .preprocess import theta_from_u
from .tensor import Tape, Tensor, backward, ops

__all__ = [
    "AdamState", "LossConfig", "TrainConfig", "TrainResult", "adam_step", "clip_by_global_norm",
    "evaluate_mae", "loss", "penalty", "predict_sequence", "pretrain_cnn", "sample_windows", "train",
    "xavier_init",
]

log = logging.getLogger(__name__)

PENALTY_FORMS = ("squared", "literal")
FC_WIDTHS = (1164, 100, 50, 10)


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.0
    penalty_form: str = "squared"
    T: int = 20

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"penalty coefficient must be >= 0, got {self.lam}")
        if self.T < 1:
            raise ValueError(f"window length must be >= 1, got {self.T}")
        if self.penalty_form not in PENALTY_FORMS:
            raise ValueError(f"penalty_form must be one of {PENALTY_FORMS}, got {self.penalty_form!r}")


def penalty(alpha: Tensor, form: str = "squared") -> Tensor:
    """Attention penalty for ``(B,) T x L`` weights; batched input gives one value per row."""
    coverage = ops.reduce_sum(alpha, axis=-2)                 # (B,) L
    gap = ops.subtract(1.0, coverage)
    if form == "squared":
        gap = ops.multiply(gap, gap)
    elif form != "literal":
        raise ValueError(f"unknown penalty form {form!r}")
    return ops.reduce_sum(gap, axis=-1)


def loss(u, u_hat: Tensor, alpha: Tensor, config: LossConfig = LossConfig()) -> Tensor:
    """Windowed L1 error plus ``lam`` times the attention penalty.

    ``u`` and ``u_hat`` are ``(B,) T``; ``alpha`` is ``(B,) T x L``. With a
    batch axis the per-window losses are averaged.
    """
    u = np.asarray(u.data if isinstance(u, Tensor) else u)
    if u.shape != u_hat.shape:
        raise ValueError(f"target shape {u.shape} does not match prediction shape {u_hat.shape}")
    if alpha.shape[:-1] != u_hat.shape:
        raise ValueError(f"attention shape {alpha.shape} does not match predictions {u_hat.shape}")
    err = ops.reduce_sum(ops.abs(ops.subtract(u_hat, u.astype(u_hat.dtype))), axis=-1)
    total = err
    if config.lam > 0:
        total = ops.add(err, ops.multiply(penalty(alpha, config.penalty_form), config.lam))
    return ops.mean(total) if total.ndim else total


# -- optimiser ---------------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              state: AdamState) -> tuple[Params, AdamState]:
    """Bias-corrected Adam update. Parameters without a gradient are left as they are."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out: Params = dict(params)
    for name, g in grads.items():
        p = params[name]
        g = np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        out[name] = Tensor((p.data - update).astype(p.dtype, copy=False), name=name)
    return out, state


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def _named_grads(tape: Tape, params: Mapping[str, Tensor], names) -> dict[str, np.ndarray]:
    g = backward(tape, 1.0, leaves=[params[n] for n in names])
    return {n: np.asarray(g[params[n].id].data) for n in names}


# -- batches -----------------------------------------------------------------------------------

def valid_starts(segment: np.ndarray, T: int) -> np.ndarray:
    segment = np.asarray(segment)
    if len(segment) < T:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(segment[: len(segment) - T + 1] == segment[T - 1:])


def sample_windows(dataset, batch: int, T: int, seed) -> np.ndarray:
    """``batch x T`` row indices of consecutive retained frames.

    Start positions are drawn uniformly (with replacement) among those whose
    window stays inside one contiguous segment. ``dataset`` is a
    :class:`SteeringDataset` or a bare array of segment ids.
    """
    segment = dataset.segment if hasattr(dataset, "segment") else np.asarray(dataset)
    starts = valid_starts(segment, T)
    if starts.size == 0:
        raise ValueError(
            f"no window of {T} consecutive retained frames among {len(segment)} frames "
            f"({len(np.unique(segment))} segments); lower T or add data"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chosen = starts[rng.integers(0, starts.size, size=batch)]
    return chosen[:, None] + np.arange(T)[None, :]


# -- configuration -----------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    batch: int = 16
    steps: int = 2000
    lr: float = 1e-4
    clip_norm: float = 5.0
    seed: int = 0
    hidden: int = 64
    keep_prob: float = 0.5
    output_scale: float = 0.01
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(input_size=(40, 80)))
    pretrain_steps: int = 500
    pretrain_batch: int = 32
    pretrain_lr: float = 1e-3
    freeze_encoder: bool = True
    log_every: int = 50

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if isinstance(self.encoder, dict):
            object.__setattr__(self, "encoder", EncoderConfig.from_dict(self.encoder))
        if self.batch < 1 or self.steps < 0 or self.pretrain_steps < 0:
            raise ValueError("batch must be >= 1 and step counts >= 0")
        if self.lr <= 0 or self.pretrain_lr <= 0:
            raise ValueError("learning rates must be positive")

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(depth=self.encoder.depth, locations=self.encoder.num_locations,
                             hidden=self.hidden, attn_hidden=self.hidden, out_hidden=self.hidden,
                             keep_prob=self.keep_prob, output_scale=self.output_scale)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = asdict(self.loss)
        d["encoder"] = self.encoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        return cls(**d)


# -- CNN pretraining ---------------------------------------------------------------------------

def init_fc_head(in_size: int, seed, widths=FC_WIDTHS) -> Params:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: Params = {}
    sizes = (in_size,) + tuple(widths) + (1,)
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"head/fc{k}/w"] = xavier_init((a, b), rng, name=f"head/fc{k}/w")
        params[f"head/fc{k}/b"] = zeros((b,), name=f"head/fc{k}/b")
    return params


def fc_head(features: Tensor, params: Params, scale: float = 1.0) -> Tensor:
    """ReLU MLP over flattened cubes ``N x F`` -> ``N`` predictions."""
    n_layers = len([k for k in params if k.startswith("head/") and k.endswith("/w")])
    x = features
    for k in range(n_layers):
        x = ops.add(ops.matmul(x, params[f"head/fc{k}/w"]), params[f"head/fc{k}/b"])
        if k < n_layers - 1:
            x = ops.relu(x)
    x = ops.reshape(x, (x.shape[0],))
    return ops.multiply(x, scale) if scale != 1.0 else x


def pretrain_cnn(dataset: SteeringDataset, config: TrainConfig, encoder_params: Params | None = None,
                 metrics: list | None = None) -> Params:
    """Fit encoder plus a throwaway FC head to per-frame ``u``; return the encoder weights."""
    enc_cfg = config.encoder
    rng = np.random.default_rng([config.seed, 10])
    enc = dict(encoder_params) if encoder_params is not None else \
        AttentionSteeringModel.initialise(enc_cfg, config.decoder_config(), config.seed).encoder_params()
    h, w = enc_cfg.grid
    params = {**enc, **init_fc_head(h * w * enc_cfg.depth, rng)}
    names = sorted(params)
    state = AdamState(lr=config.pretrain_lr)
    pick = np.random.default_rng([config.seed, 11])
    for step in range(1, config.pretrain_steps + 1):
        rows = np.sort(pick.integers(0, len(dataset), size=config.pretrain_batch))
        with Tape() as tape:
            cube = encode(dataset.pixels[rows], params, enc_cfg)
            flat = ops.reshape(cube, (len(rows), h * w * enc_cfg.depth))
            pred = fc_head(flat, params, config.output_scale)
            err = ops.mean(ops.abs(ops.subtract(pred, dataset.u[rows].astype(np.float32))))
        grads, _ = clip_by_global_norm(_named_grads(tape, params, names), config.clip_norm)
        params, state = adam_step(params, grads, state)
        if metrics is not None and (step % config.log_every == 0 or step == config.pretrain_steps):
            mae_deg = float(np.mean(np.abs(theta_from_u(np.asarray(pred.data, np.float64) - dataset.u[rows],
                                                        dataset.velocity[rows], dataset.vehicle))))
            metrics.append(("pretrain", step, float(err.item()), mae_deg))
    return {k: v for k, v in params.items() if k.startswith("encoder/")}


# -- decoder / end-to-end training ---------------------------------------------------------------

@dataclass
class TrainResult:
    model: AttentionSteeringModel
    metrics: list[tuple[str, int, float, float]]
    config: TrainConfig

    def write_metrics(self, path) -> None:
        """CSV ``step,train_loss,train_mae_deg``; pretraining rows use negative step numbers."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "train_loss", "train_mae_deg"])
            for phase, step, value, mae in self.metrics:
                w.writerow([-step if phase == "pretrain" else step, repr(value), repr(mae)])


def train(dataset: SteeringDataset, config: TrainConfig = TrainConfig(),
          model: AttentionSteeringModel | None = None) -> TrainResult:
    """Train an attention model on ``dataset``; fully determined by ``config.seed``."""
    if dataset.pixels.shape[1:3] != tuple(config.encoder.input_size):
        raise ValueError(f"dataset frames {dataset.pixels.shape[1:3]} do not match encoder input "
                         f"{config.encoder.input_size}")
    T = config.loss.T
    sample_windows(dataset, 1, T, 0)  # fails early with a diagnostic when no window fits
    dec_cfg = config.decoder_config()
    if model is None:
        model = AttentionSteeringModel.initialise(config.encoder, dec_cfg, config.seed)
    metrics: list = []
    if config.pretrain_steps:
        enc = pretrain_cnn(dataset, config, model.encoder_params(), metrics)
        model.params.update(enc)
    params = dict(model.params)
    trainable = sorted(k for k in params if k.startswith("decoder/") or not config.freeze_encoder)
    cache = model.features(dataset.pixels) if config.freeze_encoder else None
    state = AdamState(lr=config.lr)
    window_rng = np.random.default_rng([config.seed, 20])
    drop_rng = np.random.default_rng([config.seed, 21])
    b = config.batch
    for step in range(1, config.steps + 1):
        idx = sample_windows(dataset, b, T, window_rng)
        target = dataset.u[idx]
        with Tape() as tape:
            if cache is not None:
                cubes = Tensor(cache[idx], requires_grad=False)
            else:
                flat = flatten_cube(encode(dataset.pixels[idx.ravel()], params, config.encoder))
                cubes = ops.reshape(flat, (b, T) + flat.shape[1:])
            u_hat, alpha = rollout(cubes, params, dec_cfg, train_mode=True, rng=drop_rng)
            value = loss(target, u_hat, alpha, config.loss)
        grads, _ = clip_by_global_norm(_named_grads(tape, params, trainable), config.clip_norm)
        params, state = adam_step(params, grads, state)
        if step % config.log_every == 0 or step == config.steps:
            err = np.asarray(u_hat.data, np.float64) - target
            mae_deg = float(np.mean(np.abs(theta_from_u(err, dataset.velocity[idx], dataset.vehicle))))
            metrics.append(("train", step, float(value.item()), mae_deg))
            log.info("step %d loss %.6g mae %.4f deg", step, value.item(), mae_deg)
    model.params = params
    return TrainResult(model, metrics, config)


# -- evaluation --------------------------------------------------------------------------------

def _windows(segment: np.ndarray, T: int):
    """Cover every row with windows of at most ``T`` rows that stay in one segment.

    Yields ``(rows, keep)`` where ``keep`` masks the rows whose prediction is
    taken from this window; the last window of a long segment is aligned to
    its end so every prediction comes from a full-length rollout when possible.
    """
    edges = np.flatnonzero(np.diff(segment) != 0) + 1
    for lo, hi in zip(np.r_[0, edges], np.r_[edges, len(segment)]):
        start = lo
        while start < hi:
            stop = min(start + T, hi)
            begin = max(lo, stop - T)
            rows = np.arange(begin, stop)
            yield rows, rows >= start
            start = stop


def predict_sequence(model, dataset: SteeringDataset, T: int = 20) -> np.ndarray:
    """Per-frame ``u`` predictions from rollouts over consecutive windows of ``T`` frames."""
    out = np.empty(len(dataset), dtype=np.float64)
    feats = model.features(dataset.pixels) if isinstance(model, AttentionSteeringModel) else None
    for rows, keep in _windows(np.asarray(dataset.segment), T):
        if feats is not None:
            pred = model.rollout_features(feats[rows])[0]
        else:
            pred = predict_window(model, dataset, rows)
        out[rows[keep]] = np.asarray(pred, dtype=np.float64)[keep]
    return out


def evaluate_mae(dataset: SteeringDataset, model, T: int = 20,
                 predictions: np.ndarray | None = None) -> tuple[float, float]:
    """MAE and SD of absolute steering-angle error in degrees.

    Predictions are converted with each frame's smoothed speed; targets are
    the dataset's steering angles, which went through the same smoothing as
    the training targets.
    """
    u_hat = predict_sequence(model, dataset, T) if predictions is None else np.asarray(predictions, np.float64)
    theta_hat = theta_from_u(u_hat, dataset.velocity, dataset.vehicle)
    err = np.abs(dataset.theta - theta_hat)
    return float(err.mean()), float(err.std())
