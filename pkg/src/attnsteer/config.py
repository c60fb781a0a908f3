"""Run configuration: one JSON document holding every module's settings.

A config file may contain any subset of the sections below; missing keys
keep their defaults. A ``run.json`` written by a previous run is accepted as
well (its ``config`` member is used), which is how runs are replayed.

.. code-block:: json

    {"seed": 0, "dataset": "data/train", "checkpoint": null,
     "preprocess": {"alpha_s": 0.05},
     "scene": {"length": 2000},
     "train": {"steps": 2000, "loss": {"lam": 0.0, "penalty_form": "squared", "T": 20}},
     "saliency": {"tau_causal": 0.1}}
"""
from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .dataset import PreprocessConfig
from .preprocess import VehicleParams
from .saliency import SaliencyConfig
from .synth import SceneParams
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: str | None = None
    eval_dataset: str | None = None
    checkpoint: str | None = None
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    preprocess: PreprocessConfig = field(default_factory=lambda: PreprocessConfig(frame_size=(40, 80)))
    scene: SceneParams = field(default_factory=SceneParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    saliency: SaliencyConfig = field(default_factory=SaliencyConfig)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "eval_dataset": self.eval_dataset,
            "checkpoint": self.checkpoint,
            "vehicle": vars(self.vehicle).copy(),
            "preprocess": self.preprocess.to_dict(),
            "scene": self.scene.to_dict(),
            "train": self.train.to_dict(),
            "saliency": self.saliency.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "config" in d and isinstance(d["config"], dict):
            d = d["config"]
        known = {"seed", "dataset", "eval_dataset", "checkpoint", "vehicle", "preprocess", "scene",
                 "train", "saliency"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        base = cls()
        try:
            vehicle = VehicleParams(**d.get("vehicle", {}))
            pre = {**base.preprocess.to_dict(), **d.get("preprocess", {}), "vehicle": vars(vehicle)}
            scene = {**base.scene.to_dict(), **d.get("scene", {}), "vehicle": vars(vehicle)}
            train = _merge(base.train.to_dict(), d.get("train", {}))
            sal = {**base.saliency.to_dict(), **d.get("saliency", {})}
            return cls(
                seed=int(d.get("seed", base.seed)),
                dataset=d.get("dataset"),
                eval_dataset=d.get("eval_dataset"),
                checkpoint=d.get("checkpoint"),
                vehicle=vehicle,
                preprocess=PreprocessConfig(**pre),
                scene=SceneParams.from_dict(scene),
                train=TrainConfig.from_dict(train),
                saliency=SaliencyConfig(**sal),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(d)

    def with_seed(self, seed: int) -> "RunConfig":
        """Propagate one seed to every seeded component."""
        return replace(
            self, seed=seed,
            scene=replace(self.scene, seed=seed),
            train=replace(self.train, seed=seed),
            saliency=replace(self.saliency, seed=seed),
        )


def _merge(base: dict, update: dict) -> dict:
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def version_string() -> str:
    """``git describe`` of the source checkout when available, else the package version."""
    src = Path(__file__).resolve().parent
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=src,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.TimeoutExpired):
        return __version__
    tag = res.stdout.strip()
    return f"{__version__}+g{tag}" if res.returncode == 0 and tag else __version__


def write_run_record(out_dir, command: str, config: RunConfig, extra: dict | None = None) -> Path:
    record = {"command": command, "seed": config.seed, "version": version_string(),
              "config": config.to_dict()}
    if extra:
        record.update(extra)
    path = Path(out_dir) / "run.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path
