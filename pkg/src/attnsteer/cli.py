"""Command-line entry point: ``attnsteer {synth,train,evaluate,attend,causal,sweep}``.

Every subcommand writes ``run.json`` (config, seed, version) into its output
directory; passing that file back through ``--config`` replays the run.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, write_run_record
from .dataset import DatasetError, PreprocessConfig, SteeringDataset, load, write_dataset, write_image
from .model import AttentionSteeringModel, load_model, save_model
from .overlay import render_overlay
from .saliency import analyse_window, build_maps, write_report
from .synth import generate_sequence
from .tensor.checkpoint import CheckpointError
from .training import evaluate_mae, train, valid_starts

log = logging.getLogger("attnsteer")

SWEEP_ALPHAS = (0.01, 0.05, 0.1, 0.3, 0.5, 1.0)


class CliError(Exception):
    pass


# -- argument parsing ----------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="JSON run config (a previous run.json also works)")
    p.add_argument("--seed", type=int, help="seed for every random component")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_flags(p: argparse.ArgumentParser, checkpoint: bool) -> None:
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--alpha-s", type=float, dest="alpha_s", help="telemetry smoothing factor")
    if checkpoint:
        p.add_argument("--checkpoint", help="model checkpoint written by train")


def _loss_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", type=float, dest="lam", help="attention penalty coefficient")
    p.add_argument("--penalty", choices=("squared", "literal"), help="attention penalty form")
    p.add_argument("--steps", type=int, help="decoder training steps")
    p.add_argument("--pretrain-steps", type=int, dest="pretrain_steps", help="CNN pretraining steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnsteer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--length", type=int, help="number of frames")

    p = sub.add_parser("train", help="train an attention model")
    _common(p)
    _data_flags(p, checkpoint=False)
    _loss_flags(p)

    p = sub.add_parser("evaluate", help="print MAE [SD] in degrees")
    _common(p, out_required=False)
    _data_flags(p, checkpoint=True)

    p = sub.add_parser("attend", help="write attention overlays per frame")
    _common(p)
    _data_flags(p, checkpoint=True)
    p.add_argument("--start", type=int, default=0, help="first dataset row")
    p.add_argument("--count", type=int, help="number of frames (default: all)")

    p = sub.add_parser("causal", help="causal filtering of attention blobs")
    _common(p)
    _data_flags(p, checkpoint=True)
    p.add_argument("--windows", type=int, default=10, help="number of windows to analyse")
    p.add_argument("--tau", type=float, help="causal threshold in degrees")

    p = sub.add_parser("sweep", help="held-out MAE for a range of smoothing factors")
    _common(p)
    _data_flags(p, checkpoint=False)
    _loss_flags(p)
    p.add_argument("--eval-dataset", dest="eval_dataset", help="held-out dataset (default: last 20%% of --dataset)")
    p.add_argument("--alphas", help="comma-separated smoothing factors")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    updates = {}
    for name in ("dataset", "checkpoint", "eval_dataset"):
        if getattr(args, name, None):
            updates[name] = str(getattr(args, name))
    if updates:
        cfg = replace(cfg, **updates)
    if getattr(args, "alpha_s", None) is not None:
        cfg = replace(cfg, preprocess=replace(cfg.preprocess, alpha_s=args.alpha_s))
    train_cfg, loss_cfg = cfg.train, cfg.train.loss
    if getattr(args, "lam", None) is not None:
        loss_cfg = replace(loss_cfg, lam=args.lam)
    if getattr(args, "penalty", None):
        loss_cfg = replace(loss_cfg, penalty_form=args.penalty)
    for name in ("steps", "pretrain_steps"):
        if getattr(args, name, None) is not None:
            train_cfg = replace(train_cfg, **{name: getattr(args, name)})
    cfg = replace(cfg, train=replace(train_cfg, loss=loss_cfg))
    if getattr(args, "length", None):
        cfg = replace(cfg, scene=replace(cfg.scene, length=args.length))
    if getattr(args, "tau", None) is not None:
        cfg = replace(cfg, saliency=replace(cfg.saliency, tau_causal=args.tau))
    return cfg


# -- helpers -------------------------------------------------------------------------------------

def _need(value, flag: str):
    if not value:
        raise CliError(f"{flag} is required")
    return value


def _dataset(cfg: RunConfig, path=None, pre: PreprocessConfig | None = None) -> SteeringDataset:
    root = Path(_need(path or cfg.dataset, "--dataset"))
    if not root.is_dir():
        raise CliError(f"dataset directory {root} does not exist")
    return load(root, pre or cfg.preprocess)


def _model(cfg: RunConfig):
    path = Path(_need(cfg.checkpoint, "--checkpoint"))
    if not path.exists():
        raise CliError(f"checkpoint {path} does not exist")
    return load_model(path)


def _out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_frames(cfg: RunConfig) -> None:
    if tuple(cfg.preprocess.frame_size) != tuple(cfg.train.encoder.input_size):
        raise CliError(f"preprocess frame_size {cfg.preprocess.frame_size} differs from encoder input "
                       f"{cfg.train.encoder.input_size}")


def _attention(model, ds: SteeringDataset, rows: np.ndarray, T: int) -> np.ndarray:
    """Attention ``len(rows) x L`` from consecutive rollouts of up to ``T`` frames."""
    out = []
    for i in range(0, len(rows), T):
        out.append(model.rollout(ds.pixels[rows[i:i + T]])[1])
    return np.concatenate(out)


# -- subcommands ---------------------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig) -> int:
    out = _out(args.out)
    seq = generate_sequence(cfg.scene)
    write_dataset(out, seq.frames, seq.timestamps, seq.telemetry, seq.lane_masks, seq.distractor_masks)
    write_run_record(out, "synth", cfg)
    print(f"wrote {len(seq.frames)} frames to {out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    _check_frames(cfg)
    out = _out(args.out)
    ds = _dataset(cfg)
    result = train(ds, cfg.train)
    save_model(out / "model.ckpt", result.model, {"T": cfg.train.loss.T, "preprocess": cfg.preprocess.to_dict()})
    result.write_metrics(out / "metrics.csv")
    write_run_record(out, "train", cfg)
    last = result.metrics[-1] if result.metrics else None
    if last:
        print(f"step {last[1]} loss {last[2]:.6g} train MAE {last[3]:.3f} deg")
    print(f"checkpoint {out / 'model.ckpt'}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    model, meta = _model(cfg)
    ds = _dataset(cfg)
    mae, sd = evaluate_mae(ds, model, T=int(meta.get("T", cfg.train.loss.T)))
    out = _out(args.out or Path(cfg.checkpoint).parent / "evaluate")
    (out / "evaluation.csv").write_text(f"mae_deg,sd_deg\n{mae!r},{sd!r}\n")
    write_run_record(out, "evaluate", cfg)
    print(f"MAE {mae:.3f} [{sd:.3f}]")
    return 0


def cmd_attend(args, cfg: RunConfig) -> int:
    model, meta = _model(cfg)
    if not isinstance(model, AttentionSteeringModel):
        raise CliError("attend needs an attention model checkpoint")
    ds = _dataset(cfg)
    stop = len(ds) if args.count is None else min(len(ds), args.start + args.count)
    rows = np.arange(args.start, stop)
    if rows.size == 0:
        raise CliError("no frames selected")
    out = _out(args.out)
    (out / "overlays").mkdir(exist_ok=True)
    alpha = _attention(model, ds, rows, int(meta.get("T", cfg.train.loss.T)))
    maps = build_maps(alpha, model.encoder_config.grid)
    for r, m in zip(rows, maps):
        idx = int(ds.source_index[r]) + 1
        write_image(out / "overlays" / f"frame_{idx:06d}.ppm", render_overlay(ds.rgb[r], m))
    write_run_record(out, "attend", cfg)
    print(f"wrote {len(rows)} overlays to {out / 'overlays'}")
    return 0


def cmd_causal(args, cfg: RunConfig) -> int:
    model, meta = _model(cfg)
    if not isinstance(model, AttentionSteeringModel):
        raise CliError("causal needs an attention model checkpoint")
    ds = _dataset(cfg)
    T = int(meta.get("T", cfg.train.loss.T))
    starts = _spaced(valid_starts(ds.segment, T), T)[: args.windows]
    if starts.size == 0:
        raise CliError(f"dataset has no window of {T} consecutive frames")
    out = _out(args.out)
    (out / "overlays").mkdir(exist_ok=True)
    reports = []
    for wid, s in enumerate(starts):
        rows = np.arange(s, s + T)
        rep = analyse_window(model, ds.pixels[rows], ds.theta[rows], ds.velocity[rows], model.encoder_config.grid,
                             cfg.saliency, ds.vehicle, window_id=wid, rows=rows)
        reports.append(rep)
        for t, r in enumerate(rows):
            hulls = [c.cluster.hulls[t] for c in rep.clusters if c.verdict == "causal" and t in c.cluster.hulls]
            idx = int(ds.source_index[r]) + 1
            write_image(out / "overlays" / f"w{wid:03d}_frame_{idx:06d}.ppm",
                        render_overlay(ds.rgb[r], rep.maps[t], hulls))
    write_report(out / "report.jsonl", reports)
    write_run_record(out, "causal", cfg)
    total = sum(len(r.clusters) for r in reports)
    spurious = sum(sum(c.verdict == "spurious" for c in r.clusters) for r in reports)
    frac = spurious / total if total else 0.0
    print(f"{len(reports)} windows, {total} blobs, {spurious} spurious ({100 * frac:.1f}%)")
    return 0


def _spaced(starts: np.ndarray, T: int) -> np.ndarray:
    """Greedy non-overlapping window starts in dataset order."""
    picked, nxt = [], -1
    for s in starts:
        if s >= nxt:
            picked.append(int(s))
            nxt = s + T
    return np.asarray(picked, dtype=np.int64)


def cmd_sweep(args, cfg: RunConfig) -> int:
    _check_frames(cfg)
    out = _out(args.out)
    alphas = SWEEP_ALPHAS if not args.alphas else tuple(float(a) for a in args.alphas.split(","))
    settings = [(f"{a!r}", replace(cfg.preprocess, alpha_s=a, smooth=True)) for a in alphas]
    settings.append(("none", replace(cfg.preprocess, smooth=False)))
    rows = []
    for label, pre in settings:
        ds = _dataset(cfg, pre=pre)
        if cfg.eval_dataset:
            train_ds, test_ds = ds, _dataset(cfg, cfg.eval_dataset, pre)
        else:
            cut = int(0.8 * len(ds))
            train_ds, test_ds = ds.subset(np.arange(cut)), ds.subset(np.arange(cut, len(ds)))
        result = train(train_ds, cfg.train)
        mae, sd = evaluate_mae(test_ds, result.model, T=cfg.train.loss.T)
        rows.append((label, mae, sd))
        print(f"alpha_s {label}: MAE {mae:.3f} [{sd:.3f}]")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha_s", "mae_deg", "sd_deg"])
        for label, mae, sd in rows:
            w.writerow([label, repr(mae), repr(sd)])
    write_run_record(out, "sweep", cfg, {"alphas": list(alphas)})
    return 0


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate,
    "attend": cmd_attend, "causal": cmd_causal, "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, DatasetError, CheckpointError, ValueError, OSError) as exc:
        print(f"attnsteer {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
