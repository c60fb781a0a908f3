"""Blob extraction from attention and the occlusion test that labels each blob.

For one window of ``T`` frames the pipeline is: attention maps, ``N``
particles per map, DBSCAN over ``(x, y, w_t * t)``, one convex hull per
cluster and frame, then for every cluster a second full rollout with its
hulls zeroed in the frames it spans. A blob is causal when masking it raises
the steering MAE over its span by more than ``tau_causal`` degrees.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..preprocess import VehicleParams, theta_from_u
from .dbscan import NOISE, dbscan, scale_particles
from .geometry import frame_hull, mask_blob
from .maps import build_maps, sample_particles, warp_saliency


@dataclass(frozen=True)
class SaliencyConfig:
    n_particles: int = 500
    eps: float = 5.0
    min_pts: int = 5
    w_t: float = 4.0          # pixels per frame along the time axis
    tau_causal: float = 0.1   # degrees of MAE increase
    warp_size: int = 64
    upsample: int = 8
    sigma: float = 4.0
    radius: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 1 or self.w_t <= 0 or self.tau_causal < 0:
            raise ValueError(f"invalid saliency config: {self}")
        if self.n_particles < 1:
            raise ValueError("need at least one particle per frame")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SaliencyCluster:
    cluster_id: int
    members: np.ndarray                       # particle rows (x, y, t)
    hulls: dict[int, np.ndarray] = field(default_factory=dict)   # frame -> CCW vertices

    @property
    def frame_span(self) -> tuple[int, int]:
        ts = sorted(self.hulls)
        return ts[0], ts[-1]


def cluster_particles(particles, config: SaliencyConfig = SaliencyConfig()) -> tuple[list[SaliencyCluster], np.ndarray]:
    """DBSCAN clusters with per-frame hulls, plus the noise particles."""
    particles = np.asarray(particles)
    if len(particles) == 0:
        raise ValueError("no particles to cluster")
    labels = dbscan(scale_particles(particles, config.w_t), config.eps, config.min_pts)
    clusters = []
    for cid in range(labels.max() + 1):
        members = particles[labels == cid]
        clusters.append(SaliencyCluster(cid, members, hulls_per_frame(members)))
    return clusters, particles[labels == NOISE]


def hulls_per_frame(members) -> dict[int, np.ndarray]:
    members = np.asarray(members)
    return {int(t): frame_hull(members[members[:, 2] == t, :2]) for t in np.unique(members[:, 2])}


def mask_cluster(frames: np.ndarray, cluster: SaliencyCluster) -> np.ndarray:
    out = np.array(frames, copy=True)
    for t, hull in cluster.hulls.items():
        out[t] = mask_blob(out[t], hull)
    return out


def _mae_deg(u_hat, theta, velocity, vehicle) -> float:
    return float(np.mean(np.abs(np.asarray(theta) - theta_from_u(np.asarray(u_hat), velocity, vehicle))))


@dataclass
class CausalEffect:
    baseline_mae_deg: float
    masked_mae_deg: float

    @property
    def delta(self) -> float:
        return self.masked_mae_deg - self.baseline_mae_deg


def causal_effect(model, frames, cluster: SaliencyCluster, theta, velocity,
                  vehicle: VehicleParams = VehicleParams(), baseline_u=None) -> CausalEffect:
    """Masked-minus-original MAE (degrees) over the cluster's frame span.

    The whole window is rolled out again with the hulls zeroed, so recurrent
    state downstream of a masked frame sees the change.
    """
    frames = np.asarray(frames)
    if baseline_u is None:
        baseline_u = model.predict(frames)
    masked_u = model.predict(mask_cluster(frames, cluster))
    t0, t1 = cluster.frame_span
    span = slice(t0, t1 + 1)
    theta, velocity = np.asarray(theta), np.asarray(velocity)
    return CausalEffect(
        _mae_deg(np.asarray(baseline_u)[span], theta[span], velocity[span], vehicle),
        _mae_deg(np.asarray(masked_u)[span], theta[span], velocity[span], vehicle),
    )


def filter_blobs(deltas, tau_causal: float) -> tuple[list[str], float]:
    """Verdict per blob and the window's spurious fraction."""
    verdicts = ["causal" if d > tau_causal else "spurious" for d in deltas]
    frac = verdicts.count("spurious") / len(verdicts) if verdicts else 0.0
    return verdicts, frac


@dataclass
class ClusterResult:
    cluster: SaliencyCluster
    effect: CausalEffect
    verdict: str


@dataclass
class WindowReport:
    window_id: int
    rows: np.ndarray
    alpha: np.ndarray
    maps: np.ndarray
    clusters: list[ClusterResult]
    noise: np.ndarray

    @property
    def spurious_fraction(self) -> float:
        if not self.clusters:
            return 0.0
        return sum(c.verdict == "spurious" for c in self.clusters) / len(self.clusters)

    def records(self) -> list[dict]:
        out = []
        for c in self.clusters:
            out.append({
                "window_id": self.window_id,
                "cluster_id": c.cluster.cluster_id,
                "frame_span": list(c.cluster.frame_span),
                "hull_vertices": [{"frame": t, "vertices": np.round(h, 6).tolist()}
                                  for t, h in sorted(c.cluster.hulls.items())],
                "baseline_mae_deg": c.effect.baseline_mae_deg,
                "masked_mae_deg": c.effect.masked_mae_deg,
                "delta_mae_deg": c.effect.delta,
                "verdict": c.verdict,
            })
        out.append({
            "window_id": self.window_id,
            "summary": True,
            "rows": [int(self.rows[0]), int(self.rows[-1])] if len(self.rows) else [],
            "clusters": len(self.clusters),
            "spurious": sum(c.verdict == "spurious" for c in self.clusters),
            "spurious_fraction": self.spurious_fraction,
            "noise_particles": int(len(self.noise)),
        })
        return out

    def patches(self, frames, size: int = 64) -> list[np.ndarray]:
        """One warped patch per cluster, taken at the first frame of its span."""
        return [warp_saliency(frames[c.cluster.frame_span[0]], c.cluster.hulls[c.cluster.frame_span[0]], size)
                for c in self.clusters]


def analyse_window(model, frames, theta, velocity, grid: tuple[int, int],
                   config: SaliencyConfig = SaliencyConfig(), vehicle: VehicleParams = VehicleParams(),
                   alpha=None, window_id: int = 0, rows=None) -> WindowReport:
    """Run the whole blob pipeline on one window of frames.

    ``alpha`` defaults to the model's own attention; pass it explicitly for
    models that have none (the stub models).
    """
    frames = np.asarray(frames)
    if alpha is None:
        baseline_u, alpha = model.rollout(frames)
    else:
        baseline_u = model.predict(frames)
    maps = build_maps(alpha, grid, factor=config.upsample, sigma=config.sigma, radius=config.radius)
    if maps.shape[1:] != frames.shape[1:3]:
        raise ValueError(f"attention maps {maps.shape[1:]} do not match frames {frames.shape[1:3]}")
    rng = np.random.default_rng([config.seed, window_id])
    particles = sample_particles(maps, config.n_particles, rng)
    clusters, noise = cluster_particles(particles, config)
    effects = [causal_effect(model, frames, c, theta, velocity, vehicle, baseline_u) for c in clusters]
    verdicts, _ = filter_blobs([e.delta for e in effects], config.tau_causal)
    results = [ClusterResult(c, e, v) for c, e, v in zip(clusters, effects, verdicts)]
    rows = np.arange(len(frames)) if rows is None else np.asarray(rows)
    return WindowReport(window_id, rows, np.asarray(alpha), maps, results, noise)


def write_report(path, reports) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            for rec in rep.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_report(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
