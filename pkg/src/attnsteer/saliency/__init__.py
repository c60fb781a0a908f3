"""Attention blobs and the occlusion test that separates causal from spurious ones."""
from .causal import (
    CausalEffect,
    ClusterResult,
    SaliencyCluster,
    SaliencyConfig,
    WindowReport,
    analyse_window,
    causal_effect,
    cluster_particles,
    filter_blobs,
    hulls_per_frame,
    mask_cluster,
    read_report,
    write_report,
)
from .dbscan import NOISE, dbscan, scale_particles
from .geometry import convex_hull, frame_hull, hull_mask, mask_blob, points_in_polygon
from .maps import build_map, build_maps, gaussian_kernel, sample_particles, warp_saliency

__all__ = [
    "NOISE", "CausalEffect", "ClusterResult", "SaliencyCluster", "SaliencyConfig", "WindowReport",
    "analyse_window", "build_map", "build_maps", "causal_effect", "cluster_particles", "convex_hull",
    "dbscan", "filter_blobs", "frame_hull", "gaussian_kernel", "hull_mask", "hulls_per_frame",
    "mask_blob", "mask_cluster", "points_in_polygon", "read_report", "sample_particles",
    "scale_particles", "warp_saliency", "write_report",
]
