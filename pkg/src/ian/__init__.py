"""Iterated adaptive neighborhoods: neighbor graphs and kernel scales from
pairwise distances, with geodesic, dimension and embedding tools on top.

>>> import ian
>>> pc = ian.generate(ian.DatasetSpec("grid", {"dim": 1, "side": 5}))
>>> ian.gabriel_graph(ian.pairwise_distances(pc)).n_edges
4
"""
__version__ = "0.1.0"

from .datasets import (DatasetSpec, DistanceMatrix, PointCloud, generate, load_points,
                       pairwise_distances, save_points)
from .gabriel import NeighborGraph, gabriel_graph, is_gabriel_edge
from .scale_opt import ScaleVector, build_constraints, greedy_splitting, optimize_scales, solve_lp, verify_covering
from .kernel_stats import WeightedGraph, multiscale_kernel, tune_C, volume_ratios
from .driver import IANConfig, IANResult, run_ian
from .geodesics import graph_geodesics, heat_geodesics
from .dimension import mle_dimension, ncd_dimension
from .embedding import diffusion_map, isomap, kendall_tau

__all__ = [
    "DatasetSpec", "DistanceMatrix", "PointCloud", "generate", "load_points", "pairwise_distances",
    "save_points", "NeighborGraph", "gabriel_graph", "is_gabriel_edge", "ScaleVector",
    "build_constraints", "greedy_splitting", "optimize_scales", "solve_lp", "verify_covering",
    "WeightedGraph", "multiscale_kernel", "tune_C", "volume_ratios", "IANConfig", "IANResult",
    "run_ian", "graph_geodesics", "heat_geodesics", "mle_dimension", "ncd_dimension",
    "diffusion_map", "isomap", "kendall_tau",
]
