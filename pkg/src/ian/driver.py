"""The iterated adaptive neighborhoods loop.

Starting from the Gabriel graph, each iteration optimizes scales, computes
volume ratios and prunes the farthest edge of every outlying node.  The loop
stops once no node is an outlier.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import as_distance_array
from .gabriel import NeighborGraph, gabriel_graph
from .kernel_stats import (DEFAULT_C_GRID, VolumeRatioStats, WeightedGraph, multiscale_kernel,
                           tune_C, volume_ratios)
from .scale_opt import ScaleVector, build_constraints, solve_lp

__all__ = ["IANConfig", "IANResult", "IterationRecord", "run_ian", "prune_step", "check_convergence"]

log = logging.getLogger(__name__)

POLICIES = ("one_edge_per_outlier", "single_global_edge")
STATISTICS = ("delta_prime", "delta_prime_ms")


@dataclass(frozen=True)
class IANConfig:
    """Options for :func:`run_ian`.

    ``c_fixed=None`` tunes C at the first iteration and again whenever the
    median normalized ratio drifts more than ``retune_tol`` from 1.
    ``max_iterations=None`` means the number of initial edges.
    """

    policy: str = "one_edge_per_outlier"
    convergence: str = "delta_prime"
    keep_connected: bool = False
    max_iterations: int | None = None
    c_fixed: float | None = None
    threshold_k: float = 4.5
    c_grid: tuple | None = None
    c_search: str = "grid"
    retune_tol: float = 0.1
    lp_weights: str | None = None
    n_threads: int = 1
    include_self: bool = True

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.convergence not in STATISTICS:
            raise ValueError(f"convergence must be one of {STATISTICS}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.c_fixed is not None and not 0 < self.c_fixed <= 1:
            raise ValueError("fixed C must lie in (0, 1]")
        if self.threshold_k <= 0:
            raise ValueError("threshold multiplier must be positive")
        if self.c_search not in ("grid", "bisect"):
            raise ValueError("c_search must be 'grid' or 'bisect'")

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["c_grid"] is not None:
            out["c_grid"] = [float(c) for c in out["c_grid"]]
        return out


@dataclass
class IterationRecord:
    iteration: int
    n_edges: int
    c: float
    tuned: bool
    median: float
    threshold: float
    n_outliers: int
    pruned: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


@dataclass
class IANResult:
    g0: NeighborGraph
    g_star: NeighborGraph
    weighted_star: WeightedGraph | None
    sigma_star: ScaleVector
    c_star: float
    stats: VolumeRatioStats
    history: list
    converged: bool
    config: IANConfig

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def pruned(self) -> list:
        return [e for h in self.history for e in h.pruned]

    def summary(self) -> dict:
        ncomp, _ = self.g_star.components()
        return {
            "n": self.g_star.n_nodes,
            "iterations": self.iterations,
            "converged": self.converged,
            "c_star": self.c_star,
            "pruned": [list(e) for e in self.pruned],
            "median_delta_prime": self.stats.median,
            "threshold": self.stats.threshold,
            "n_edges_initial": self.g0.n_edges,
            "n_edges": self.g_star.n_edges,
            "components": int(ncomp),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and not np.isfinite(o):
        return None
    raise TypeError(type(o))


def _farthest_neighbor(g: NeighborGraph, d: np.ndarray, i: int):
    nb = g.neighbors(i)
    if not len(nb):
        return None
    r = d[i, nb]
    # ties go to the lowest index
    return int(nb[np.flatnonzero(r == r.max())[0]])


def _disconnects(adj: list[set], i: int, j: int) -> bool:
    """Whether dropping edge (i, j) leaves ``j`` unreachable from ``i``."""
    seen = {i}
    stack = [i]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if a == i and b == j:
                continue
            if b == j:
                return False
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return True


def prune_step(g: NeighborGraph, d, stats: VolumeRatioStats, cfg: IANConfig = IANConfig()):
    """Remove farthest-neighbor edges of outlying nodes.

    Returns
    -------
    g_new : NeighborGraph
    pruned : list of (i, j)
        Edges removed, in the order they were chosen.
    skipped : list of (i, j)
        Edges kept because removing them would disconnect the graph.
    """
    d = as_distance_array(d)
    outliers = stats.outliers(cfg.convergence)
    adj = [set(nb.tolist()) for nb in g.adjacency] if cfg.keep_connected else None
    pruned, skipped, seen = [], [], set()
    for i in outliers:
        j = _farthest_neighbor(g, d, int(i))
        if j is None:
            continue
        e = (min(int(i), j), max(int(i), j))
        if e in seen:
            continue
        seen.add(e)
        if cfg.keep_connected and _disconnects(adj, e[0], e[1]):
            skipped.append(e)
            log.info("keeping edge %s: removal would disconnect the graph", e)
            continue
        pruned.append(e)
        if adj is not None:
            adj[e[0]].discard(e[1])
            adj[e[1]].discard(e[0])
        if cfg.policy == "single_global_edge":
            break
    return (g.remove_edges(pruned) if pruned else g), pruned, skipped


def check_convergence(history, stats: VolumeRatioStats, cfg: IANConfig = IANConfig()) -> bool:
    """True when the selected statistic has no value above its threshold."""
    if not len(history):
        raise ValueError("no iteration recorded")
    return len(stats.outliers(cfg.convergence)) == 0


def run_ian(d, cfg: IANConfig = IANConfig(), g0: NeighborGraph | None = None,
            build_weighted: bool = True) -> IANResult:
    """Run the loop to convergence or to ``cfg.max_iterations``.

    Parameters
    ----------
    d : DistanceMatrix or array
    cfg : IANConfig
    g0 : NeighborGraph, optional
        Starting graph; the Gabriel graph of ``d`` by default.
    build_weighted : bool
        Build the final kernel matrix (dense work of order N^2).
    """
    d = as_distance_array(d)
    g = gabriel_graph(d, n_threads=cfg.n_threads) if g0 is None else g0
    first = g
    max_it = cfg.max_iterations or max(1, g.n_edges)
    grid = DEFAULT_C_GRID if cfg.c_grid is None else np.asarray(cfg.c_grid, dtype=float)
    C = cfg.c_fixed
    history = []
    converged = False
    s = st = None

    def tune(graph):
        tc = tune_C(graph, d, grid, search=cfg.c_search, k=cfg.threshold_k,
                    lp_weights=cfg.lp_weights, n_threads=cfg.n_threads,
                    include_self=cfg.include_self)
        return tc.c_star, tc.scales, tc.stats

    for t in range(max_it):
        if g.n_edges == 0:
            log.warning("graph has no edges left; stopping")
            break
        tuned = False
        if C is None:
            C, s, st = tune(g)
            tuned = True
        else:
            s = solve_lp(build_constraints(g, d, C, weights=cfg.lp_weights))
            st = volume_ratios(g, d, s, k=cfg.threshold_k, isolated="nan",
                               include_self=cfg.include_self)
            if cfg.c_fixed is None and abs(st.median - 1.0) > cfg.retune_tol:
                C, s, st = tune(g)
                tuned = True
        rec = IterationRecord(t, g.n_edges, float(C), tuned, st.median, st.limit(cfg.convergence),
                              len(st.outliers(cfg.convergence)))
        history.append(rec)
        log.debug("iteration %d: %d edges, C=%.3f, median=%.4f, %d outliers",
                  t, g.n_edges, C, st.median, rec.n_outliers)
        if check_convergence(history, st, cfg):
            converged = True
            break
        g_new, pruned, skipped = prune_step(g, d, st, cfg)
        rec.pruned, rec.skipped = pruned, skipped
        if not pruned:
            # every candidate edge is a bridge kept by keep_connected
            converged = True
            break
        g = g_new

    w = multiscale_kernel(d, s) if (build_weighted and s is not None) else None
    return IANResult(first, g, w, s, float(C) if C is not None else float("nan"), st, history,
                     converged, cfg)
