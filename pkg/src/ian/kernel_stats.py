"""Multiscale Gaussian kernel, volume ratios, C tuning and outlier threshold.

Two kernels appear here.  The multiscale kernel

    w_ij = exp(-r_ij^2 / (sigma_i sigma_j))

defines the weighted graph, while volume ratios use the single-scale kernel
``exp(-r_ij^2 / sigma_i^2)`` seen from node ``i`` alone.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.stats import norm

from .datasets import PointCloud, as_distance_array
from .gabriel import NeighborGraph
from .scale_opt import ScaleVector, build_constraints, solve_lp

__all__ = [
    "WeightedGraph",
    "VolumeRatioStats",
    "CTuning",
    "KERNEL_CUTOFF",
    "DEFAULT_C_GRID",
    "multiscale_kernel",
    "volume_ratios",
    "normalization_factor",
    "tune_C",
    "outlier_threshold",
    "c3_mean_std",
    "kernel_field_sum",
    "save_volume_ratios",
]

KERNEL_CUTOFF = 1e-16
DEFAULT_C_GRID = np.round(np.arange(0.30, 1.0 + 1e-9, 0.005), 3)
_ROW_BLOCK_ELEMS = 4_000_000


def _sigma(s) -> np.ndarray:
    return np.asarray(s.sigma if isinstance(s, ScaleVector) else s, dtype=float)


@dataclass(frozen=True)
class WeightedGraph:
    """Sparse symmetric kernel matrix without its unit diagonal.

    Entries below ``cutoff`` are not stored.
    """

    w: sparse.csr_matrix
    cutoff: float = KERNEL_CUTOFF
    sigma: np.ndarray | None = None  # scales the kernel was built from, if known

    @property
    def n_nodes(self) -> int:
        return self.w.shape[0]

    def toarray(self) -> np.ndarray:
        return self.w.toarray()

    def degree(self) -> np.ndarray:
        """Weighted degree, excluding the self weight."""
        return np.asarray(self.w.sum(axis=1)).ravel()

    def scaled(self, c: float) -> "WeightedGraph":
        return WeightedGraph((self.w * c).tocsr(), self.cutoff, self.sigma)

    def components(self) -> tuple[int, np.ndarray]:
        return csgraph.connected_components(self.w, directed=False)

    def edges(self):
        """Upper-triangle ``(i, j, w)`` triples sorted by ``(i, j)``."""
        u = sparse.triu(self.w, k=1).tocsr()
        u.sort_indices()
        coo = u.tocoo()
        return coo.row, coo.col, coo.data


def _row_blocks(n):
    step = max(1, _ROW_BLOCK_ELEMS // max(n, 1))
    for a in range(0, n, step):
        yield a, min(n, a + step)


def _kernel_block(d, sig, a, b, cutoff):
    x = d[a:b] ** 2 / (sig[a:b, None] * sig[None, :])
    k = np.exp(-x)
    k[k < cutoff] = 0.0
    k[np.arange(b - a), np.arange(a, b)] = 0.0
    return k


def multiscale_kernel(d, s, cutoff: float = KERNEL_CUTOFF) -> WeightedGraph:
    """Multiscale kernel matrix for scales ``s``.

    Examples
    --------
    >>> w = multiscale_kernel([[0, 2], [2, 0]], [4.0, 1.0])
    >>> float(w.toarray()[0, 1])  # doctest: +ELLIPSIS
    0.367879...
    """
    d = as_distance_array(d)
    sig = _sigma(s)
    if sig.shape != (len(d),):
        raise ValueError("scale vector length does not match the distances")
    if np.any(~(sig > 0)):
        raise ValueError("scales must be positive")
    blocks = []
    for a, b in _row_blocks(len(d)):
        blocks.append(sparse.csr_matrix(_kernel_block(d, sig, a, b, cutoff)))
    return WeightedGraph(sparse.vstack(blocks).tocsr(), cutoff, sig.copy())


def _ms_rowsum(d, sig, cutoff=KERNEL_CUTOFF):
    out = np.empty(len(d))
    for a, b in _row_blocks(len(d)):
        out[a:b] = _kernel_block(d, sig, a, b, cutoff).sum(axis=1)
    return out


def _single_rowsum(d, sig):
    out = np.empty(len(d))
    for a, b in _row_blocks(len(d)):
        k = np.exp(-(d[a:b] / sig[a:b, None]) ** 2)
        k[np.arange(b - a), np.arange(a, b)] = 0.0
        out[a:b] = k.sum(axis=1)
    return out


def normalization_factor(d_tilde):
    """``(2 / sqrt(pi)) ** d_tilde``."""
    return (2.0 / np.sqrt(np.pi)) ** np.asarray(d_tilde, dtype=float)


def c3_mean_std(values) -> tuple[float, float]:
    """Mean and standard deviation estimated from the quartiles.

    Uses the three-quartile estimator for normal samples:
    ``mean = (q1 + m + q3) / 3`` and ``std = (q3 - q1) / eta(n)`` with
    ``eta(n) = 2 * Phi^-1((0.75 n - 0.125) / (n + 0.25))``.
    """
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    n = len(x)
    if n < 4:
        raise ValueError("need at least 4 values")
    q1, m, q3 = np.percentile(x, [25, 50, 75])
    eta = 2.0 * norm.ppf((0.75 * n - 0.125) / (n + 0.25))
    return (q1 + m + q3) / 3.0, (q3 - q1) / eta


def outlier_threshold(delta_prime, k: float = 4.5) -> float:
    """``mean + k * std`` from the quartile estimator.

    An all-equal population returns the common value, so nothing exceeds it.
    """
    mean, std = c3_mean_std(delta_prime)
    return float(mean + k * std)


@dataclass(frozen=True)
class VolumeRatioStats:
    """Per-node volume ratios of a graph under given scales.

    Isolated nodes carry NaN and are left out of ``median`` and ``threshold``.
    """

    delta: np.ndarray
    delta_prime: np.ndarray
    delta_prime_ms: np.ndarray
    d_tilde: np.ndarray
    degree: np.ndarray
    median: float
    threshold: float
    median_ms: float
    threshold_ms: float
    k: float = 4.5

    def values(self, statistic: str = "delta_prime") -> np.ndarray:
        if statistic == "delta_prime":
            return self.delta_prime
        if statistic == "delta_prime_ms":
            return self.delta_prime_ms
        raise ValueError(f"unknown statistic {statistic!r}")

    def limit(self, statistic: str = "delta_prime") -> float:
        return self.threshold if statistic == "delta_prime" else self.threshold_ms

    def outliers(self, statistic: str = "delta_prime") -> np.ndarray:
        """Indices of nodes strictly above the threshold, by decreasing value."""
        v = self.values(statistic)
        with np.errstate(invalid="ignore"):
            idx = np.flatnonzero(v > self.limit(statistic))
        return idx[np.argsort(-v[idx], kind="stable")]


def volume_ratios(g: NeighborGraph, d, s, k: float = 4.5, isolated: str = "raise",
                  include_self: bool = True) -> VolumeRatioStats:
    """Volume ratios of every node of ``g`` under scales ``s``.

    Parameters
    ----------
    isolated : {"raise", "nan"}
        How to treat degree-zero nodes.
    include_self : bool
        Count the unit self weight ``w_ii`` in both kernel sums.
    """
    d = as_distance_array(d)
    sig = _sigma(s)
    n = g.n_nodes
    if len(d) != n or sig.shape != (n,):
        raise ValueError("graph, distances and scales disagree in size")
    deg = g.degree()
    iso = deg == 0
    if iso.any() and isolated == "raise":
        raise ValueError(f"{int(iso.sum())} isolated node(s); pass isolated='nan' to mask them")
    ok = ~iso
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = 1.0 if include_self else 0.0
        delta = (_single_rowsum(d, sig) + extra) / deg
        d_tilde = np.log2(np.maximum(2, deg)).astype(float)
        fac = normalization_factor(d_tilde)
        dp = delta * fac
        dms = (_ms_rowsum(d, sig) + extra) / deg * fac
    for a in (delta, d_tilde, dp, dms):
        a[iso] = np.nan
    if ok.sum() >= 4:
        thr, thr_ms = outlier_threshold(dp[ok], k), outlier_threshold(dms[ok], k)
    else:
        thr = thr_ms = np.inf
    med = float(np.median(dp[ok])) if ok.any() else np.nan
    med_ms = float(np.median(dms[ok])) if ok.any() else np.nan
    return VolumeRatioStats(delta, dp, dms, d_tilde, deg, med, thr, med_ms, thr_ms, k)


@dataclass
class CTuning:
    """Result of a C search; unpacks as ``(c_star, stats)``."""

    c_star: float
    stats: VolumeRatioStats
    scales: ScaleVector
    grid: np.ndarray
    medians: np.ndarray  # NaN where a grid value was not evaluated

    def __iter__(self):
        yield self.c_star
        yield self.stats


def tune_C(g: NeighborGraph, d, c_grid=None, search: str = "grid", k: float = 4.5,
           lp_weights=None, n_threads: int = 1, include_self: bool = True) -> CTuning:
    """Grid value of C whose median normalized volume ratio is closest to 1.

    Ties go to the larger C.  ``search="bisect"`` assumes the median rises
    with C and evaluates only O(log n) grid values.
    """
    d = as_distance_array(d)
    grid = np.asarray(DEFAULT_C_GRID if c_grid is None else c_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty C grid")
    if np.any(grid <= 0) or np.any(grid > 1):
        raise ValueError("C grid values must lie in (0, 1]")
    grid = np.sort(grid)
    meds = np.full(len(grid), np.nan)
    cache = {}

    def evaluate(idx):
        if idx not in cache:
            s = solve_lp(build_constraints(g, d, grid[idx], weights=lp_weights))
            st = volume_ratios(g, d, s, k=k, isolated="nan", include_self=include_self)
            cache[idx] = (s, st)
            meds[idx] = st.median
        return cache[idx]

    if search == "grid":
        if n_threads > 1:
            with ThreadPoolExecutor(n_threads) as ex:
                list(ex.map(evaluate, range(len(grid))))
        else:
            for idx in range(len(grid)):
                evaluate(idx)
    elif search == "bisect":
        lo, hi = 0, len(grid) - 1
        if evaluate(lo)[1].median >= 1:
            hi = lo
        elif evaluate(hi)[1].median <= 1:
            lo = hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if evaluate(mid)[1].median < 1:
                lo = mid
            else:
                hi = mid
        evaluate(lo)
        evaluate(hi)
    else:
        raise ValueError(f"unknown search {search!r}")

    done = np.flatnonzero(np.isfinite(meds))
    err = np.abs(meds[done] - 1.0)
    best = done[np.flatnonzero(err == err.min())[-1]]
    s, st = cache[best]
    return CTuning(float(grid[best]), st, s, grid, meds)


def kernel_field_sum(pc: PointCloud | np.ndarray, s, grid) -> np.ndarray:
    """Sum of single-scale Gaussians centred on the data, evaluated at ``grid``.

    ``grid`` holds query locations as rows; only 2-D and 3-D data is accepted.
    """
    x = np.asarray(pc.coords if isinstance(pc, PointCloud) else pc, dtype=float)
    if x.shape[1] > 3:
        raise ValueError("field sums are only provided for 2-D or 3-D data")
    q = np.asarray(grid, dtype=float).reshape(-1, x.shape[1])
    sig = _sigma(s)
    out = np.zeros(len(q))
    step = max(1, _ROW_BLOCK_ELEMS // len(x))
    for a in range(0, len(q), step):
        r2 = ((q[a:a + step, None, :] - x[None, :, :]) ** 2).sum(-1)
        out[a:a + step] = np.exp(-r2 / sig[None, :] ** 2).sum(axis=1)
    return out


def save_volume_ratios(st: VolumeRatioStats, path, statistic: str = "delta_prime") -> None:
    """CSV with columns ``node,delta,delta_prime,delta_prime_ms,d_tilde,outlier``."""
    out = np.zeros(len(st.delta), dtype=int)
    out[st.outliers(statistic)] = 1
    with open(path, "w") as f:
        f.write("node,delta,delta_prime,delta_prime_ms,d_tilde,outlier\n")
        for i in range(len(st.delta)):
            f.write(f"{i},{float(st.delta[i])!r},{float(st.delta_prime[i])!r},"
                    f"{float(st.delta_prime_ms[i])!r},{float(st.d_tilde[i])!r},{out[i]}\n")
