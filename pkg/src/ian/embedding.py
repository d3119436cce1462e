"""Embeddings used to check the converged graphs: diffusion maps on the
weighted graph, Isomap on the unweighted one, and Kendall's tau for scoring.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .datasets import as_distance_array
from .gabriel import NeighborGraph
from .kernel_stats import WeightedGraph

__all__ = [
    "EmbeddingResult",
    "diffusion_map",
    "isomap",
    "all_pairs_geodesics",
    "classical_mds",
    "kendall_tau",
    "save_embedding",
    "RESIDUAL_RTOL",
]

RESIDUAL_RTOL = 1e-8
_DENSE_LIMIT = 3000


@dataclass
class EmbeddingResult:
    """Spectral coordinates (``N x m``) and their eigenvalues, largest first.

    ``residuals`` holds ``||A v - lambda v|| / ||A||`` for every returned pair
    of the operator actually decomposed.  For a disconnected input to
    :func:`diffusion_map`, ``parts`` holds one result per component and
    ``labels`` the component of each node; rows of ``coords`` come from their
    own component's embedding (NaN where a component is too small).
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    residuals: np.ndarray | None = None
    labels: np.ndarray | None = None
    parts: list | None = None

    @property
    def m(self) -> int:
        return self.coords.shape[1]


def _fix_signs(v: np.ndarray) -> np.ndarray:
    # first entry of maximal magnitude (to rounding) made positive, column by column
    v = v.copy()
    for c in range(v.shape[1]):
        a = np.abs(v[:, c])
        k = int(np.flatnonzero(a >= a.max() * (1 - 1e-9))[0])
        if v[k, c] < 0:
            v[:, c] = -v[:, c]
    return v


def _top_eigs(a, k: int, top: float | None = None):
    """Largest ``k`` eigenpairs of a symmetric matrix, descending, with relative residuals.

    ``top`` is the known largest eigenvalue of a sparse ``a``, if any; the
    iterative path then runs in shift-invert mode just above it.
    """
    n = a.shape[0]
    if n <= _DENSE_LIMIT:
        dense = a.toarray() if sparse.issparse(a) else np.asarray(a)
        vals, vecs = linalg.eigh(dense, subset_by_index=[n - k, n - 1])
        norm = linalg.norm(dense, 2) if n <= 500 else float(np.abs(vals).max())
    else:
        # fixed start vector for reproducible iterations
        v0 = np.ones(n) / np.sqrt(n)
        if top is not None and sparse.issparse(a):
            # the spectrum of a slowly mixing walk crowds against its top, where
            # plain Lanczos stalls; shift-invert just above it separates the pairs
            a = sparse.csc_matrix(a)
            shift = top * (1 + 1e-8)
            vals, vecs = spla.eigsh(a, k=k, sigma=shift, which="LM", v0=v0, tol=1e-12)
        else:
            vals, vecs = spla.eigsh(a, k=k, which="LA", v0=v0, tol=1e-12)
        norm = float(np.abs(vals).max())
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    res = np.linalg.norm(a @ vecs - vecs * vals, axis=0) / max(norm, np.finfo(float).tiny)
    return vals, vecs, res


def _diffusion_connected(k: sparse.csr_matrix, m: int, alpha: float, t: float):
    q = np.asarray(k.sum(axis=1)).ravel()
    qa = q ** -alpha
    ka = sparse.diags(qa) @ k @ sparse.diags(qa)
    dd = np.asarray(ka.sum(axis=1)).ravel()
    dh = 1.0 / np.sqrt(dd)
    s = sparse.diags(dh) @ ka @ sparse.diags(dh)
    s = ((s + s.T) * 0.5).tocsr()
    # the conjugated walk has top eigenvalue exactly 1
    vals, vecs, res = _top_eigs(s, m + 1, top=1.0)
    # right eigenvectors of the random-walk operator
    psi = vecs * dh[:, None]
    psi = psi / np.linalg.norm(psi, axis=0)
    coords = _fix_signs(psi[:, 1:] * vals[1:] ** t)
    return coords, vals[1:], res


def diffusion_map(w: WeightedGraph, m: int = 2, alpha: float = 1.0, t: float = 1.0,
                  self_weight: float = 1.0) -> EmbeddingResult:
    """Diffusion-map coordinates of a weighted graph.

    Parameters
    ----------
    w : WeightedGraph
        Similarities, e.g. the converged multiscale kernel.
    m : int
        Number of nontrivial coordinates.
    alpha : float
        Density normalization exponent; 1 removes sampling density.
    t : float
        Diffusion time; coordinate ``k`` is scaled by ``lambda_k ** t``.
    self_weight : float
        Diagonal similarity added back to ``w`` (the kernel value at zero
        distance).

    Notes
    -----
    With ``K = W + self_weight I`` and ``q`` its row sums, the operator is the
    random walk on ``K / (q q^T)^alpha``.  It is decomposed through its
    symmetric conjugate, so the spectrum is real and the iteration is
    deterministic.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    a = w.w if isinstance(w, WeightedGraph) else sparse.csr_matrix(w, dtype=float)
    n = a.shape[0]
    if m > n - 1:
        raise ValueError(f"m must be <= N - 1 = {n - 1}")
    k = (a + self_weight * sparse.identity(n, format="csr")).tocsr()
    params = {"alpha": float(alpha), "t": float(t), "self_weight": float(self_weight)}
    ncomp, labels = csgraph.connected_components(a, directed=False)
    if ncomp == 1:
        coords, vals, res = _diffusion_connected(k, m, alpha, t)
        return EmbeddingResult(coords, vals, "diffusion_map", params, res)
    warnings.warn(f"graph has {ncomp} components; embedding each separately", RuntimeWarning,
                  stacklevel=2)
    coords = np.full((n, m), np.nan)
    parts = []
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        mc = min(m, len(idx) - 1)
        if mc < 1:
            parts.append(None)
            continue
        sub = k[idx][:, idx]
        cc, vals, res = _diffusion_connected(sub, mc, alpha, t)
        coords[idx, :mc] = cc
        parts.append(EmbeddingResult(cc, vals, "diffusion_map", params, res))
    sizes = np.bincount(labels)
    main = parts[int(np.argmax(sizes))]
    vals = main.eigenvalues if main is not None else np.empty(0)
    res = main.residuals if main is not None else None
    return EmbeddingResult(coords, vals, "diffusion_map", params, res, labels, parts)


def all_pairs_geodesics(g: NeighborGraph, d, n_threads: int = 1) -> np.ndarray:
    """Shortest-path distances between all pairs, edge lengths from ``d``."""
    d = as_distance_array(d)
    a = g.to_sparse(g.edge_lengths(d))
    n = g.n_nodes
    if n_threads <= 1:
        return csgraph.dijkstra(a, directed=False)
    chunks = np.array_split(np.arange(n), n_threads)
    with ThreadPoolExecutor(n_threads) as ex:
        parts = list(ex.map(lambda idx: csgraph.dijkstra(a, directed=False, indices=idx), chunks))
    return np.vstack(parts)


def classical_mds(dist, m: int = 2):
    """Classical scaling of a distance matrix.

    Returns coordinates, the top ``m`` eigenvalues of the double-centered
    Gram matrix and their relative residuals.
    """
    dist = np.asarray(dist, dtype=float)
    n = len(dist)
    if m > n - 1:
        raise ValueError(f"m must be <= N - 1 = {n - 1}")
    d2 = dist ** 2
    b = -0.5 * (d2 - d2.mean(axis=0)[None, :] - d2.mean(axis=1)[:, None] + d2.mean())
    vals, vecs, res = _top_eigs(b, m)
    coords = _fix_signs(vecs * np.sqrt(np.maximum(vals, 0.0)))
    return coords, vals, res


def isomap(g: NeighborGraph, d, m: int = 2, n_threads: int = 1) -> EmbeddingResult:
    """Isomap with the neighbor graph ``g`` in place of a k-NN graph.

    Examples
    --------
    >>> import numpy as np
    >>> from ian.gabriel import NeighborGraph
    >>> d = np.abs(np.subtract.outer([0., 1., 2.], [0., 1., 2.]))
    >>> e = isomap(NeighborGraph(3, [(0, 1), (1, 2)]), d, m=1)
    >>> (np.round(e.coords.ravel(), 12) + 0.0).tolist()
    [1.0, 0.0, -1.0]
    """
    ncomp, _ = g.components()
    if ncomp > 1:
        raise ValueError(f"graph has {ncomp} components; Isomap needs a connected graph")
    geo = all_pairs_geodesics(g, d, n_threads)
    coords, vals, res = classical_mds(geo, m)
    return EmbeddingResult(coords, vals, "isomap", {}, res)


def _merge_count(x: list) -> int:
    """Sort ``x`` in place by bottom-up merging; return the number of inversions."""
    n = len(x)
    buf = x[:]
    swaps = 0
    width = 1
    src, dst = x, buf
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            a, b, k = lo, mid, lo
            while a < mid and b < hi:
                if src[b] < src[a]:
                    dst[k] = src[b]
                    swaps += mid - a
                    b += 1
                else:
                    dst[k] = src[a]
                    a += 1
                k += 1
            dst[k:hi] = src[a:mid] if a < mid else src[b:hi]
        src, dst = dst, src
        width *= 2
    if src is not x:
        x[:] = src
    return swaps


def _tied_pairs(sorted_vals) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def kendall_tau(a, b) -> float:
    """Kendall's tau-b in O(N log N).

    Pairs are sorted by ``a`` (then ``b``) and the discordant pairs counted as
    inversions of ``b`` during a merge sort; ties are corrected for as in
    tau-b, which reduces to tau-a when there are none.

    Examples
    --------
    >>> kendall_tau([1, 2, 3, 4], [1, 3, 2, 4])
    0.6666666666666666
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) != len(b):
        raise ValueError("rankings must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("at least 2 items are required")
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(a)
    # pairs tied in both
    n3 = 0
    start = 0
    for k in range(1, n + 1):
        if k == n or a[k] != a[start]:
            n3 += _tied_pairs(b[start:k])
            start = k
    bl = b.tolist()
    swaps = _merge_count(bl)
    n2 = _tied_pairs(np.asarray(bl))
    den = np.sqrt(float(n0 - n1) * float(n0 - n2))
    if den == 0:
        return float("nan")
    return float((n0 - n1 - n2 + n3 - 2 * swaps) / den)


def save_embedding(e: EmbeddingResult, path) -> None:
    """CSV with columns ``node,coord_1..coord_m``."""
    with open(path, "w") as fh:
        fh.write("node," + ",".join(f"coord_{c + 1}" for c in range(e.m)) + "\n")
        for k, row in enumerate(e.coords):
            fh.write(f"{k}," + ",".join(repr(float(v)) for v in row) + "\n")
