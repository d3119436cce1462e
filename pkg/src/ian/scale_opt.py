"""Per-node kernel scales that cover every edge of a neighbor graph.

An edge (i, j) is C-covered when ``C * r_ij <= sqrt(sigma_i * sigma_j)``.
The set of such scale pairs is bounded by a hyperbola, which is replaced
here by one or two secant lines through the vertex ``(C r_ij, C r_ij)``.
The minimal covering then becomes a linear program in ``sigma``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .datasets import as_distance_array
from .gabriel import NeighborGraph

__all__ = [
    "ScaleVector",
    "CoveringLP",
    "CoverageReport",
    "farthest_neighbor_distances",
    "nearest_non_neighbor_distances",
    "build_constraints",
    "solve_lp",
    "optimize_scales",
    "greedy_splitting",
    "verify_covering",
    "save_sigma",
    "COVER_RTOL",
]

COVER_RTOL = 1e-9


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScaleVector:
    """Kernel bandwidths ``sigma`` (distance units) and the constant used."""

    sigma: np.ndarray
    c_used: float

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 1:
            raise ValueError("sigma must be one-dimensional")
        object.__setattr__(self, "sigma", s)

    def __len__(self):
        return len(self.sigma)

    def scaled(self, lam: float) -> "ScaleVector":
        return ScaleVector(self.sigma * lam, self.c_used)


@dataclass
class CoveringLP:
    """Rows ``alpha * sigma[i] - sigma[j] <= -beta`` with box ``0 <= sigma <= upper``.

    ``edge`` maps each row back to the index of the edge that produced it.
    Isolated nodes appear only in ``upper`` and carry no rows.
    """

    n_nodes: int
    i: np.ndarray
    j: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    edge: np.ndarray
    upper: np.ndarray
    weights: np.ndarray
    c: float
    isolated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_rows(self) -> int:
        return len(self.i)

    def residuals(self, sigma) -> np.ndarray:
        """Per-row slack ``sigma[j] - alpha sigma[i] - beta`` (negative when violated)."""
        s = np.asarray(sigma, dtype=float)
        return s[self.j] - self.alpha * s[self.i] - self.beta

    def a_ub(self) -> sparse.csr_matrix:
        r = np.arange(self.n_rows)
        return sparse.csr_matrix(
            (np.concatenate([self.alpha, -np.ones(self.n_rows)]),
             (np.concatenate([r, r]), np.concatenate([self.i, self.j]))),
            shape=(self.n_rows, self.n_nodes))

    def dump(self) -> str:
        """Plain-text form for cross-checking against other solvers.

        ::

            covering-lp n=<nodes> rows=<rows> C=<c>
            bound <node> <upper> <weight>          (one per node)
            row <i> <j> <alpha> <beta> <edge>      (alpha*s_i - s_j <= -beta)
        """
        out = io.StringIO()
        out.write(f"covering-lp n={self.n_nodes} rows={self.n_rows} C={self.c!r}\n")
        for k in range(self.n_nodes):
            out.write(f"bound {k} {float(self.upper[k])!r} {float(self.weights[k])!r}\n")
        for r in range(self.n_rows):
            out.write(f"row {self.i[r]} {self.j[r]} {float(self.alpha[r])!r} {float(self.beta[r])!r} {self.edge[r]}\n")
        return out.getvalue()

    @classmethod
    def load(cls, text: str) -> "CoveringLP":
        lines = [ln.split() for ln in text.strip().splitlines()]
        head = dict(t.split("=") for t in lines[0][1:])
        n = int(head["n"])
        upper, weights = np.zeros(n), np.zeros(n)
        rows = []
        for ln in lines[1:]:
            if ln[0] == "bound":
                upper[int(ln[1])], weights[int(ln[1])] = float(ln[2]), float(ln[3])
            elif ln[0] == "row":
                rows.append((int(ln[1]), int(ln[2]), float(ln[3]), float(ln[4]), int(ln[5])))
            else:
                raise ValueError(f"unknown record {ln[0]!r}")
        r = np.array(rows, dtype=object).reshape(-1, 5)
        return cls(n, r[:, 0].astype(np.int64), r[:, 1].astype(np.int64), r[:, 2].astype(float),
                   r[:, 3].astype(float), r[:, 4].astype(np.int64), upper, weights, float(head["C"]))


def farthest_neighbor_distances(g: NeighborGraph, d) -> np.ndarray:
    """``r^FN`` per node; zero for isolated nodes."""
    d = as_distance_array(d)
    r = g.edge_lengths(d)
    out = np.zeros(g.n_nodes)
    np.maximum.at(out, g.edges[:, 0], r)
    np.maximum.at(out, g.edges[:, 1], r)
    return out


def nearest_non_neighbor_distances(g: NeighborGraph, d) -> np.ndarray:
    """Distance from each node to its closest non-adjacent point (inf if none)."""
    d = as_distance_array(d)
    out = np.full(g.n_nodes, np.inf)
    for i in range(g.n_nodes):
        mask = np.ones(g.n_nodes, dtype=bool)
        mask[i] = False
        mask[g.neighbors(i)] = False
        if mask.any():
            out[i] = d[i, mask].min()
    return out


def _nearest_point(d):
    dd = d.copy()
    np.fill_diagonal(dd, np.inf)
    return dd.min(axis=1)


def build_constraints(g: NeighborGraph, d, C: float, allow_c_above_one: bool = False,
                      weights: str | np.ndarray | None = None) -> CoveringLP:
    """Linearized covering constraints for every edge of ``g``.

    Parameters
    ----------
    g : NeighborGraph
    d : DistanceMatrix or array
    C : float
        Covering constant.
    allow_c_above_one : bool
        Permit ``C > 1``; the upper bounds ``r^FN`` are then multiplied by ``C``.
    weights : None, "non_fn" or array
        Objective weights.  ``"non_fn"`` uses ``r^non / r^FN`` per node.
    """
    d = as_distance_array(d)
    if not C > 0:
        raise ValueError("C must be positive")
    if C > 1 and not allow_c_above_one:
        raise ValueError("C > 1 requires allow_c_above_one (bounds are rescaled by C)")
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    n = g.n_nodes
    fn = farthest_neighbor_distances(g, d)
    deg = g.degree()
    isolated = np.flatnonzero(deg == 0)
    upper = fn * (C if C > 1 else 1.0)
    if len(isolated):
        upper[isolated] = _nearest_point(d)[isolated]

    if weights is None:
        nu = np.ones(n)
    elif isinstance(weights, str):
        if weights != "non_fn":
            raise ValueError(f"unknown weights option {weights!r}")
        non = nearest_non_neighbor_distances(g, d)
        nu = np.ones(n)
        ok = (deg > 0) & np.isfinite(non)
        nu[ok] = non[ok] / fn[ok]
    else:
        nu = np.asarray(weights, dtype=float)
        if nu.shape != (n,) or np.any(nu <= 0):
            raise ValueError("weights must be positive, one per node")

    ei, ej = g.edges[:, 0], g.edges[:, 1]
    v = C * d[ei, ej]
    ui, uj = upper[ei], upper[ej]
    if np.any(v > ui) or np.any(v > uj):
        raise ValueError("edge vertex lies outside the box; bounds inconsistent with C")
    lt_i, lt_j = v < ui, v < uj
    rows_i, rows_j, al, be, src = [], [], [], [], []
    eidx = np.arange(g.n_edges)

    # line through (v, v) and (u_i, v^2/u_i); needs slack on u_i
    sel = lt_i
    rows_i.append(ei[sel]); rows_j.append(ej[sel])
    al.append(-v[sel] / ui[sel]); be.append(v[sel] + v[sel] ** 2 / ui[sel]); src.append(eidx[sel])
    # line through (v, v) and (v^2/u_j, u_j); needs slack on u_j
    sel = lt_j
    rows_i.append(ei[sel]); rows_j.append(ej[sel])
    al.append(-uj[sel] / v[sel]); be.append(v[sel] + uj[sel]); src.append(eidx[sel])
    # both bounds tight: tangent s_i + s_j >= 2v
    sel = ~lt_i & ~lt_j
    rows_i.append(ei[sel]); rows_j.append(ej[sel])
    al.append(-np.ones(sel.sum())); be.append(2 * v[sel]); src.append(eidx[sel])

    src = np.concatenate(src)
    order = np.argsort(src, kind="stable")
    lp = CoveringLP(n, np.concatenate(rows_i)[order], np.concatenate(rows_j)[order],
                    np.concatenate(al)[order], np.concatenate(be)[order], src[order],
                    upper, nu, float(C), isolated)
    if C <= 1:
        # the box corner sigma = r^FN is always feasible
        res = lp.residuals(upper)
        scale = np.maximum(np.abs(lp.beta), 1.0)
        if np.any(res < -1e-12 * scale):
            raise AssertionError("sigma = r^FN violates a covering row")
    return lp


def _polish(lp: CoveringLP, s: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    """Raise scales until every row holds in floating point.

    All slopes are nonpositive, so raising any scale never breaks another row.
    """
    s = np.clip(s, 0.0, lp.upper)
    for _ in range(max_sweeps):
        need = lp.alpha * s[lp.i] + lp.beta
        bad = s[lp.j] < need
        if not bad.any():
            return s
        for r in np.flatnonzero(bad):
            i, j = lp.i[r], lp.j[r]
            need_r = lp.alpha[r] * s[i] + lp.beta[r]
            if s[j] >= need_r:
                continue
            if need_r <= lp.upper[j]:
                s[j] = need_r
            else:
                s[j] = lp.upper[j]
                s[i] = min(lp.upper[i], max(s[i], (lp.beta[r] - s[j]) / -lp.alpha[r]))
    return s


def solve_lp(lp: CoveringLP, tol: float = 1e-10) -> ScaleVector:
    """Minimize ``sum(weights * sigma)`` over the linearized covering.

    The problem is normalized by the largest bound before solving so that
    uniformly rescaled inputs give proportionally rescaled outputs.
    """
    s0 = float(lp.upper.max())
    if not s0 > 0:
        raise ValueError("all upper bounds are zero")
    if lp.n_rows == 0:
        sig = lp.upper.copy()
        return ScaleVector(sig, lp.c)
    res = linprog(lp.weights, A_ub=lp.a_ub(), b_ub=-lp.beta / s0,
                  bounds=np.column_stack([np.zeros(lp.n_nodes), lp.upper / s0]),
                  method="highs-ds",
                  options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol,
                           "presolve": True})
    if res.status == 2:
        slack = lp.residuals(lp.upper)
        r = int(np.argmin(slack))
        raise InfeasibleError(f"covering LP infeasible; row {r} (edge {lp.edge[r]}, nodes "
                              f"{lp.i[r]}-{lp.j[r]}) fails even at the upper bounds")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    sig = _polish(lp, res.x * s0)
    if len(lp.isolated):
        sig[lp.isolated] = lp.upper[lp.isolated]
    return ScaleVector(sig, lp.c)


def optimize_scales(g: NeighborGraph, d, C: float, method: str = "lp", **kw) -> ScaleVector:
    """Covering scales for ``g`` by ``"lp"`` or ``"greedy"``."""
    if method == "lp":
        return solve_lp(build_constraints(g, d, C, **kw))
    if method == "greedy":
        return greedy_splitting(g, d, C)
    raise ValueError(f"unknown method {method!r}")


def greedy_splitting(g: NeighborGraph, d, C: float) -> ScaleVector:
    """Covering scales by splitting edges in order of decreasing length.

    Satisfies the exact product constraint ``sigma_i sigma_j >= (C r_ij)^2``
    and ``sigma <= r^FN``.
    """
    d = as_distance_array(d)
    if not 0 < C <= 1:
        raise ValueError("greedy splitting needs 0 < C <= 1")
    n = g.n_nodes
    fn = farthest_neighbor_distances(g, d)
    r = g.edge_lengths(d)
    sig = np.zeros(n)
    done = np.zeros(n, dtype=bool)

    def rebalance(i, j):
        for a, b in ((i, j), (j, i)):
            if sig[a] > fn[a]:
                sig[b] = sig[b] * sig[a] / fn[a]
                sig[a] = fn[a]

    for e in np.argsort(-r, kind="stable"):
        i, j = g.edges[e]
        v = C * r[e]
        if not done[i] and not done[j]:
            sig[i] = sig[j] = v
        elif done[i] != done[j]:
            a, b = (i, j) if done[i] else (j, i)
            sig[b] = v * v / sig[a]
            rebalance(i, j)
        elif sig[i] * sig[j] < v * v:
            f = v / np.sqrt(sig[i] * sig[j])
            sig[i] *= f
            sig[j] *= f
            rebalance(i, j)
        done[i] = done[j] = True
    iso = ~done
    if iso.any():
        sig[iso] = _nearest_point(d)[iso]
    return ScaleVector(sig, float(C))


@dataclass
class CoverageReport:
    """Edges whose covering fails, with the ratio ``C r / sqrt(s_i s_j)``."""

    edges: np.ndarray
    ratio: np.ndarray

    def __bool__(self):
        return len(self.edges) == 0

    def __len__(self):
        return len(self.edges)


def verify_covering(g: NeighborGraph, d, C: float, s, rtol: float = COVER_RTOL) -> CoverageReport:
    """Every edge with ``C r_ij > sqrt(sigma_i sigma_j) (1 + rtol)``.

    The report is truthy when no edge fails.
    """
    d = as_distance_array(d)
    sig = np.asarray(s.sigma if isinstance(s, ScaleVector) else s, dtype=float)
    if sig.shape != (g.n_nodes,):
        raise ValueError("scale vector length does not match the graph")
    r = g.edge_lengths(d)
    gm = np.sqrt(np.maximum(sig[g.edges[:, 0]], 0) * np.maximum(sig[g.edges[:, 1]], 0))
    bad = C * r > gm * (1 + rtol)
    with np.errstate(divide="ignore"):
        ratio = C * r[bad] / gm[bad]
    return CoverageReport(g.edges[bad], ratio)


def save_sigma(s: ScaleVector, path) -> None:
    """CSV with columns ``node,sigma``."""
    with open(path, "w") as f:
        f.write("node,sigma\n")
        for k, v in enumerate(s.sigma):
            f.write(f"{k},{float(v)!r}\n")
