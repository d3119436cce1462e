"""Synthetic point clouds, CSV ingestion and pairwise distances.

Every generator is a pure function of its ``DatasetSpec`` (parameters plus
seed).  Generated clouds carry per-point labels in ``PointCloud.meta`` so
that diagnostics can separate interior from boundary points, body from tail,
and so on.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PointCloud",
    "DatasetSpec",
    "DistanceMatrix",
    "KINDS",
    "generate",
    "load_points",
    "pairwise_distances",
    "save_points",
    "as_distance_array",
]


@dataclass
class PointCloud:
    """N points in R^n with optional per-point labels.

    Parameters
    ----------
    coords : array-like, shape (N, n)
    meta : dict, optional
        Label arrays of length N (e.g. ``interior``) and scalar descriptors.
    seed : int or None
    """

    coords: np.ndarray
    meta: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2:
            raise ValueError(f"coords must be 2-D, got shape {coords.shape}")
        n_points, n_dims = coords.shape
        if n_points < 2 or n_dims < 1:
            raise ValueError(f"need N >= 2 points with n >= 1 coordinates, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords contain non-finite values")
        if len(np.unique(coords, axis=0)) != n_points:
            raise ValueError("duplicate points")
        self.coords = coords

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def n_dims(self) -> int:
        return self.coords.shape[1]


class DistanceMatrix:
    """Symmetric, zero-diagonal matrix of pairwise distances.

    Inputs that are symmetric within a relative tolerance of 1e-12 are
    symmetrized exactly, so downstream kernels are bit-symmetric.
    """

    def __init__(self, d, rtol: float = 1e-12):
        d = np.array(d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {d.shape}")
        if d.shape[0] < 2:
            raise ValueError("distance matrix needs at least 2 points")
        if not np.all(np.isfinite(d)):
            raise ValueError("distance matrix contains non-finite values")
        scale = max(float(np.abs(d).max()), np.finfo(float).tiny)
        asym = float(np.abs(d - d.T).max())
        if asym > rtol * scale:
            raise ValueError(f"distance matrix is not symmetric (max deviation {asym:.3g})")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        d = 0.5 * (d + d.T)
        off = ~np.eye(len(d), dtype=bool)
        if np.any(d[off] <= 0):
            raise ValueError("off-diagonal distances must be strictly positive (duplicate points?)")
        self.d = d

    def __len__(self):
        return self.d.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.d if dtype is None else self.d.astype(dtype)

    @property
    def n_points(self) -> int:
        return self.d.shape[0]

    def triangle_violations(self, n_samples: int = 10000, seed: int = 0, rtol: float = 1e-9):
        """Spot-check the triangle inequality on random triples.

        Returns the list of sampled triples ``(i, j, k)`` with
        ``d[i, k] > d[i, j] + d[j, k]`` beyond ``rtol``.
        """
        rng = np.random.default_rng(seed)
        n = self.n_points
        i, j, k = rng.integers(0, n, size=(3, n_samples))
        lhs = self.d[i, k]
        rhs = self.d[i, j] + self.d[j, k]
        bad = lhs > rhs * (1 + rtol)
        return [tuple(t) for t in np.stack([i, j, k], axis=1)[bad]]


def as_distance_array(d) -> np.ndarray:
    """Return the raw ndarray behind a ``DistanceMatrix`` (or an array)."""
    if isinstance(d, DistanceMatrix):
        return d.d
    return np.asarray(d, dtype=float)


def pairwise_distances(pc: PointCloud, block: int | None = None) -> DistanceMatrix:
    """Euclidean distances between all rows of ``pc.coords``.

    Computed from coordinate differences (not the Gram-matrix expansion),
    one row block at a time, so results do not depend on blocking.
    """
    x = pc.coords if isinstance(pc, PointCloud) else np.asarray(pc, dtype=float)
    n = len(x)
    if block is None:
        block = max(1, 4_000_000 // (n * x.shape[1]))
    d = np.empty((n, n))
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = x[start:stop, None, :] - x[None, :, :]
        d[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(d, 0.0)
    d = np.minimum(d, d.T)
    return DistanceMatrix(d)


# ----------------------------------------------------------------------------
# dataset specs

KINDS = (
    "grid",
    "jittered_grid",
    "stingray",
    "spiral",
    "bent_plane",
    "cylinder5d",
    "gauss_clusters",
    "swiss_cheese",
    "horseshoe",
    "ball",
)

_DEFAULT_HOLES = ((0.28, 0.30, 0.12), (0.72, 0.32, 0.10), (0.50, 0.72, 0.14))

_DEFAULTS = {
    "grid": dict(dim=2, side=10, spacing=1.0, lattice="square"),
    "jittered_grid": dict(dim=2, side=20, spacing=1.0, lattice="square", jitter=0.5, margin=2),
    "stingray": dict(spacing=0.1, radius=1.0, tail_length=3.0, tail_curvature_radius=2.0,
                     delete=0.2, body_jitter=0.25),
    "spiral": dict(n=300, arm_gap=1.0, theta_min=np.pi, theta_max=6 * np.pi, sampling="even"),
    "bent_plane": dict(n=800, a=0.5, s_max=2.5, width=2.0, sampling="random"),
    "cylinder5d": dict(n=8403, radius=1.0, length=3.0),
    "gauss_clusters": dict(centers=((0.0, 0.0), (5.0, 0.0), (2.5, 4.5)),
                           stds=(0.5, 0.8, 0.35), counts=(150, 120, 80)),
    "swiss_cheese": dict(n=2000, holes=_DEFAULT_HOLES),
    "horseshoe": dict(n=400, r_inner=0.6, r_outer=1.0, opening=0.12),
    "ball": dict(dim=2, n=1000, distribution="uniform", boundary_norm=0.9),
}


@dataclass
class DatasetSpec:
    """Kind, kind-specific parameters and seed of a synthetic dataset.

    Missing parameters take the kind's defaults; unknown or out-of-range
    parameters raise ``ValueError`` at construction.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        defaults = _DEFAULTS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = dict(defaults)
        merged.update(self.params)
        self.params = merged
        _validate(self.kind, merged)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params), "seed": self.seed}


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def _validate(kind, p):
    positive_ints = [k for k in ("n", "side", "dim") if k in p]
    for k in positive_ints:
        _require(int(p[k]) == p[k] and p[k] >= 1, f"{kind}: {k} must be a positive integer")
    for k in ("spacing", "radius", "length", "width", "a", "s_max", "arm_gap", "tail_length",
              "tail_curvature_radius"):
        if k in p:
            _require(p[k] > 0, f"{kind}: {k} must be positive")
    if "jitter" in p:
        _require(p["jitter"] >= 0, f"{kind}: jitter std must be >= 0")
    if "delete" in p:
        _require(0 <= p["delete"] < 1, f"{kind}: deletion fraction must be in [0, 1)")
    if "lattice" in p:
        _require(p["lattice"] in ("square", "triangular"), f"{kind}: lattice must be square or triangular")
        if p["lattice"] == "triangular":
            _require(p["dim"] == 2, f"{kind}: triangular lattice is only defined for dim=2")
    if "sampling" in p:
        _require(p["sampling"] in ("random", "even"), f"{kind}: sampling must be random or even")
    if kind in ("grid", "jittered_grid"):
        _require(p["side"] >= 2, f"{kind}: side must be >= 2")
        _require(p["side"] ** p["dim"] <= 2_000_000, f"{kind}: grid too large")
    if kind == "jittered_grid":
        _require(int(p["margin"]) == p["margin"] and p["margin"] >= 0, "jittered_grid: margin must be >= 0")
    if kind == "spiral":
        _require(0 <= p["theta_min"] < p["theta_max"], "spiral: need 0 <= theta_min < theta_max")
    if kind == "gauss_clusters":
        _require(len(p["centers"]) == len(p["stds"]) == len(p["counts"]) >= 1,
                 "gauss_clusters: centers, stds and counts must have equal nonzero length")
        _require(all(s > 0 for s in p["stds"]), "gauss_clusters: stds must be positive")
        _require(all(int(c) == c and c >= 1 for c in p["counts"]), "gauss_clusters: counts must be positive")
        _require(len({len(c) for c in p["centers"]}) == 1, "gauss_clusters: centers must share a dimension")
    if kind == "swiss_cheese":
        for hole in p["holes"]:
            _require(len(hole) == 3 and hole[2] > 0, "swiss_cheese: holes are (cx, cy, radius) with radius > 0")
        free = 1.0 - sum(np.pi * h[2] ** 2 for h in p["holes"])
        _require(free > 0.05, "swiss_cheese: holes cover the square")
    if kind == "horseshoe":
        _require(0 < p["r_inner"] < p["r_outer"], "horseshoe: need 0 < r_inner < r_outer")
        _require(0 < p["opening"] < np.pi, "horseshoe: opening half-angle must be in (0, pi)")
    if kind == "ball":
        _require(p["distribution"] in ("uniform", "normal"), "ball: distribution must be uniform or normal")
        _require(0 < p["boundary_norm"], "ball: boundary_norm must be positive")
    if kind == "stingray":
        _require(p["spacing"] < p["radius"], "stingray: spacing must be smaller than the radius")
        _require(0 <= p["body_jitter"] < 0.5, "stingray: body_jitter must be in [0, 0.5)")


def generate(spec: DatasetSpec) -> PointCloud:
    """Generate the point cloud described by ``spec``.

    Examples
    --------
    >>> pc = generate(DatasetSpec("grid", dict(dim=1, side=5)))
    >>> pc.coords.ravel().tolist()
    [0.0, 1.0, 2.0, 3.0, 4.0]
    """
    rng = np.random.default_rng(spec.seed)
    coords, meta = _GENERATORS[spec.kind](spec.params, rng)
    meta = dict(meta)
    meta.setdefault("kind", spec.kind)
    return PointCloud(coords, meta=meta, seed=spec.seed)


def _lattice(p):
    dim, side, h = int(p["dim"]), int(p["side"]), float(p["spacing"])
    idx = np.stack(np.meshgrid(*[np.arange(side)] * dim, indexing="ij"), axis=-1).reshape(-1, dim)
    if p["lattice"] == "triangular":
        x = (idx[:, 0] + 0.5 * (idx[:, 1] % 2)) * h
        y = idx[:, 1] * (np.sqrt(3) / 2) * h
        coords = np.stack([x, y], axis=1)
    else:
        coords = idx * h
    return coords, idx


def _grid(p, rng):
    coords, idx = _lattice(p)
    side = int(p["side"])
    interior = np.all((idx > 0) & (idx < side - 1), axis=1)
    return coords, {"interior": interior, "index": idx}


def _jittered_grid(p, rng):
    coords, idx = _lattice(p)
    side, margin = int(p["side"]), int(p["margin"])
    coords = coords + rng.normal(scale=p["jitter"] * p["spacing"], size=coords.shape)
    interior = np.all((idx >= margin) & (idx < side - margin), axis=1)
    return coords, {"interior": interior, "index": idx}


def _stingray(p, rng):
    h, radius = p["spacing"], p["radius"]
    k = int(np.floor(radius / h + 1e-9))
    ax = np.arange(-k, k + 1) * h
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    body = np.stack([gx.ravel(), gy.ravel()], axis=1)
    # uniform jitter (fraction of the spacing) breaks the lattice's exact ties
    body = body + rng.uniform(-1, 1, size=body.shape) * p["body_jitter"] * h
    body = body[np.hypot(body[:, 0], body[:, 1]) <= radius + 1e-9 * radius]
    # tail leaves the rim at (radius, 0) along the outward normal, bending on a circle
    n_tail = int(np.floor(p["tail_length"] / h + 1e-9))
    s = np.arange(1, n_tail + 1) * h
    rc = p["tail_curvature_radius"]
    tail = np.stack([radius + rc * np.sin(s / rc), rc * (1 - np.cos(s / rc))], axis=1)
    coords = np.vstack([body, tail])
    tail_s = np.concatenate([np.zeros(len(body)), s])
    part = np.array(["body"] * len(body) + ["tail"] * len(tail))
    keep = rng.random(len(coords)) >= p["delete"]
    coords, tail_s, part = coords[keep], tail_s[keep], part[keep]
    rim = (part == "body") & (np.hypot(coords[:, 0], coords[:, 1]) > radius - 1.5 * h)
    return coords, {"part": part, "tail_s": tail_s, "rim": rim}


def _archimedean_arclength(theta, b):
    return 0.5 * b * (theta * np.sqrt(1 + theta ** 2) + np.arcsinh(theta))


def _spiral(p, rng):
    b = p["arm_gap"] / (2 * np.pi)
    s0 = _archimedean_arclength(p["theta_min"], b)
    s1 = _archimedean_arclength(p["theta_max"], b)
    n = int(p["n"])
    if p["sampling"] == "even":
        s = np.linspace(s0, s1, n)
    else:
        s = np.sort(rng.uniform(s0, s1, n))
    table = np.linspace(p["theta_min"], p["theta_max"], 200001)
    theta = np.interp(s, _archimedean_arclength(table, b), table)
    r = b * theta
    coords = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return coords, {"arclength": s - s0, "theta": theta}


def _bent_plane(p, rng):
    a, n = p["a"], int(p["n"])
    if p["sampling"] == "even":
        m = max(2, int(round(np.sqrt(n * 2 * p["s_max"] / p["width"]))))
        k = max(2, int(round(n / m)))
        ss, zz = np.meshgrid(np.linspace(-p["s_max"], p["s_max"], m), np.linspace(0, p["width"], k),
                             indexing="ij")
        s, z = ss.ravel(), zz.ravel()
    else:
        s = rng.uniform(-p["s_max"], p["s_max"], n)
        z = rng.uniform(0, p["width"], n)
    # unit-speed catenary: arc length s measured from the vertex
    x = a * np.arcsinh(s / a)
    y = np.sqrt(a ** 2 + s ** 2) - a
    coords = np.stack([x, y, z], axis=1)
    return coords, {"flat": np.stack([s, z], axis=1)}


def _cylinder5d(p, rng):
    n = int(p["n"])
    axis = rng.uniform(0, p["length"], n)
    g = rng.normal(size=(n, 5))
    sphere = p["radius"] * g / np.linalg.norm(g, axis=1, keepdims=True)
    return np.column_stack([axis, sphere]), {"axis": axis}


def _gauss_clusters(p, rng):
    pts, labels = [], []
    for label, (c, sd, cnt) in enumerate(zip(p["centers"], p["stds"], p["counts"])):
        c = np.asarray(c, dtype=float)
        pts.append(c + rng.normal(scale=sd, size=(int(cnt), len(c))))
        labels.append(np.full(int(cnt), label))
    return np.vstack(pts), {"cluster": np.concatenate(labels)}


def _in_holes(x, holes):
    inside = np.zeros(len(x), dtype=bool)
    for cx, cy, r in holes:
        inside |= np.hypot(x[:, 0] - cx, x[:, 1] - cy) < r
    return inside


def _swiss_cheese(p, rng):
    n, holes = int(p["n"]), [tuple(map(float, h)) for h in p["holes"]]
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.random((2 * (n - len(out)) + 16, 2))
        out = np.vstack([out, cand[~_in_holes(cand, holes)]])
    out = out[:n]
    return out, {"holes": np.array(holes)}


def _horseshoe(p, rng):
    n = int(p["n"])
    r_in, r_out, gap = p["r_inner"], p["r_outer"], p["opening"]
    # area-uniform sampling of an annular sector opening upwards
    r = np.sqrt(rng.uniform(r_in ** 2, r_out ** 2, n))
    phi = rng.uniform(gap, 2 * np.pi - gap, n) + np.pi / 2
    coords = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    return coords, {"angle": phi - np.pi / 2, "radius": r}


def _ball(p, rng):
    dim, n = int(p["dim"]), int(p["n"])
    g = rng.normal(size=(n, dim))
    if p["distribution"] == "uniform":
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g *= rng.random(n)[:, None] ** (1.0 / dim)
    norm = np.linalg.norm(g, axis=1)
    return g, {"norm": norm, "interior": norm <= p["boundary_norm"]}


_GENERATORS = {
    "grid": _grid,
    "jittered_grid": _jittered_grid,
    "stingray": _stingray,
    "spiral": _spiral,
    "bent_plane": _bent_plane,
    "cylinder5d": _cylinder5d,
    "gauss_clusters": _gauss_clusters,
    "swiss_cheese": _swiss_cheese,
    "horseshoe": _horseshoe,
    "ball": _ball,
}


# ----------------------------------------------------------------------------
# I/O

def _read_numeric_csv(path, header=False):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows (row lengths {sorted(widths)})")
    return np.array(rows)


def load_points(path, format: str = "coords", header: bool = False):
    """Read a coordinate CSV (rows are points) or a distance-matrix CSV.

    Parameters
    ----------
    path : str or Path
    format : {'coords', 'distances'}
    header : bool
        Skip the first row.

    Returns
    -------
    PointCloud for ``format='coords'``; DistanceMatrix for ``'distances'``.
    """
    data = _read_numeric_csv(path, header=header)
    if format == "coords":
        return PointCloud(data, meta={"source": str(path)})
    if format == "distances":
        return DistanceMatrix(data)
    raise ValueError(f"unknown format {format!r}; expected 'coords' or 'distances'")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_points(pc: PointCloud, path, spec: DatasetSpec | None = None):
    """Write coordinates as a header-less CSV and a ``.json`` sidecar.

    Returns the pair of written paths.
    """
    path = Path(path)
    np.savetxt(path, pc.coords, delimiter=",", fmt="%.17g")
    sidecar = path.with_suffix(".json")
    payload = {
        "spec": spec.to_dict() if spec is not None else None,
        "seed": pc.seed,
        "n_points": pc.n_points,
        "n_dims": pc.n_dims,
        "meta": _jsonable(pc.meta),
    }
    sidecar.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path, sidecar
