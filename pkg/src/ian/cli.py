"""Command-line entry point.

Subcommands::

    ian gen      --kind KIND [--<param> VALUE ...] [--seed S] --out DIR
    ian run      INPUT --out DIR [IAN options]
    ian geodesic INPUT --out DIR [--run DIR] --method {graph,heat} --source {N,medoid}
    ian dim      INPUT --out DIR [--run DIR] --method {ncd,mle,both}
    ian embed    INPUT --out DIR [--run DIR] --method {diffusion,isomap}
    ian replay   MANIFEST [--out DIR]

Every command writes only inside ``--out`` and leaves a ``manifest.json``
there from which it can be replayed.  Exit codes: 0 success, 2 the loop hit
its iteration cap, 64 usage error, 65 bad or missing data.
"""
from __future__ import annotations

import argparse
import ast
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DatasetSpec, DistanceMatrix, KINDS, generate, load_points, pairwise_distances, save_points
from .dimension import knn_neighborhoods, graph_neighborhoods, mle_dimension, ncd_dimension, save_dimension, save_mle
from .driver import IANConfig, run_ian
from .embedding import diffusion_map, isomap, save_embedding
from .gabriel import NeighborGraph, gabriel_graph
from .geodesics import graph_geodesics, heat_geodesics, medoid, save_geodesic
from .kernel_stats import WeightedGraph, multiscale_kernel, save_volume_ratios, tune_C
from .scale_opt import ScaleVector, save_sigma

__all__ = [
    "main",
    "RunManifest",
    "UsageError",
    "DataError",
    "save_edges",
    "load_edges",
    "save_weights",
    "load_sigma",
    "read_config",
    "EXIT_OK",
    "EXIT_NOT_CONVERGED",
    "EXIT_USAGE",
    "EXIT_DATA",
]

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

log = logging.getLogger("ian")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    """Record of one command: enough to replay it and to find its outputs."""

    command: str
    input: str | None
    config: dict
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        p = out_dir / "manifest.json"
        p.write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return p

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


# ----------------------------------------------------------------------------
# file formats

def save_edges(g: NeighborGraph, d, path) -> None:
    """TSV ``i, j, r_ij`` with a header line."""
    r = g.edge_lengths(d)
    with open(path, "w") as fh:
        fh.write("i\tj\tr_ij\n")
        for (i, j), v in zip(g.edges, r):
            fh.write(f"{i}\t{j}\t{float(v)!r}\n")


def load_edges(path, n_nodes: int) -> NeighborGraph:
    try:
        rows = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2, usecols=(0, 1))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return NeighborGraph(n_nodes, rows.astype(np.int64).reshape(-1, 2))


def save_weights(w: WeightedGraph, path) -> None:
    """TSV ``i, j, w`` over the upper triangle of the kernel."""
    i, j, v = w.edges()
    with open(path, "w") as fh:
        fh.write("i\tj\tw\n")
        for a, b, x in zip(i, j, v):
            fh.write(f"{a}\t{b}\t{float(x)!r}\n")


def load_sigma(path) -> ScaleVector:
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return ScaleVector(rows[:, 1], float("nan"))


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys may use - or _."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _write_svg(path, xy, edges=(), values=None) -> None:
    """Scatter of 2-D points with optional edges; a minimal hand-written SVG."""
    xy = np.asarray(xy, dtype=float)
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    size, pad = 600.0, 20.0
    p = (xy - lo) / span * (size - 2 * pad) + pad
    p[:, 1] = size - p[:, 1]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}">',
             '<rect width="100%" height="100%" fill="white"/>']
    for i, j in edges:
        parts.append(f'<line x1="{p[i, 0]:.2f}" y1="{p[i, 1]:.2f}" x2="{p[j, 0]:.2f}" '
                     f'y2="{p[j, 1]:.2f}" stroke="#888" stroke-width="0.6"/>')
    if values is not None:
        v = np.asarray(values, dtype=float)
        ok = np.isfinite(v)
        vmin, vmax = (v[ok].min(), v[ok].max()) if ok.any() else (0.0, 1.0)
        t = np.where(ok, (v - vmin) / ((vmax - vmin) or 1.0), 0.0)
    for k in range(len(p)):
        color = "#222"
        if values is not None:
            color = f"rgb({int(255 * t[k])},40,{int(255 * (1 - t[k]))})"
        parts.append(f'<circle cx="{p[k, 0]:.2f}" cy="{p[k, 1]:.2f}" r="2" fill="{color}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# ----------------------------------------------------------------------------
# shared plumbing

def _load_input(args):
    try:
        obj = load_points(args.input, format=args.format, header=args.header)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load {args.input}: {exc}") from None
    if isinstance(obj, DistanceMatrix):
        return None, obj
    return obj, pairwise_distances(obj)


def _config_from_args(args) -> IANConfig:
    try:
        return IANConfig(policy=args.policy, convergence=args.convergence,
                         keep_connected=args.keep_connected, max_iterations=args.max_iterations,
                         c_fixed=args.c_fixed, threshold_k=args.threshold_k,
                         c_search=args.c_search, lp_weights=args.lp_weights,
                         n_threads=args.threads, include_self=not args.exclude_self)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _graph_and_scales(args, d, need_scales: bool):
    """G* (or the Gabriel graph) and matching scales, from a run directory or computed here."""
    n = len(d)
    if args.graph == "gabriel":
        g = gabriel_graph(d, n_threads=args.threads)
        s = tune_C(g, d, n_threads=args.threads).scales if need_scales else None
        return g, s
    if args.run is not None:
        run = Path(args.run)
        for name in ("edges.tsv", "sigma.csv"):
            if not (run / name).exists():
                raise DataError(f"missing prerequisite file {run / name}; run `ian run` first")
        g = load_edges(run / "edges.tsv", n)
        s = load_sigma(run / "sigma.csv")
        if len(s) != n:
            raise DataError(f"{run / 'sigma.csv'} has {len(s)} scales for {n} points")
        return g, s
    res = run_ian(d, IANConfig(n_threads=args.threads), build_weighted=False)
    return res.g_star, res.sigma_star


def _source(arg: str, d) -> int:
    if arg == "medoid":
        return medoid(d)
    try:
        k = int(arg)
    except ValueError:
        raise UsageError(f"source must be an integer or 'medoid', got {arg!r}") from None
    if not 0 <= k < len(d):
        raise UsageError(f"source {k} out of range for {len(d)} points")
    return k


# ----------------------------------------------------------------------------
# commands

def _parse_value(v: str):
    try:
        return ast.literal_eval(v)
    except (ValueError, SyntaxError):
        return v


def cmd_gen(args, extra) -> tuple[int, list]:
    params = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise UsageError(f"missing value for --{key}")
        params[key] = _parse_value(val)
    try:
        spec = DatasetSpec(args.kind, params, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pc = generate(spec)
    csv_path, meta_path = save_points(pc, args.out / "points.csv", spec)
    outs = [csv_path, meta_path]
    if args.svg and pc.n_dims == 2:
        _write_svg(args.out / "points.svg", pc.coords)
        outs.append(args.out / "points.svg")
    return EXIT_OK, outs


def cmd_run(args) -> tuple[int, list]:
    pc, d = _load_input(args)
    cfg = _config_from_args(args)
    res = run_ian(d, cfg)
    out = args.out
    outs = [out / "edges.tsv", out / "weights.tsv", out / "sigma.csv", out / "delta.csv",
            out / "summary.json"]
    save_edges(res.g_star, d, outs[0])
    save_weights(res.weighted_star, outs[1])
    save_sigma(res.sigma_star, outs[2])
    save_volume_ratios(res.stats, outs[3], cfg.convergence)
    summary = res.summary()
    summary["config"] = cfg.to_dict()
    outs[4].write_text(json.dumps(summary, indent=1, sort_keys=True, default=_json_default) + "\n")
    if args.svg and pc is not None and pc.n_dims == 2:
        _write_svg(out / "graph.svg", pc.coords, res.g_star.edges, res.stats.delta_prime)
        outs.append(out / "graph.svg")
    if not res.converged:
        log.warning("iteration cap reached before convergence")
        return EXIT_NOT_CONVERGED, outs
    return EXIT_OK, outs


def cmd_geodesic(args) -> tuple[int, list]:
    pc, d = _load_input(args)
    src = _source(args.source, d)
    g, s = _graph_and_scales(args, d, need_scales=args.method == "heat")
    if args.method == "graph":
        f = graph_geodesics(g, d, src)
    else:
        w = multiscale_kernel(d, s)
        try:
            f = heat_geodesics(w, d, src, t=args.t, normalize=args.normalize)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    p = args.out / f"geodesic_{args.method}.csv"
    save_geodesic(f, p)
    outs = [p]
    if args.svg and pc is not None and pc.n_dims == 2:
        _write_svg(args.out / f"geodesic_{args.method}.svg", pc.coords, g.edges, f.dist)
        outs.append(args.out / f"geodesic_{args.method}.svg")
    return EXIT_OK, outs


def cmd_dim(args) -> tuple[int, list]:
    _, d = _load_input(args)
    outs = []
    g = None
    if args.method in ("ncd", "both"):
        g, _ = _graph_and_scales(args, d, need_scales=False)
        est = ncd_dimension(g, d, hops=args.hops, n_threads=args.threads)
        p = args.out / "dim_ncd.csv"
        save_dimension(est, p)
        outs.append(p)
    if args.method in ("mle", "both"):
        if args.mle_graph:
            if g is None:
                g, _ = _graph_and_scales(args, d, need_scales=False)
            nbhd = graph_neighborhoods(g)
        else:
            if not 2 <= args.k < len(d):
                raise UsageError(f"k must lie in [2, {len(d) - 1}]")
            nbhd = knn_neighborhoods(d, args.k)
        try:
            m = mle_dimension(d, nbhd, use_inverse_average=args.inverse_average)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        p = args.out / "dim_mle.csv"
        save_mle(m, p)
        outs.append(p)
    return EXIT_OK, outs


def cmd_embed(args) -> tuple[int, list]:
    _, d = _load_input(args)
    g, s = _graph_and_scales(args, d, need_scales=args.method == "diffusion")
    if args.method == "diffusion":
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            e = diffusion_map(multiscale_kernel(d, s), m=args.m, alpha=args.alpha, t=args.t)
    else:
        try:
            e = isomap(g, d, m=args.m, n_threads=args.threads)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    p = args.out / f"embed_{args.method}.csv"
    save_embedding(e, p)
    q = args.out / f"embed_{args.method}.json"
    q.write_text(json.dumps({"method": e.method, "params": e.params,
                             "eigenvalues": [float(v) for v in e.eigenvalues]}, indent=1) + "\n")
    return EXIT_OK, [p, q]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


# ----------------------------------------------------------------------------
# parser

def _add_input(p):
    p.add_argument("input", help="coordinate CSV (rows are points) or distance-matrix CSV")
    p.add_argument("--format", choices=("coords", "distances"), default="coords")
    p.add_argument("--header", action="store_true", help="skip the first CSV row")


def _add_common(p):
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--svg", action="store_true", help="also draw 2-D data as SVG")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_graph_source(p):
    p.add_argument("--run", help="directory of a previous `ian run` (edges.tsv, sigma.csv)")
    p.add_argument("--graph", choices=("star", "gabriel"), default="star",
                   help="converged graph (default) or the plain Gabriel graph with tuned scales")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="ian", description="Iterated adaptive neighborhoods toolkit")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="generate a synthetic dataset",
                       description="Kind parameters are passed as --<name> VALUE.")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("run", help="run the IAN loop")
    _add_input(p)
    _add_common(p)
    p.add_argument("--policy", default="one_edge_per_outlier",
                   choices=("one_edge_per_outlier", "single_global_edge"))
    p.add_argument("--convergence", default="delta_prime", choices=("delta_prime", "delta_prime_ms"))
    p.add_argument("--keep-connected", action="store_true")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--c-fixed", type=float, default=None, help="skip tuning and use this C")
    p.add_argument("--threshold-k", type=float, default=4.5)
    p.add_argument("--c-search", choices=("grid", "bisect"), default="grid")
    p.add_argument("--lp-weights", choices=("non_fn",), default=None)
    p.add_argument("--exclude-self", action="store_true",
                   help="leave the self term out of the volume ratio")

    p = sub.add_parser("geodesic", help="distances from a source node")
    _add_input(p)
    _add_common(p)
    _add_graph_source(p)
    p.add_argument("--method", choices=("graph", "heat"), default="graph")
    p.add_argument("--source", default="medoid", help="node index or 'medoid'")
    p.add_argument("--t", type=float, default=None, help="heat diffusion time")
    p.add_argument("--normalize", choices=("slope", "l2"), default="slope")

    p = sub.add_parser("dim", help="local intrinsic dimension")
    _add_input(p)
    _add_common(p)
    _add_graph_source(p)
    p.add_argument("--method", choices=("ncd", "mle", "both"), default="ncd")
    p.add_argument("--hops", type=int, default=3)
    p.add_argument("--k", type=int, default=32, help="neighbors for MLE")
    p.add_argument("--mle-graph", action="store_true", help="MLE on graph neighborhoods instead of k-NN")
    p.add_argument("--inverse-average", action="store_true", help="average inverse MLE estimates")

    p = sub.add_parser("embed", help="diffusion map or Isomap coordinates")
    _add_input(p)
    _add_common(p)
    _add_graph_source(p)
    p.add_argument("--method", choices=("diffusion", "isomap"), default="diffusion")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", type=Path, default=None, help="write elsewhere than the recorded directory")
    return top


_COMMANDS = {"run": cmd_run, "geodesic": cmd_geodesic, "dim": cmd_dim, "embed": cmd_embed}


def _coerce(sub, key, value):
    """Turn a config-file string into the type the matching flag expects."""
    for action in sub._actions:
        if action.dest != key or not action.option_strings:
            continue
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            v = value.lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key}: expected a boolean, got {value!r}")
            return v in ("true", "1", "yes")
        # string defaults go through the flag's type and choices on re-parse
        return value
    raise UsageError(f"unknown config key {key!r}")


def _parse(argv):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k: _coerce(sub, k, v) for k, v in read_config(args.config).items()})
        args, extra = parser.parse_known_args(argv)
    if extra and args.command != "gen":
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    return args, extra


def _record(args, extra) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k not in ("config", "verbose")}
    if extra:
        cfg["extra"] = list(extra)
    return cfg


def _replay_argv(m: RunManifest, out: Path | None) -> list:
    cfg = dict(m.config)
    cmd = cfg.pop("command")
    extra = cfg.pop("extra", [])
    if out is not None:
        cfg["out"] = str(out)
    argv = [cmd]
    if "input" in cfg:
        argv.append(cfg.pop("input"))
    for k, v in cfg.items():
        flag = "--" + k.replace("_", "-")
        if v is None or v is False:
            continue
        if v is True:
            argv.append(flag)
        else:
            argv += [flag, str(v)]
    return argv + list(extra)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, extra = _parse(argv)
        if args.command == "replay":
            try:
                m = RunManifest.read(args.manifest)
            except (OSError, ValueError, TypeError) as exc:
                raise DataError(f"cannot read manifest: {exc}") from None
            return main(_replay_argv(m, args.out))
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        if args.command == "gen":
            code, outs = cmd_gen(args, extra)
        else:
            code, outs = _COMMANDS[args.command](args)
        elapsed = time.perf_counter() - t0
        manifest = RunManifest(args.command, getattr(args, "input", None), _record(args, extra),
                               [str(p) for p in outs], {"total_s": round(elapsed, 3)})
        manifest.write(args.out)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, IndexError) as exc:
        # invariant violations raised inside the library, tagged with the raising module
        tb, mod = exc.__traceback__, ""
        while tb is not None:
            mod = tb.tb_frame.f_globals.get("__name__", "")
            tb = tb.tb_next
        print(f"data error [{mod}]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
