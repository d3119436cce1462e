"""The iterated pruning loop on three shapes.

Gaussian clusters separate into their components.  On the stingray and the
swiss cheese the Gabriel graph already keeps clear of the tail-to-body gap
and of the holes; the loop then removes only the few edges that are long
for their neighborhood, and the geometry checks stay clean.

Run: python demos/02_pruning_loop.py
"""
import logging

import numpy as np

from ian import DatasetSpec, IANConfig, generate, pairwise_distances, run_ian

logging.basicConfig(level=logging.INFO, format="%(message)s")

pc = generate(DatasetSpec("gauss_clusters", seed=0))
d = pairwise_distances(pc)
res = run_ian(d, build_weighted=False)
print("clusters")
for h in res.history:
    print(f"  it {h.iteration}: {h.n_edges} edges, C={h.c:.3f}, median {h.median:.3f}, "
          f"{h.n_outliers} outliers")
ncomp, labels = res.g_star.components()
print(f"  {ncomp} components, sizes {np.bincount(labels).tolist()}")

pc = generate(DatasetSpec("stingray", seed=0))
d = pairwise_distances(pc)
res = run_ian(d, build_weighted=False)
part, s = pc.meta["part"], pc.meta["tail_s"]
far = (part == "tail") & (s > 0.5)


def shortcuts(g):
    e = g.edges
    return int(np.sum((far[e[:, 0]] & (part[e[:, 1]] == "body"))
                      | (far[e[:, 1]] & (part[e[:, 0]] == "body"))))


h = np.median(res.g0.edge_lengths(d))
print(f"\nstingray: {res.g0.n_edges} -> {res.g_star.n_edges} edges in {res.iterations} iterations")
print(f"  pruned edge lengths / median edge: {[round(float(d.d[i, j] / h), 2) for i, j in res.pruned]}")
print(f"  tail-to-body shortcuts: {shortcuts(res.g0)} before, {shortcuts(res.g_star)} after")

pc = generate(DatasetSpec("swiss_cheese", {"n": 1500}, seed=1))
d = pairwise_distances(pc)
res = run_ian(d, IANConfig(c_search="bisect"), build_weighted=False)
x = pc.coords


def crossing(g):
    e = g.edges
    a, b = x[e[:, 0]], x[e[:, 1]]
    count = 0
    for cx, cy, r in pc.meta["holes"]:
        c = np.array([cx, cy])
        t = np.clip(((c - a) * (b - a)).sum(1) / ((b - a) ** 2).sum(1), 0, 1)
        count += int(np.sum(np.linalg.norm(a + t[:, None] * (b - a) - c, axis=1) < 0.9 * r))
    return count


print(f"\nswiss cheese: {res.g0.n_edges} -> {res.g_star.n_edges} edges in {res.iterations} iterations")
print(f"  edges reaching into a hole {crossing(res.g0)} before, "
      f"{crossing(res.g_star)} after")
