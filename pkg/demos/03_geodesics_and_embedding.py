"""Geodesics and embeddings on the bent plane and the spiral.

The bent plane is a catenary swept along a line, so its unrolled
coordinates are known.  Heat geodesics from the medoid are compared to true
geodesic distances, and Isomap on G* is compared to the flat sheet.  The
spiral's diffusion map is compared to its arc length.

Shortest paths zig-zag through a random sample, so graph distances run
about a tenth long.  Their ranks are still right, and a single global
scale takes out most of the Isomap distortion.

Run: python demos/03_geodesics_and_embedding.py
"""
import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from ian import DatasetSpec, generate, pairwise_distances, run_ian
from ian.embedding import diffusion_map, isomap
from ian.geodesics import graph_geodesics, heat_geodesics, medoid

pc = generate(DatasetSpec("bent_plane", seed=0))
d = pairwise_distances(pc)
res = run_ian(d)
src = medoid(d)
flat = pc.meta["flat"]
true = np.linalg.norm(flat - flat[src], axis=1)
m = true > 0
for name, f in (("graph", graph_geodesics(res.g_star, d, src)),
                ("heat", heat_geodesics(res.weighted_star, d, src))):
    rel = np.mean(np.abs(f.dist[m] - true[m]) / true[m])
    print(f"{name:5s} geodesics: Spearman {spearmanr(f.dist, true).statistic:.4f}, "
          f"mean relative error {rel:.3f}")

e = isomap(res.g_star, d, m=2)
a, b = pdist(e.coords), pdist(flat)
lam = (a @ b) / (a @ a)
print(f"Isomap on G*: distortion {np.mean(np.abs(a - b) / b):.3f} raw, "
      f"{np.mean(np.abs(lam * a - b) / b):.3f} after a global scale of {lam:.3f}")

pc = generate(DatasetSpec("spiral", seed=0))
d = pairwise_distances(pc)
res = run_ian(d)
dm = diffusion_map(res.weighted_star, m=2)
rho = spearmanr(dm.coords[:, 0], pc.meta["arclength"]).statistic
print(f"\nspiral diffusion map: leading coordinate vs arc length, Spearman {rho:+.4f}")
