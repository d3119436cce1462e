"""Local intrinsic dimension on the stingray.

The body is a disc and the tail a curve.  The neighborhood correlation
dimension on G* reads about 2 and 1.  The k-NN maximum likelihood estimate
reads high at small k, because the body is a jittered lattice whose first
few neighbors sit at nearly equal distances.

Run: python demos/04_dimension.py
"""
import numpy as np

from ian import DatasetSpec, generate, pairwise_distances, run_ian
from ian.dimension import knn_neighborhoods, mle_dimension, ncd_dimension

pc = generate(DatasetSpec("stingray", seed=0))
d = pairwise_distances(pc)
res = run_ian(d, build_weighted=False)
ncd = ncd_dimension(res.g_star, d)
part = pc.meta["part"]
for name in ("body", "tail"):
    v = ncd.d_star[part == name]
    print(f"NCD {name}: mean {v.mean():.2f}, quartiles {np.round(np.percentile(v, [25, 75]), 2)}")

for k in (5, 10, 20):
    m = mle_dimension(d, knn_neighborhoods(d, k), use_inverse_average=True).m_k
    print(f"MLE k={k:2d}: body {m[part == 'body'].mean():.2f}, tail {m[part == 'tail'].mean():.2f}")
