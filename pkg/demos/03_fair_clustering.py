"""Cohesion versus equity: JS and WCD penalties on a small rare-subgroup instance.

Run: python3 demos/03_fair_clustering.py
"""
# %% 30 points: five blobs each hold two rare points and one major point,
# each next to a blob of three major points.
import numpy as np

from repgraph.faircluster import FairnessConfig, equity_report, fair_partition

rng = np.random.default_rng(0)
pts, groups = [], []
for p in range(5):
    centre = np.array([20.0 * p, 0.0])
    for g in ("rare", "rare", "major"):
        pts.append(centre + rng.normal(0, 0.05, 2))
        groups.append(g)
    for _ in range(3):
        pts.append(centre + [0.3, 0.0] + rng.normal(0, 0.05, 2))
        groups.append("major")
x = np.array(pts)

# %% Unpenalized, JS-penalized and WCD-penalized runs with k=10.
for mode, lam in (("js", 0.0), ("js", 20.0), ("wcd", 20.0)):
    part = fair_partition(x, 10, FairnessConfig(mode, lam, tau_g=0.2), groups, seed=0)
    rep = equity_report(part)
    print(f"{mode:>3} lambda={lam:>4}: coverage(rare)={rep.coverage['rare']:.2f} d_eq={rep.d_eq:.3f} "
          f"js_disparity={rep.js_disparity:.4f}")
# JS pushes every cluster toward proportional shares, so rare points scatter;
# WCD rewards clusters that reach the target coverage of 0.2.
