"""Comparing two repertoires by cluster masses and by graph edit distance.

Run: python3 demos/05_repertoire_distance.py
"""
# %%
from repgraph.repdist import (ClusterMass, LabeledGraph, ged_assignment, ged_exact, ged_normalized,
                              js_repertoire_distance)

print("sqrt-JS between (0.5, 0.5) and (0.9, 0.1):",
      round(js_repertoire_distance(ClusterMass([0.5, 0.5]), ClusterMass([0.9, 0.1])), 5))

# %% Node labels are CDR3s; substituting one costs its normalized edit distance.
a = LabeledGraph(("CASSLG", "CASSLE", "CASRQG"), {(0, 1): 0.9, (1, 2): 0.7})
b = LabeledGraph(("CASSLG", "CASSLQ", "CASRQG", "CSARDG"), {(0, 1): 0.8, (1, 2): 0.7, (0, 2): 0.6})
exact = ged_exact(a, b)
approx = ged_assignment(a, b)
print(f"exact GED {exact:.4f}, assignment bound {approx:.4f}, normalized {ged_normalized(exact, a, b):.4f}")
