"""Pruning a cone of planes and splitting its gap scales into layers.

Run with ``python3 demos/cone_pruning_and_layers.py``.
"""
import numpy as np

from conekit.clusters import cluster_split
from conekit.cones import GapMatrix, isoclinic_cone, layer_subdivide, mu, prune, sigma

# Four 3-planes in R^5 through a common line, two nearly coincident pairs
S = isoclinic_cone(3, 2, [0.0, 0.002, 0.4, 0.401])
g = GapMatrix.from_cone(S)
print("gap matrix:\n", np.round(g.values, 4))
print("sigma =", sigma(S), " mu =", mu(S))

# At a scale D well below the big gap only one plane of each pair survives
cert = prune(g, 0.01 * g.max_over(range(S.N)), 0.5)
print("kept planes:", cert.I, " Gamma =", cert.Gamma)
for name, c in cert.checks.items():
    print(f"  {name}: {c['lhs']:.4g} vs {c['rhs']:.4g} ok={c['ok']}")

# The layer chain separates the two gap scales
layers = layer_subdivide(g, 1.0)
print("eta =", layers.eta, " chain:", layers.chain)
print("min gaps per layer:", layers.m)
print("max gaps per layer:", layers.M)

# The same two-scale structure seen as points on a line
A, B, split = cluster_split(np.array([[0.0], [0.002], [0.4], [0.401]]))
print("split:", A, B, split.constants)
