"""Morgan angles, the unit-ball Hausdorff distance and the canonical rotation.

Run with ``python3 demos/angles_and_rotations.py``.
"""
import math

import numpy as np

from conekit.planes import (canonical_rotation, graph_subspace, half_difference_singular_values,
                            morgan_angles, random_subspace, unit_ball_hausdorff)

rng = np.random.default_rng(3)

# Two 2-planes in R^4 given as graphs of small linear maps
L1 = np.array([[0.1, 0.0], [0.0, 0.2]])
L2 = np.zeros((2, 2))
a, b = graph_subspace(L1), graph_subspace(L2)
th = morgan_angles(a, b)
print("angles:", th.angles)
print("atan of the singular values of L1:", np.arctan([0.1, 0.2]))

# The Hausdorff distance of the unit discs is sin of the largest angle
print("hausdorff:", unit_ball_hausdorff(a, b), " sin(max):", math.sin(th.max))

# Small maps: angles sit between sigma/4 and 4 sigma, sigma from (L1 - L2) / 2
s = half_difference_singular_values(L1, L2)
print("sigma:", s, " ratio theta/sigma:", np.asarray(th.angles) / np.asarray(s))

# The canonical rotation maps alpha onto beta and is undone by R(beta, alpha)
alpha, beta = random_subspace(6, 3, rng), random_subspace(6, 3, rng)
R = canonical_rotation(alpha, beta)
moved = R @ alpha.frame
print("|R^T R - I| =", np.abs(R.T @ R - np.eye(6)).max())
print("det R =", np.linalg.det(R))
print("dist(R alpha, beta) =", np.linalg.norm(moved - beta.projector @ moved))
print("|R(a,b) R(b,a) - I| =", np.abs(R @ canonical_rotation(beta, alpha) - np.eye(6)).max())
