"""Tour of the monotone graph calculus behind the double-well potentials.

Each potential splits into a convex part, whose subdifferential is one of
three prototype monotone graphs, and a linear perturbation.  This script
evaluates the resolvent, the Yosida approximation, and the Moreau envelope
of each graph on a small grid, and shows the two standard bounds: the
Yosida value never exceeds the minimal section, and the envelope never
exceeds the convex primitive.
"""

import numpy as np

from chbs import (envelope, logarithmic_graph, minimal_section, obstacle_graph,
                  polynomial_graph, resolvent, yosida)
from chbs.monotone import beta_hat

GRAPHS = {
    "polynomial": (polynomial_graph(), np.linspace(-2.0, 2.0, 9)),
    "logarithmic": (logarithmic_graph(), np.linspace(-0.9, 0.9, 9)),
    "obstacle": (obstacle_graph(), np.linspace(-1.0, 1.0, 9)),
}

for eps in (0.5, 0.05):
    print(f"\n=== regularization parameter eps = {eps} ===")
    for name, (g, grid) in GRAPHS.items():
        j = resolvent(g, eps, grid)
        y = yosida(g, eps, grid)
        env = envelope(g, eps, grid)
        sec = minimal_section(g, grid)
        hat = beta_hat(g, grid)
        print(f"\n{name}:   r, resolvent, yosida, minimal section, envelope, primitive")
        for k in range(grid.size):
            print(f"  {grid[k]:+.3f}  {j[k]:+.4f}  {y[k]:+.4f}  {sec[k]:+.4f}"
                  f"  {env[k]:.4f}  {hat[k]:.4f}")
        assert np.all(np.abs(y) <= np.abs(sec) + 1e-12)
        assert np.all(env <= hat + 1e-12)
        print(f"  bounds hold: |yosida| <= |section|, envelope <= primitive")

# outside the obstacle domain the resolvent is the projection onto [-1, 1]
g = obstacle_graph()
print("\nobstacle graph outside [-1, 1]: resolvent(0.5, 3.0) =",
      resolvent(g, 0.5, 3.0), " yosida =", yosida(g, 0.5, 3.0))
