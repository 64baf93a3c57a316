"""Topologies and helpers shared by the test modules.

All fixtures use four agents with agent 1 (index 0) monitored. Every
topology has spectrum in {0, 4, 16, 36}, so each has period pi.
"""

import numpy as np

from topswitch.graph import WeightedGraph, laplacian
from topswitch.dynamics import output_matrix, system_matrix

# star centred at agent 1, weight 4: spectrum {0, 4, 4, 16}
G1 = WeightedGraph.from_edges(4, [(0, 1, 4), (0, 2, 4), (0, 3, 4)])
# G1 plus edge (3, 4) of weight 16: spectrum {0, 4, 16, 36}
G2 = WeightedGraph.from_edges(4, [(0, 1, 4), (0, 2, 4), (0, 3, 4), (2, 3, 16)])
# third topology that makes the union difference graph connected
H = WeightedGraph.from_edges(4, [(0, 1, 16), (0, 2, 4), (1, 2, 4), (2, 3, 4)])

# common eigenvector of L(G1) and L(G2) (eigenvalue 4) that vanishes at agent 1
X_STAR = np.array([0.0, 2.0, -1.0, -1.0])

TAU = np.pi / 2 + 0.2
ETA = 0.0161
X0 = np.array([1.0, 2.0, 3.0, 4.0])
V0 = np.array([1.0, 2.0, 3.0, 4.0])
Z0 = np.concatenate([X0, V0])
# falsified observer initial data
Z_FALSE = np.array([1.0, 1.0, 3.0, 5.0, 1.0, 1.0, 4.0, 4.0])

MONITORED = (0,)
C = output_matrix(4, MONITORED)


def systems(*graphs):
    return [system_matrix(laplacian(g)) for g in graphs]


def xstar_plan_point(eta=ETA, amplitude=1e-3):
    """Kernel point ``(z_breve, g)`` along the common eigenvector."""
    c = amplitude / (2.0 * (4.0 + eta**2))
    g = (4.0 + eta**2) * c * X_STAR
    z = np.concatenate([c * X_STAR, eta * c * X_STAR])
    return z, g


def random_connected_graph(rng, n, low=0.5, high=5.0, extra=0.4):
    """Random spanning tree plus random extra edges, continuous weights."""
    w = np.zeros((n, n))
    perm = rng.permutation(n)
    for k in range(1, n):
        i, j = perm[k], perm[rng.integers(0, k)]
        w[i, j] = w[j, i] = rng.uniform(low, high)
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] == 0 and rng.random() < extra:
                w[i, j] = w[j, i] = rng.uniform(low, high)
    return WeightedGraph(w)
