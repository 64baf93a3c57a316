"""Topologies shared by the demo scripts and an optional figure helper."""

from pathlib import Path

import numpy as np

from topswitch import WeightedGraph

# four agents, agent 1 monitored; every topology has period pi
G1 = WeightedGraph.from_edges(4, [(0, 1, 4), (0, 2, 4), (0, 3, 4)])
G2 = WeightedGraph.from_edges(4, [(0, 1, 4), (0, 2, 4), (0, 3, 4), (2, 3, 16)])
H = WeightedGraph.from_edges(4, [(0, 1, 16), (0, 2, 4), (1, 2, 4), (2, 3, 4)])

Z0 = np.array([1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0])
Z_FALSE = np.array([1.0, 1.0, 3.0, 5.0, 1.0, 1.0, 4.0, 4.0])

OUT = Path(__file__).resolve().parent / "out"


def save_figure(name, draw):
    """Call ``draw(plt)`` and save to ``demos/out/<name>.png`` if matplotlib exists."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("(matplotlib not installed, figure skipped)")
        return
    OUT.mkdir(exist_ok=True)
    fig = draw(plt)
    fig.tight_layout()
    fig.savefig(OUT / f"{name}.png", dpi=120)
    plt.close(fig)
    print(f"figure written to {OUT / (name + '.png')}")
