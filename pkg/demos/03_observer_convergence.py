"""
Observer convergence from falsified initial data
================================================

Only one of the three topologies yields a Hurwitz observer. Stretching its
dwell time until the matrix-measure certificate holds makes the observer
error contract over every switching cycle.
"""

import math

import numpy as np

from topswitch import (ObserverConfig, build_schedule, certified_dwell_multipliers,
                       distinct_eigenvalue_check, dwell_times, hurwitz_check, laplacian,
                       lyapunov_weight, matrix_measure_certificate, observer_matrix, period,
                       run_observer, suggest_dwell_params)
from topswitch.dynamics import system_matrix

from _common import G1, G2, H, Z0, Z_FALSE, save_figure

graphs = [G1, G2, H]
cfg = ObserverConfig.uniform([0], 10.0)
obs = [observer_matrix(g, cfg) for g in graphs]
for name, g, Ao in zip("G1 G2 H".split(), graphs, obs):
    print(f"{name}: distinct eigenvalues {distinct_eigenvalue_check(g)}, "
          f"Hurwitz observer {hurwitz_check(Ao)}")

# G2 has distinct eigenvalues yet its eigenvector [0, 2, -1, -1] vanishes
# at agent 1, so that mode stays undamped; only H gives a Hurwitz observer
P = lyapunov_weight(obs[2])
target = math.log(1e-2 / np.linalg.cond(P)) - 1.0
ms = certified_dwell_multipliers(obs, [period(g) for g in graphs], 0.2, 2, P, target=target)
schedule = build_schedule(dwell_times(graphs, suggest_dwell_params(graphs, m=ms)))
cert = matrix_measure_certificate(obs, schedule.dwell, P)
print("dwell multipliers:", ms)
print(f"dwell times: {[round(t, 3) for t in schedule.dwell]}")
print(f"certificate value {cert.value:.3e} (passed: {cert.passed})")

run = run_observer([system_matrix(laplacian(g)) for g in graphs], obs, schedule, cfg,
                   Z0, Z_FALSE, schedule.cycle, sample_dt=0.5)
norm = np.linalg.norm(run.error, axis=1)
print(f"error norm: start {norm[0]:.3g}, after one cycle {norm[-1]:.3g}")


def draw(plt):
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.semilogy(run.t, norm + 1e-300)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("|observer error|")
    return fig


save_figure("03_observer_convergence", draw)
