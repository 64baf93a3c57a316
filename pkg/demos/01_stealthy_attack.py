"""
A stealthy attack on two topologies
===================================

Agents 2-4 inject an exponentially growing input while agent 1, the only
monitored agent, sees exactly what it would see without the attack.
"""

import numpy as np

from topswitch import (build_schedule, detectability_check, dwell_times, laplacian,
                       suggest_dwell_params, synthesize_zda)
from topswitch.dynamics import Forcing, output_matrix, simulate, system_matrix

from _common import G1, G2, Z0, save_figure

graphs = [G1, G2]
A = [system_matrix(laplacian(g)) for g in graphs]
C = output_matrix(4, [0])

# the two topologies differ only on edge (3, 4), so the union difference
# graph leaves agent 2 and the pair {3, 4} without a monitored agent
det = detectability_check(graphs, [0])
print("detectable:", det.detectable)
print("unmonitored components:", [sorted(i + 1 for i in c) for c in det.witness])

# dwell times that satisfy every side condition; both equal pi/2 + 0.2
params = suggest_dwell_params(graphs, tau_hat=0.2, m=1)
schedule = build_schedule(dwell_times(graphs, params))
print("dwell times:", schedule.dwell)

# search for an attack that agents 2-4 can carry out
plan = synthesize_zda(A, C, [0.0161], misbehaving=[1, 2, 3])
print("attack gains g:", plan.g)
print("initial perturbation of x:", plan.z_breve0[:4])

horizon = 1200.0
nominal = simulate(A, schedule, Z0, horizon, 0.5, C=C)
attacked = simulate(A, schedule, Z0 + plan.z_breve0, horizon, 0.5,
                    forcing=Forcing(plan.g_full, plan.eta, plan.rho), C=C)

dev = attacked.z - nominal.z
print(f"largest state deviation: {np.max(np.abs(dev)):.3g}")
print(f"largest deviation of the monitored output: {np.max(np.abs(attacked.y - nominal.y)):.2e}")


def draw(plt):
    fig, ax = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax[0].semilogy(attacked.t, np.abs(dev[:, 4:]) + 1e-16)
    ax[0].set_ylabel("|velocity deviation|")
    ax[1].plot(attacked.t, (attacked.y - nominal.y)[:, 0])
    ax[1].set_ylabel("output deviation, agent 1")
    ax[1].set_xlabel("t (s)")
    return fig


save_figure("01_stealthy_attack", draw)
