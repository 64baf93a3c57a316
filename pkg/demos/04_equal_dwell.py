"""
Why dwell times matter
======================

With equal dwell times the cycle map of the observer error can expand,
and the agent dynamics themselves never contract disagreement: every
topology gives a Hamiltonian flow.
"""

import numpy as np
from scipy.linalg import expm

from topswitch import ObserverConfig, laplacian, lyapunov_weight, matrix_measure_certificate
from topswitch import observer_matrix
from topswitch.dynamics import system_matrix

from _common import G1, G2, H, save_figure

graphs = [G1, G2, H]
tau = np.pi / 2 + 0.2


def cycle_map(mats, taus):
    M = np.eye(mats[0].shape[0])
    for A, t in zip(mats, taus):
        M = expm(A * t) @ M
    return M


print("observer error, equal dwell times pi/2 + 0.2:")
gains = np.logspace(-6, 3, 10)
radius = []
for gain in gains:
    cfg = ObserverConfig.uniform([0], gain)
    obs = [observer_matrix(g, cfg) for g in graphs]
    rho = max(abs(np.linalg.eigvals(cycle_map(obs, [tau] * 3))))
    cert = matrix_measure_certificate(obs, [tau] * 3, lyapunov_weight(obs[2]))
    radius.append(rho)
    print(f"  gain {gain:8.0e}: cycle spectral radius {rho:.4f}, certificate {cert.value:+.3e}")

plant = cycle_map([system_matrix(laplacian(g)) for g in graphs], [tau] * 3)
lam = np.linalg.eigvals(plant)
print("agent dynamics, cycle eigenvalue moduli:", np.round(np.abs(lam), 12))
J = np.block([[np.zeros((4, 4)), np.eye(4)], [-np.eye(4), np.zeros((4, 4))]])
print("cycle map preserves the symplectic form:", np.allclose(plant.T @ J @ plant, J))


def draw(plt):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.semilogx(gains, radius, "o-")
    ax.axhline(1.0, ls="--", c="k", lw=0.8)
    ax.set_xlabel("observer gain")
    ax.set_ylabel("cycle spectral radius")
    return fig


save_figure("04_equal_dwell", draw)
