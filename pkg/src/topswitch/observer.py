"""Luenberger observer for the agent network, its error dynamics and a
residual threshold detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attack import ZdaPlan
from .dynamics import Forcing, Trajectory, output_matrix, simulate
from .graph import WeightedGraph, laplacian
from .switching import SwitchSchedule

__all__ = [
    "ObserverConfig",
    "DetectionReport",
    "ObserverRun",
    "gain_matrices",
    "observer_matrix",
    "hurwitz_check",
    "run_observer",
    "detect",
    "error_energy",
]

# relative tolerance of the structural Hurwitz test
TOL_HURWITZ = 1e-9


@dataclass(frozen=True)
class ObserverConfig:
    """Monitored agents (0-based) with position gains ``psi`` and velocity gains ``theta``."""

    monitored: tuple[int, ...]
    psi: tuple[float, ...]
    theta: tuple[float, ...]
    detect_threshold: float = 1e-4
    detect_window: float = 0.05

    def __post_init__(self):
        mon = tuple(int(i) for i in self.monitored)
        psi = tuple(float(v) for v in np.atleast_1d(self.psi))
        theta = tuple(float(v) for v in np.atleast_1d(self.theta))
        if not mon:
            raise ValueError("monitored set is empty")
        if any(b <= a for a, b in zip(mon, mon[1:])):
            raise ValueError("monitored set must be strictly increasing")
        if len(psi) != len(mon) or len(theta) != len(mon):
            raise ValueError(f"expected {len(mon)} gains per vector, got "
                             f"{len(psi)} and {len(theta)}")
        if min(psi) < 0 or min(theta) < 0:
            raise ValueError("observer gains must be nonnegative")
        if not any(psi) or not any(theta):
            raise ValueError("position and velocity gain matrices must both be nonzero")
        if self.detect_threshold <= 0 or self.detect_window < 0:
            raise ValueError("detection threshold must be positive and window nonnegative")
        object.__setattr__(self, "monitored", mon)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, monitored: Sequence[int], gain: float, **kw) -> "ObserverConfig":
        k = len(monitored)
        return cls(tuple(monitored), (gain,) * k, (gain,) * k, **kw)


def gain_matrices(cfg: ObserverConfig, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal ``Phi`` and ``Theta`` with gains at the monitored positions."""
    if max(cfg.monitored) >= n:
        raise ValueError(f"monitored agent out of range 0..{n - 1}")
    Phi, Theta = np.zeros((n, n)), np.zeros((n, n))
    for i, a, b in zip(cfg.monitored, cfg.psi, cfg.theta):
        Phi[i, i], Theta[i, i] = a, b
    return Phi, Theta


def observer_matrix(g: WeightedGraph | np.ndarray, cfg: ObserverConfig) -> np.ndarray:
    """``[[0, I], [-L - Phi, -Theta]]``."""
    L = laplacian(g) if isinstance(g, WeightedGraph) else np.asarray(g, dtype=float)
    n = L.shape[0]
    Phi, Theta = gain_matrices(cfg, n)
    return np.block([[np.zeros((n, n)), np.eye(n)], [-L - Phi, -Theta]])


def _split(A: np.ndarray):
    n = A.shape[0] // 2
    top_ok = np.array_equal(A[:n, :n], np.zeros((n, n))) and np.array_equal(A[:n, n:], np.eye(n))
    K = -A[n:, :n]
    Theta = -A[n:, n:]
    if (top_ok and np.allclose(K, K.T, atol=0) and np.count_nonzero(Theta - np.diag(np.diag(Theta))) == 0
            and np.all(np.diag(Theta) >= 0)):
        return K, np.diag(Theta)
    return None


def hurwitz_check(A: np.ndarray, method: str = "auto") -> bool:
    """True if every eigenvalue of ``A`` has negative real part.

    For matrices of the observer form ``[[0, I], [-K, -Theta]]`` with
    symmetric ``K`` and diagonal ``Theta >= 0`` the test is structural: an
    eigenvalue on the imaginary axis exists iff some eigenvector of ``K``
    (with ``K x = w^2 x``, ``w >= 0``) vanishes where ``Theta`` is positive.
    This holds whatever the gain magnitudes, which matters because tiny
    gains push the spectrum within roundoff of the axis. Other matrices, or
    ``method="eig"``, fall back to the eigenvalues.
    """
    A = np.asarray(A, dtype=float)
    parts = _split(A) if method in ("auto", "structural") else None
    if parts is None:
        if method == "structural":
            raise ValueError("matrix is not of observer form")
        return bool(np.max(np.linalg.eigvals(A).real) < 0)
    K, theta = parts
    lam_K = np.linalg.eigvalsh(K)
    scale = max(1.0, float(np.max(np.abs(lam_K))))
    if lam_K[0] < -TOL_HURWITZ * scale:
        # K indefinite: an unstable real mode exists
        return False
    damped = theta > 0
    free = ~damped
    if not np.any(free):
        return True
    # eigenvectors of K supported on the undamped coordinates
    Kf = K[np.ix_(free, free)]
    R = K[np.ix_(damped, free)]
    mu, Y = np.linalg.eigh(Kf)
    j = 0
    while j < mu.size:
        c = j + 1
        while c < mu.size and mu[c] - mu[c - 1] <= TOL_HURWITZ * scale:
            c += 1
        Yc = Y[:, j:c]
        if R.shape[0] == 0:
            return False
        s = np.linalg.svd(R @ Yc, compute_uv=False)
        if s.size < Yc.shape[1] or s[-1] <= TOL_HURWITZ * scale:
            return False
        j = c
    return True


@dataclass
class DetectionReport:
    detected: bool
    first_detection_time: float | None
    max_residual: float
    t: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    residual: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))

    def to_dict(self) -> dict:
        return {"detected": self.detected,
                "first_detection_time": self.first_detection_time,
                "max_residual": self.max_residual}


def detect(t: np.ndarray, residual: np.ndarray, threshold: float = 1e-4,
           window: float = 0.05) -> DetectionReport:
    """First time the residual stays above ``threshold`` for ``window`` seconds.

    A run of consecutive samples with ``max_i |r_i| > threshold`` counts
    once the time from its first to its last sample reaches ``window``.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(residual, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    mag = np.max(np.abs(r), axis=1) if r.size else np.zeros(t.size)
    over = mag > threshold
    first = None
    start = None
    for k in range(t.size):
        if over[k]:
            if start is None:
                start = k
            if t[k] - t[start] >= window:
                first = float(t[start])
                break
        else:
            start = None
    return DetectionReport(first is not None, first,
                           float(mag.max()) if mag.size else 0.0, t, r)


@dataclass
class ObserverRun:
    plant: Trajectory
    error: np.ndarray
    observer: np.ndarray
    residual: np.ndarray
    report: DetectionReport

    @property
    def t(self) -> np.ndarray:
        return self.plant.t


def run_observer(plant_systems: Sequence[np.ndarray], observer_systems: Sequence[np.ndarray],
                 schedule: SwitchSchedule, cfg: ObserverConfig, plant_z0: np.ndarray,
                 observer_z0: np.ndarray, horizon: float, plan: ZdaPlan | None = None,
                 sample_dt: float | None = None) -> ObserverRun:
    """Co-simulate the (possibly attacked) plant and the observer.

    Both share ``schedule``. The joint state is ``[z_plant; e]`` with
    ``e = z_observer - z_plant``, whose dynamics ``e' = A_obs e - [0; a(t)]``
    do not depend on the plant state. The residual is the position error
    of the monitored agents.
    """
    if len(plant_systems) != len(observer_systems):
        raise ValueError("plant and observer must share one topology set")
    z0 = np.asarray(plant_z0, dtype=float)
    m = z0.size
    joint = [np.block([[np.asarray(A), np.zeros((m, m))], [np.zeros((m, m)), np.asarray(Ao)]])
             for A, Ao in zip(plant_systems, observer_systems)]
    e0 = np.asarray(observer_z0, dtype=float) - z0
    forcing = None
    if plan is not None:
        forcing = Forcing(np.concatenate([plan.g_full, -plan.g_full]), plan.eta, plan.rho)
    traj = simulate(joint, schedule, np.concatenate([z0, e0]), horizon, sample_dt, forcing)
    C = output_matrix(m // 2, cfg.monitored)
    plant = Trajectory(traj.t, traj.z[:, :m], traj.topo, traj.switch_times, traj.switch_topos,
                       traj.status, C)
    err = traj.z[:, m:]
    res = err @ C.T
    report = detect(traj.t, res, cfg.detect_threshold, cfg.detect_window)
    return ObserverRun(plant, err, plant.z + err, res, report)


def error_energy(e: np.ndarray, L: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """``0.5 e_x^T (L + Phi) e_x + 0.5 e_v^T e_v`` for each row of ``e``.

    Along a fixed-topology error flow this decreases at rate
    ``e_v^T Theta e_v``.
    """
    E = np.atleast_2d(e)
    n = E.shape[1] // 2
    ex, ev = E[:, :n], E[:, n:]
    K = L + Phi
    return 0.5 * np.einsum("ki,ij,kj->k", ex, K, ex) + 0.5 * np.sum(ev * ev, axis=1)
