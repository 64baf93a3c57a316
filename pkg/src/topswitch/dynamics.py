"""Second-order agent dynamics under a switching topology.

State convention: ``z = [x; v]`` with positions first. Each dwell interval
is integrated exactly with a matrix exponential; exponential forcing is
handled by augmenting the state with one extra coordinate.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .graph import WeightedGraph, laplacian
from .switching import SwitchSchedule

__all__ = [
    "DIVERGENCE_LIMIT",
    "SystemMatrices",
    "SwitchedState",
    "Forcing",
    "Trajectory",
    "output_matrix",
    "system_matrix",
    "assemble_system",
    "step_exact",
    "simulate",
    "consensus_error",
    "write_csv",
    "read_csv",
]

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class SystemMatrices:
    A: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class SwitchedState:
    z: np.ndarray
    t: float
    topo_index: int

    @property
    def x(self) -> np.ndarray:
        return self.z[: self.z.size // 2]

    @property
    def v(self) -> np.ndarray:
        return self.z[self.z.size // 2:]


@dataclass(frozen=True)
class Forcing:
    """Input ``b * exp(eta * (t - rho))`` switched on at ``t = rho``.

    ``b`` has the full state dimension.
    """

    b: np.ndarray
    eta: float
    rho: float = 0.0

    def amplitude(self, t: float) -> float:
        return float(np.exp(self.eta * (t - self.rho))) if t >= self.rho else 0.0


@dataclass
class Trajectory:
    """Sampled solution of a switched linear system.

    ``topo[k]`` is the topology active on ``[t[k], t[k+1])``.
    """

    t: np.ndarray
    z: np.ndarray
    topo: np.ndarray
    switch_times: np.ndarray
    switch_topos: np.ndarray
    status: str = "ok"
    C: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    @property
    def y(self) -> np.ndarray:
        if self.C is None:
            raise ValueError("trajectory has no output matrix")
        return self.z @ self.C.T

    def state(self, k: int) -> SwitchedState:
        return SwitchedState(self.z[k], float(self.t[k]), int(self.topo[k]))


def output_matrix(n: int, monitored: Sequence[int]) -> np.ndarray:
    """Rows ``e_j^T`` selecting the positions of the monitored agents."""
    mon = list(monitored)
    C = np.zeros((len(mon), 2 * n))
    for row, j in enumerate(mon):
        C[row, j] = 1.0
    return C


def system_matrix(L: np.ndarray) -> np.ndarray:
    """``[[0, I], [-L, 0]]`` for a Laplacian ``L``."""
    n = L.shape[0]
    return np.block([[np.zeros((n, n)), np.eye(n)], [-L, np.zeros((n, n))]])


def assemble_system(g: WeightedGraph, monitored: Sequence[int]) -> SystemMatrices:
    """State and output matrices for topology ``g``.

    Parameters
    ----------
    g : WeightedGraph
    monitored : sequence of int
        0-based, strictly increasing, nonempty.
    """
    mon = [int(i) for i in monitored]
    if not mon:
        raise ValueError("monitored set is empty")
    if any(b <= a for a, b in zip(mon, mon[1:])):
        raise ValueError("monitored set must be strictly increasing")
    if mon[0] < 0 or mon[-1] >= g.n:
        raise ValueError(f"monitored agent out of range 0..{g.n - 1}")
    return SystemMatrices(system_matrix(laplacian(g)), output_matrix(g.n, mon))


def _augmented(A: np.ndarray, b: np.ndarray, eta: float) -> np.ndarray:
    m = A.shape[0]
    M = np.zeros((m + 1, m + 1))
    M[:m, :m] = A
    M[:m, m] = b
    M[m, m] = eta
    return M


def step_exact(A: np.ndarray, z0: np.ndarray, dt: float,
               forcing: tuple[np.ndarray, float] | None = None) -> np.ndarray:
    """Advance ``z' = A z + b exp(eta s)`` by ``dt`` from ``s = 0``.

    Parameters
    ----------
    A : ndarray
    z0 : ndarray
    dt : float
    forcing : (b, eta), optional
        Forcing amplitude at the start of the step is ``b``.
    """
    z0 = np.asarray(z0, dtype=float)
    if forcing is None:
        return expm(A * dt) @ z0
    b, eta = forcing
    E = expm(_augmented(A, np.asarray(b, dtype=float), float(eta)) * dt)
    m = A.shape[0]
    return E[:m, :m] @ z0 + E[:m, m]


def _breakpoints(schedule: SwitchSchedule, horizon: float, sample_dt: float | None,
                 extra: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    sw = schedule.switch_times(horizon)
    sw = sw[sw < horizon]
    pts = [sw, [horizon], [t for t in extra if 0 < t < horizon]]
    if sample_dt is not None:
        if sample_dt <= 0:
            raise ValueError("sample_dt must be positive")
        k = int(np.floor(horizon / sample_dt + 1e-9))
        grid = sample_dt * np.arange(k + 1)
        # drop grid points that nearly coincide with a switch
        tol = 1e-9 * max(1.0, horizon)
        if sw.size:
            idx = np.searchsorted(sw, grid)
            near = np.zeros(grid.size, dtype=bool)
            for off in (-1, 0):
                j = np.clip(idx + off, 0, sw.size - 1)
                near |= np.abs(grid - sw[j]) < tol
            grid = grid[~near]
        pts.append(grid)
    t = np.unique(np.concatenate([np.asarray(p, dtype=float) for p in pts]))
    t = t[(t >= 0) & (t <= horizon)]
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
    return t, sw


def simulate(systems: Sequence[np.ndarray], schedule: SwitchSchedule, z0: np.ndarray,
             horizon: float, sample_dt: float | None = None,
             forcing: Forcing | None = None, C: np.ndarray | None = None,
             divergence_limit: float = DIVERGENCE_LIMIT) -> Trajectory:
    """Integrate ``z' = A_sigma(t) z (+ forcing)`` exactly.

    Parameters
    ----------
    systems : sequence of ndarray
        One state matrix per topology, indexed like the schedule.
    schedule : SwitchSchedule
    z0 : ndarray
    horizon : float
    sample_dt : float, optional
        Uniform sampling step. Switch times (and the forcing onset) are
        always added as samples; with ``None`` only those are recorded.
    forcing : Forcing, optional
    C : ndarray, optional
        Output matrix stored on the trajectory.
    divergence_limit : float
        The run halts with status ``"diverged"`` once any ``|z_i|`` exceeds it.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    z = np.array(z0, dtype=float)
    m = z.size
    extra = [forcing.rho] if forcing is not None else []
    t, sw = _breakpoints(schedule, horizon, sample_dt, extra)
    # the midpoint picks the interval unambiguously even at rounded switch times
    topo_at = np.empty(t.size, dtype=int)
    topo_at[:-1] = schedule.topology_indices(0.5 * (t[:-1] + t[1:]))
    topo_at[-1] = schedule.topology_at(float(t[-1]))

    cache: dict[tuple, np.ndarray] = {}

    def propagator(r: int, dt: float, forced: bool) -> np.ndarray:
        key = (r, dt, forced)
        E = cache.get(key)
        if E is None:
            A = np.asarray(systems[r], dtype=float)
            if forced:
                E = expm(_augmented(A, forcing.b, forcing.eta) * dt)
            else:
                E = expm(A * dt)
            cache[key] = E
        return E

    zs = np.empty((t.size, m))
    zs[0] = z
    status = "ok"
    last = t.size
    for k in range(t.size - 1):
        a, b = t[k], t[k + 1]
        dt = b - a
        r = int(topo_at[k])
        if forcing is not None and a >= forcing.rho:
            E = propagator(r, dt, True)
            z = E[:m, :m] @ z + E[:m, m] * forcing.amplitude(a)
        else:
            z = propagator(r, dt, False) @ z
        zs[k + 1] = z
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > divergence_limit:
            status = "diverged"
            last = k + 2
            break
    return Trajectory(t=t[:last], z=zs[:last], topo=topo_at[:last],
                      switch_times=sw, switch_topos=schedule.topology_indices(sw),
                      status=status, C=C)


def consensus_error(z: np.ndarray) -> np.ndarray | float:
    """Largest deviation of any position or velocity from the agent average.

    Accepts a single state ``[x; v]`` or a stack of states (one per row).
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    n = Z.shape[1] // 2
    x, v = Z[:, :n], Z[:, n:]
    err = np.maximum(np.max(np.abs(x - x.mean(axis=1, keepdims=True)), axis=1),
                     np.max(np.abs(v - v.mean(axis=1, keepdims=True)), axis=1))
    return float(err[0]) if single else err


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: str | Path, traj: Trajectory, residual: np.ndarray | None = None,
              sidecar: bool = True) -> Path:
    """Write ``t, x_1..x_n, v_1..v_n, topo_index[, r_1..r_p]`` rows.

    Topology indices are written 1-based. A ``<stem>.switches.json`` sidecar
    holds the switch times unless ``sidecar`` is False.
    """
    path = Path(path)
    n = traj.z.shape[1] // 2
    header = (["t"] + [f"x_{i}" for i in range(1, n + 1)]
              + [f"v_{i}" for i in range(1, n + 1)] + ["topo_index"])
    if residual is not None:
        residual = np.atleast_2d(np.asarray(residual).T).T
        header += [f"r_{i}" for i in range(1, residual.shape[1] + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(traj.t.size):
            row = [_fmt(traj.t[k])] + [_fmt(v) for v in traj.z[k]] + [str(int(traj.topo[k]) + 1)]
            if residual is not None:
                row += [_fmt(v) for v in residual[k]]
            w.writerow(row)
    if sidecar:
        side = path.with_suffix(".switches.json")
        side.write_text(json.dumps({
            "switch_times": [float(s) for s in traj.switch_times],
            "topologies": [int(r) + 1 for r in traj.switch_topos],
            "status": traj.status,
        }, indent=2) + "\n")
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back into named columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]) if body else np.zeros((0, len(header)))
    n = sum(1 for h in header if h.startswith("x_"))
    out = {"t": data[:, 0], "z": data[:, 1:1 + 2 * n],
           "topo": data[:, 1 + 2 * n].astype(int) - 1}
    if len(header) > 2 + 2 * n:
        out["r"] = data[:, 2 + 2 * n:]
    return out
