"""Zero-dynamics attacks against a set of switching topologies.

An attack is a pair of an initial-state perturbation ``z_breve`` and an
exponential input ``g_full * exp(eta (t - rho))`` acting on the velocity
equations. It is output-invisible while ``[z_breve(rho); -g_full]`` lies
in the kernel of the Rosenbrock matrix of every topology the defender
may switch to.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm, null_space, svd
from scipy.optimize import minimize_scalar

from .switching import SwitchSchedule

__all__ = [
    "TOL_RANK",
    "ZdaPlan",
    "StealthCertificate",
    "AttackStart",
    "NoStealthyStartError",
    "default_eta_grid",
    "rosenbrock_matrix",
    "observability_matrix",
    "observability_kernel",
    "stealth_subspace",
    "zda_kernel",
    "synthesize_zda",
    "flow",
    "select_attack_start",
    "plan_attack_start",
    "attack_signal",
    "certify_plan",
]

TOL_RANK = 1e-9
# relative tolerance for "this vector lies in that subspace / kernel"
TOL_MEMBER = 1e-8


@dataclass(frozen=True)
class ZdaPlan:
    """Real exponent ``eta``, start ``rho``, gains ``g`` and perturbation ``z_breve0``.

    ``g`` holds the per-agent velocity forcing (length n); the full
    state-space input is ``[0; g]``. ``misbehaving`` lists the 0-based
    agents with nonzero forcing.
    """

    eta: float
    rho: float
    g: np.ndarray
    z_breve0: np.ndarray
    misbehaving: tuple[int, ...] = ()

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        z = np.asarray(self.z_breve0, dtype=float)
        if z.size != 2 * g.size:
            raise ValueError("z_breve0 must have twice the length of g")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if not np.any(z):
            raise ValueError("an attack needs a nonzero initial perturbation")
        if not np.any(g):
            raise ValueError("attack gains are all zero")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "z_breve0", z)
        if not self.misbehaving:
            object.__setattr__(self, "misbehaving", tuple(int(i) for i in np.flatnonzero(g)))

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def g_full(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.n), self.g])

    def with_start(self, rho: float, z_breve0: np.ndarray | None = None) -> "ZdaPlan":
        return ZdaPlan(self.eta, float(rho), self.g,
                       self.z_breve0 if z_breve0 is None else z_breve0, self.misbehaving)

    def to_dict(self) -> dict:
        return {"eta": float(self.eta), "rho": float(self.rho),
                "g": [float(v) for v in self.g],
                "z_breve0": [float(v) for v in self.z_breve0],
                "misbehaving": [i + 1 for i in self.misbehaving]}

    @classmethod
    def from_dict(cls, d: dict) -> "ZdaPlan":
        return cls(float(d["eta"]), float(d["rho"]), np.asarray(d["g"], dtype=float),
                   np.asarray(d["z_breve0"], dtype=float),
                   tuple(int(i) - 1 for i in d.get("misbehaving", [])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ZdaPlan":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class StealthCertificate:
    """Kernel residuals at the attack start and, optionally, the simulated
    worst output deviation."""

    residuals: tuple[float, ...]
    members: tuple[bool, ...]
    max_output_deviation: float | None = None
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        ok = all(r < self.tol for r in self.residuals)
        if self.max_output_deviation is not None:
            ok = ok and self.max_output_deviation < 1e-6
        return ok

    def to_dict(self) -> dict:
        return {"residuals": list(self.residuals), "members": list(self.members),
                "max_output_deviation": self.max_output_deviation, "passed": self.passed}


@dataclass(frozen=True)
class AttackStart:
    branch: str
    rho: float
    k: int
    window: tuple[float, ...] = field(default=())


class NoStealthyStartError(RuntimeError):
    """No time in the current dwell interval admits a stealthy start."""


def default_eta_grid() -> np.ndarray:
    """Positive candidates ascending, then negative ones, then zero."""
    pos = np.logspace(-3, 1, 40)
    return np.concatenate([pos, -pos, [0.0]])


def rosenbrock_matrix(A: np.ndarray, C: np.ndarray, eta: float) -> np.ndarray:
    """``[[eta I - A, I], [-C, 0]]``."""
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m, p = A.shape[0], C.shape[0]
    return np.block([[eta * np.eye(m) - A, np.eye(m)], [-C, np.zeros((p, m))]])


def observability_matrix(A: np.ndarray, C: np.ndarray, balanced: bool = True) -> np.ndarray:
    """Stacked ``C A^j`` for ``j < dim A``.

    With ``balanced`` each block is divided by ``max(1, |A|)^j``; this leaves
    the null space unchanged and keeps the singular values comparable.
    """
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    s = max(1.0, np.linalg.norm(A, 2)) if balanced else 1.0
    blocks, B = [], C.copy()
    for _ in range(A.shape[0]):
        blocks.append(B)
        B = (B @ A) / s
    return np.vstack(blocks)


def _null(M: np.ndarray, tol: float = TOL_RANK) -> np.ndarray:
    if M.size == 0:
        return np.eye(M.shape[1])
    smax = np.linalg.norm(M, 2)
    if smax == 0:
        return np.eye(M.shape[1])
    return null_space(M, rcond=tol)


def observability_kernel(A: np.ndarray, C: np.ndarray, tol: float = TOL_RANK) -> np.ndarray:
    """Orthonormal basis (columns) of the unobservable subspace."""
    return _null(observability_matrix(A, C), tol)


def _intersect(B1: np.ndarray, B2: np.ndarray, tol: float = TOL_RANK) -> np.ndarray:
    m = B1.shape[0]
    if B1.shape[1] == 0 or B2.shape[1] == 0:
        return np.zeros((m, 0))
    I = np.eye(m)
    return _null(np.vstack([I - B1 @ B1.T, I - B2 @ B2.T]), tol)


def _orth(B: np.ndarray, tol: float = TOL_RANK) -> np.ndarray:
    if B.shape[1] == 0:
        return B
    U, s, _ = svd(B, full_matrices=False)
    return U[:, s > tol * max(1.0, s[0])]


def _interval_flows(systems: Sequence[np.ndarray], schedule: SwitchSchedule, k: int):
    """Yield ``(A_q, expm(A_q tau_q))`` for intervals ``0..k-1``."""
    cache: dict[tuple, np.ndarray] = {}
    for q in range(k):
        a, b, r = schedule.interval(q)
        key = (r, b - a)
        if key not in cache:
            cache[key] = expm(np.asarray(systems[r]) * (b - a))
        yield systems[r], cache[key]


def stealth_subspace(systems: Sequence[np.ndarray], C: np.ndarray,
                     schedule: SwitchSchedule, k: int,
                     tol: float = TOL_RANK) -> np.ndarray:
    """Initial perturbations that stay output-invisible through the first ``k`` intervals.

    Backward recursion: the last interval contributes ``ker O``; every
    earlier interval ``q`` intersects ``ker O_q`` with the preimage of the
    next set under the interval flow.
    """
    if k < 1:
        raise ValueError("k counts intervals and starts at 1")
    flows = list(_interval_flows(systems, schedule, k))
    A_last, _ = flows[-1]
    N = observability_kernel(A_last, C, tol)
    for q in range(k - 2, -1, -1):
        A_q, F_q = flows[q]
        pre = _orth(np.linalg.solve(F_q, N), tol) if N.shape[1] else N
        N = _intersect(observability_kernel(A_q, C, tol), pre, tol)
    return N


def zda_kernel(systems: Sequence[np.ndarray], C: np.ndarray, eta: float,
               fix_state_zero: bool = False, misbehaving: Sequence[int] | None = None,
               tol: float = TOL_RANK) -> np.ndarray:
    """Basis of ``[z_breve; -g_full]`` in every Rosenbrock kernel with a
    velocity-only input.

    ``fix_state_zero`` additionally pins ``z_breve = 0``. ``misbehaving``
    (0-based) restricts the forcing to those agents; None allows all.
    """
    m = np.asarray(systems[0]).shape[0]
    n = m // 2
    rows = [rosenbrock_matrix(A, C, eta) for A in systems]
    sel = np.zeros((n, 2 * m))
    sel[:, m:m + n] = np.eye(n)
    rows.append(sel)
    if misbehaving is not None:
        quiet = [i for i in range(n) if i not in set(int(j) for j in misbehaving)]
        pin = np.zeros((len(quiet), 2 * m))
        for row, i in enumerate(quiet):
            pin[row, m + n + i] = 1.0
        rows.append(pin)
    if fix_state_zero:
        rows.append(np.hstack([np.eye(m), np.zeros((m, m))]))
    return _null(np.vstack(rows), tol)


def synthesize_zda(systems: Sequence[np.ndarray], C: np.ndarray,
                   eta_candidates: Iterable[float] | None = None,
                   amplitude: float = 1e-3, include_default_grid: bool = True,
                   misbehaving: Sequence[int] | None = None,
                   tol: float = TOL_RANK) -> ZdaPlan | None:
    """First feasible zero-dynamics attack over the candidate exponents.

    Parameters
    ----------
    systems : sequence of ndarray
        State matrices of every topology the defender may use.
    C : ndarray
        Output matrix of the monitored positions.
    eta_candidates : iterable of float, optional
        Tried before the default grid.
    amplitude : float
        The plan is scaled so ``max |g_i| = amplitude``.
    include_default_grid : bool
        Append :func:`default_eta_grid` to the user candidates.
    misbehaving : sequence of int, optional
        0-based agents the attacker may force. None allows every agent.

    Returns
    -------
    ZdaPlan or None
        ``rho = 0``. None when every candidate forces the trivial solution.
    """
    cands = [float(e) for e in (eta_candidates or [])]
    if include_default_grid:
        cands += [float(e) for e in default_eta_grid()]
    m = np.asarray(systems[0]).shape[0]
    n = m // 2
    for eta in cands:
        N = zda_kernel(systems, C, eta, misbehaving=misbehaving, tol=tol)
        if N.shape[1] == 0:
            continue
        G = -N[m + n:, :]
        U, s, Vt = svd(G, full_matrices=False)
        if s.size == 0 or s[0] <= tol * max(1.0, np.linalg.norm(N, 2)):
            continue
        w = N @ Vt[0]
        z, g = w[:m], -w[m + n:]
        # kill roundoff on agents that carry no forcing
        g = np.where(np.abs(g) > tol * np.max(np.abs(g)), g, 0.0)
        i = int(np.argmax(np.abs(g)))
        scale = amplitude / g[i]
        z, g = z * scale, g * scale
        if not np.any(z):
            continue
        return ZdaPlan(eta, 0.0, g, z)
    return None


def flow(systems: Sequence[np.ndarray], schedule: SwitchSchedule, z0: np.ndarray,
         t: float) -> np.ndarray:
    """Unforced switched flow from time 0 to ``t``."""
    z = np.array(z0, dtype=float)
    k_end = schedule.interval_index(t)
    for q in range(k_end):
        a, b, r = schedule.interval(q)
        z = expm(np.asarray(systems[r]) * (b - a)) @ z
    a, _, r = schedule.interval(k_end)
    if t > a:
        z = expm(np.asarray(systems[r]) * (t - a)) @ z
    return z


def _in_span(B: np.ndarray, v: np.ndarray, tol: float = TOL_MEMBER) -> bool:
    nv = np.linalg.norm(v)
    if nv == 0:
        return True
    if B.shape[1] == 0:
        return False
    return np.linalg.norm(v - B @ (B.T @ v)) <= tol * nv


def _polish(A: np.ndarray, P: np.ndarray, g_full: np.ndarray, z_start: np.ndarray,
            t0: float, x: float, lo: float, hi: float, iters: int = 8) -> float:
    """Newton steps on ``d/dt |P w(t)|^2 = 0`` starting from ``x``.

    Bounded Brent stops near ``sqrt(eps) |t|``; the residual is smooth in
    ``t``, so a few Newton steps on its derivative reach roundoff.
    """
    m = A.shape[0]
    PA = P[:, :m] @ A
    PAA = PA @ A
    for _ in range(iters):
        z = expm(A * (x - t0)) @ z_start
        r = P @ np.concatenate([z, -g_full])
        dr = PA @ z
        d2r = PAA @ z
        num = float(r @ dr)
        den = float(dr @ dr + r @ d2r)
        if den <= 0:
            break
        step = num / den
        x_new = min(max(x - step, lo), hi)
        if abs(x_new - x) <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return float(x)


def _kernel_window(A: np.ndarray, C: np.ndarray, eta: float, g_full: np.ndarray,
                   z_start: np.ndarray, t0: float, t1: float, sample_dt: float,
                   tol: float) -> list[float]:
    P = rosenbrock_matrix(A, C, eta)

    def resid(s: float) -> float:
        z = expm(A * (s - t0)) @ z_start
        w = np.concatenate([z, -g_full])
        return float(np.linalg.norm(P @ w) / max(np.linalg.norm(w), 1e-300))

    nseg = max(2, int(math.ceil((t1 - t0) / sample_dt)))
    ts = np.linspace(t0, t1, nseg + 1)
    step = expm(A * (ts[1] - ts[0]))
    f = np.empty(ts.size)
    z = np.array(z_start, dtype=float)
    for j in range(ts.size):
        if j:
            z = step @ z
        f[j] = float(np.linalg.norm(P @ np.concatenate([z, -g_full]))
                     / max(np.linalg.norm(np.concatenate([z, g_full])), 1e-300))
    hits = []
    for end in (0, ts.size - 1):
        t_end = t0 if end == 0 else t1
        if resid(t_end) <= tol:
            hits.append(t_end)
    for j in range(1, ts.size - 1):
        if f[j] <= f[j - 1] and f[j] <= f[j + 1]:
            res = minimize_scalar(resid, bounds=(ts[j - 1], ts[j + 1]), method="bounded",
                                  options={"xatol": 1e-12 * max(1.0, abs(t1))})
            x = _polish(A, P, g_full, z_start, t0, float(res.x), ts[j - 1], ts[j + 1])
            if resid(x) <= tol and t0 < x < t1:
                hits.append(x)
    hits = sorted(set(hits))
    # merge duplicates found from neighbouring samples
    out: list[float] = []
    for h in hits:
        if not out or h - out[-1] > 1e-9:
            out.append(h)
    return out


def _decide(k: int, t_k: float, t_k1: float, A: np.ndarray, C: np.ndarray,
            N: np.ndarray, z_breve0: np.ndarray, z_start: np.ndarray, g: np.ndarray,
            eta: float, sample_dt: float, choose: str, defer: bool,
            tol: float) -> AttackStart:
    if not _in_span(N, z_breve0):
        return AttackStart("i", t_k, k)
    g_full = np.concatenate([np.zeros(len(g)), np.asarray(g, dtype=float)])
    window = _kernel_window(A, C, eta, g_full, z_start, t_k, t_k1, sample_dt, tol)
    if window and abs(window[-1] - t_k1) <= 1e-9 * max(1.0, t_k1):
        return AttackStart("iii", t_k1 if defer else t_k, k, tuple(window))
    if not window:
        raise NoStealthyStartError(f"no stealthy start in interval {k} [{t_k:.6g}, {t_k1:.6g})")
    rho = window[0] if choose == "earliest" else window[-1]
    return AttackStart("ii", rho, k, tuple(window))


def select_attack_start(z_breve0: np.ndarray, g: np.ndarray, eta: float,
                        systems: Sequence[np.ndarray], C: np.ndarray,
                        schedule: SwitchSchedule, k: int, sample_dt: float = 1e-2,
                        choose: str = "earliest", defer: bool = True,
                        tol: float = TOL_MEMBER) -> AttackStart:
    """Attack-start rule evaluated on dwell interval ``k`` (0-based).

    Branches:

    * ``"i"``: ``z_breve0`` leaves the invisible subspace by the end of
      interval ``k``, so the attack starts at ``t_k``.
    * ``"ii"``: the kernel window inside the interval does not end at
      ``t_{k+1}``; start at its earliest (or latest) time.
    * ``"iii"``: the window ends at ``t_{k+1}``; start at ``t_{k+1}``
      when ``defer`` else at ``t_k``.

    Raises
    ------
    NoStealthyStartError
        Branch ii with an empty window.
    """
    t_k, t_k1, r = schedule.interval(k)
    N = stealth_subspace(systems, C, schedule, k + 1)
    z_start = flow(systems, schedule, z_breve0, t_k)
    return _decide(k, t_k, t_k1, np.asarray(systems[r]), C, N, z_breve0, z_start,
                   g, eta, sample_dt, choose, defer, tol)


def plan_attack_start(plan: ZdaPlan, systems: Sequence[np.ndarray], C: np.ndarray,
                      schedule: SwitchSchedule, max_intervals: int = 10_000,
                      sample_dt: float = 1e-2, choose: str = "earliest",
                      defer: bool = True, tol: float = TOL_MEMBER) -> tuple[ZdaPlan, AttackStart]:
    """Walk the intervals from ``k = 0`` until a start is found.

    ``plan.z_breve0`` is the perturbation at time 0. The invisible subspace
    is grown forward here: it is the intersection over past intervals of
    the pulled-back unobservable subspaces, which equals the backward
    recursion used by :func:`stealth_subspace`.
    """
    m = 2 * plan.n
    Phi = np.eye(m)
    N = np.eye(m)
    z = plan.z_breve0.copy()
    kernels: dict[int, np.ndarray] = {}
    props: dict[tuple, np.ndarray] = {}
    for k in range(max_intervals):
        t_k, t_k1, r = schedule.interval(k)
        A = np.asarray(systems[r])
        if r not in kernels:
            kernels[r] = observability_kernel(A, C)
        pulled = _orth(np.linalg.solve(Phi, kernels[r])) if kernels[r].shape[1] else kernels[r]
        N = _intersect(N, pulled) if N.shape[1] else N
        try:
            start = _decide(k, t_k, t_k1, A, C, N, plan.z_breve0, z, plan.g, plan.eta,
                            sample_dt, choose, defer, tol)
        except NoStealthyStartError:
            key = (r, t_k1 - t_k)
            if key not in props:
                props[key] = expm(A * (t_k1 - t_k))
            Phi = props[key] @ Phi
            z = props[key] @ z
            continue
        return plan.with_start(start.rho), start
    raise NoStealthyStartError(f"no stealthy start within {max_intervals} intervals")


def attack_signal(plan: ZdaPlan, t: float | np.ndarray) -> np.ndarray:
    """Per-agent forcing ``g exp(eta (t - rho))`` after ``rho``, zero before."""
    t_arr = np.asarray(t, dtype=float)
    amp = np.where(t_arr >= plan.rho, np.exp(plan.eta * (t_arr - plan.rho)), 0.0)
    return np.multiply.outer(amp, plan.g)


def certify_plan(plan: ZdaPlan, systems: Sequence[np.ndarray], C: np.ndarray,
                 schedule: SwitchSchedule | None = None, tol: float = 1e-8) -> StealthCertificate:
    """Rosenbrock residuals of ``[z_breve(rho); -g_full]`` for every topology."""
    z_rho = plan.z_breve0
    if plan.rho > 0:
        if schedule is None:
            raise ValueError("a schedule is needed to flow the perturbation to rho")
        z_rho = flow(systems, schedule, plan.z_breve0, plan.rho)
    w = np.concatenate([z_rho, -plan.g_full])
    res = tuple(float(np.linalg.norm(rosenbrock_matrix(A, C, plan.eta) @ w)) for A in systems)
    return StealthCertificate(res, tuple(r < tol for r in res), None, tol)
