"""Topology periods, dwell times, round-robin schedules and the
matrix-measure stability certificate for periodic switching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh, solve_continuous_lyapunov, sqrtm

from .graph import (MAX_DENOMINATOR, TOL_RATIONAL, TOL_ZERO, WeightedGraph,
                    rational_ratio, spectrum)

__all__ = [
    "IncommensurableSpectrumError",
    "InfeasibleDwellTimeError",
    "DwellTimeParams",
    "DwellCertificate",
    "SwitchSchedule",
    "MeasureCertificate",
    "period",
    "spectral_bound",
    "dwell_time",
    "dwell_times",
    "suggest_dwell_params",
    "build_schedule",
    "matrix_measure",
    "lyapunov_weight",
    "matrix_measure_certificate",
    "certified_dwell_multipliers",
]


class IncommensurableSpectrumError(ValueError):
    """Oscillation periods of a topology have no common multiple."""


class InfeasibleDwellTimeError(ValueError):
    """Dwell-time parameters violate one of the required inequalities."""

    def __init__(self, msg: str, xi: float | None = None, failed: Sequence[str] = (),
                 min_m: int | None = None):
        super().__init__(msg)
        self.xi = xi
        self.failed = tuple(failed)
        self.min_m = min_m


def period(g: WeightedGraph, max_denominator: int = MAX_DENOMINATOR,
           tol: float = TOL_RATIONAL) -> float:
    """Least common multiple of the modal periods ``2 pi / sqrt(lambda_i)``.

    Frequency ratios are rebuilt as fractions ``a_i / b_i`` against the
    lowest frequency; the common period is then
    ``(2 pi / w_0) * lcm(b_i) / gcd(a_i)``.
    """
    lam = spectrum(g).eigenvalues
    lam = lam[lam > TOL_ZERO]
    if lam.size == 0:
        raise IncommensurableSpectrumError("topology has no oscillatory mode (no edges)")
    w = np.sqrt(lam)
    num, den = [], []
    for wi in w:
        f = rational_ratio(wi / w[0], max_denominator, tol)
        if f is None:
            raise IncommensurableSpectrumError(
                f"frequency ratio {wi / w[0]:.12g} is not rational within "
                f"denominator {max_denominator}")
        num.append(f.numerator)
        den.append(f.denominator)
    return 2 * math.pi / float(w[0]) * math.lcm(*den) / math.gcd(*num)


def spectral_bound(graphs: Sequence[WeightedGraph]) -> float:
    """``max |lambda_i(L_r) - 1|`` over the whole set."""
    return float(max(np.max(np.abs(spectrum(g).eigenvalues - 1.0)) for g in graphs))


@dataclass(frozen=True)
class DwellTimeParams:
    """Constants of the dwell-time construction.

    ``alpha=None`` means ``xi + 1``. ``m`` may be a single integer or one
    per topology.
    """

    beta: float = 0.5
    alpha: float | None = None
    kappa: int = 1
    m: int | tuple[int, ...] = 1
    tau_hat: float = 0.2

    def resolved_alpha(self, xi: float) -> float:
        return xi + 1.0 if self.alpha is None else float(self.alpha)

    def m_for(self, r: int) -> int:
        return int(self.m) if isinstance(self.m, (int, np.integer)) else int(self.m[r])


@dataclass(frozen=True)
class DwellCertificate:
    tau: float
    T: float
    m: int
    xi: float
    alpha: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _lemma_checks(T: float, xi: float, p: DwellTimeParams, alpha: float, m: int) -> dict:
    b, k, th = p.beta, p.kappa, p.tau_hat
    ok_basic = 0 < b < 1 and alpha > 0
    checks = {
        "0 < beta < 1": 0 < b < 1,
        "alpha > 0": alpha > 0,
        "kappa >= 1": int(k) == k and k >= 1,
        "m >= 1": int(m) == m and m >= 1,
        "0 < tau_hat < -ln(beta)/alpha": ok_basic and 0 < th < -math.log(b) / alpha,
        "xi < alpha": xi < alpha,
    }
    if ok_basic and xi < alpha and k >= 1:
        slack = th + m * T / 2 - (b ** (-1.0 / k) - 1.0) * k / (alpha - xi)
        checks["tau_hat + m T/2 - (beta^(-1/kappa) - 1) kappa/(alpha - xi) > 0"] = slack > 0
    else:
        checks["tau_hat + m T/2 - (beta^(-1/kappa) - 1) kappa/(alpha - xi) > 0"] = False
    return checks


def dwell_time(g: WeightedGraph, params: DwellTimeParams = DwellTimeParams(),
               xi: float | None = None, m: int | None = None,
               T: float | None = None) -> DwellCertificate:
    """Dwell time ``tau_hat + m T / 2`` with every side condition verified.

    Parameters
    ----------
    g : WeightedGraph
    params : DwellTimeParams
    xi : float, optional
        Spectral bound of the whole set; defaults to that of ``g`` alone.
    m : int, optional
        Overrides ``params.m``.
    T : float, optional
        Precomputed period of ``g``.

    Raises
    ------
    InfeasibleDwellTimeError
        If any inequality fails. ``min_m`` carries the smallest ``m`` that
        would satisfy the last inequality when the other ones hold.
    """
    if T is None:
        T = period(g)
    if xi is None:
        xi = spectral_bound([g])
    if m is None:
        m = params.m if isinstance(params.m, (int, np.integer)) else params.m[0]
    alpha = params.resolved_alpha(xi)
    checks = _lemma_checks(T, xi, params, alpha, m)
    cert = DwellCertificate(params.tau_hat + m * T / 2, T, int(m), xi, alpha, checks)
    if not cert.passed:
        failed = [k for k, v in checks.items() if not v]
        min_m = None
        if xi < alpha and 0 < params.beta < 1 and params.kappa >= 1:
            need = (params.beta ** (-1.0 / params.kappa) - 1.0) * params.kappa / (alpha - xi)
            min_m = max(1, math.floor(2 * (need - params.tau_hat) / T) + 1)
        raise InfeasibleDwellTimeError(
            f"dwell-time conditions violated: {failed} (xi={xi:.6g}, alpha={alpha:.6g})",
            xi=xi, failed=failed, min_m=min_m)
    return cert


def dwell_times(graphs: Sequence[WeightedGraph],
                params: DwellTimeParams = DwellTimeParams()) -> list[DwellCertificate]:
    """Certified dwell time for every topology, sharing the set-wide ``xi``."""
    xi = spectral_bound(graphs)
    return [dwell_time(g, params, xi=xi, m=params.m_for(r)) for r, g in enumerate(graphs)]


def suggest_dwell_params(graphs: Sequence[WeightedGraph], tau_hat: float = 0.2,
                         m: int | Sequence[int] = 1, margin: float = 1.25) -> DwellTimeParams:
    """Pick ``alpha``, ``beta`` and ``kappa`` that satisfy every inequality.

    With ``c = -ln(beta)`` the conditions reduce to
    ``tau_hat * alpha < c`` and ``kappa (e^(c/kappa) - 1) < (alpha - xi) S``
    where ``S = tau_hat + m T / 2``. Since ``kappa (e^(c/kappa) - 1)``
    decreases to ``c``, a solution exists iff
    ``alpha > xi S / (m T / 2)``. ``alpha`` is set ``margin`` times above
    that bound, ``c`` halfway between its limits, and ``kappa`` as small as
    possible.
    """
    xi = spectral_bound(graphs)
    ms = [int(m)] * len(graphs) if isinstance(m, (int, np.integer)) else [int(v) for v in m]
    half = min(mi * period(g) / 2 for mi, g in zip(ms, graphs))
    S = tau_hat + half
    alpha = max(margin * xi * S / half, xi + 1.0, 1.0)
    lo, hi = tau_hat * alpha, (alpha - xi) * S
    c = 0.5 * (lo + hi)
    kappa = 1
    while kappa * math.expm1(c / kappa) >= hi:
        kappa *= 2
    # shrink back to the smallest feasible kappa
    lo_k = kappa // 2
    while kappa - lo_k > 1:
        mid = (kappa + lo_k) // 2
        if mid * math.expm1(c / mid) < hi:
            kappa = mid
        else:
            lo_k = mid
    m_field = ms[0] if isinstance(m, (int, np.integer)) else tuple(ms)
    return DwellTimeParams(beta=math.exp(-c), alpha=alpha, kappa=kappa, m=m_field,
                           tau_hat=tau_hat)


@dataclass(frozen=True)
class SwitchSchedule:
    """Round-robin periodic schedule.

    Interval ``k`` runs on topology ``order[k mod len(order)]`` for
    ``dwell[that topology]`` seconds, starting at ``t_0 = 0``.
    """

    dwell: tuple[float, ...]
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        dwell = tuple(float(d) for d in self.dwell)
        if not dwell or any(not d > 0 for d in dwell):
            raise ValueError("dwell times must be positive")
        order = tuple(range(len(dwell))) if self.order is None else tuple(int(r) for r in self.order)
        if not order or any(r < 0 or r >= len(dwell) for r in order):
            raise ValueError("order references an unknown topology")
        object.__setattr__(self, "dwell", dwell)
        object.__setattr__(self, "order", order)
        offs = np.concatenate([[0.0], np.cumsum([dwell[r] for r in order])])
        object.__setattr__(self, "_offsets", offs)

    @property
    def cycle(self) -> float:
        """Length of one full round (the switching period)."""
        return float(self._offsets[-1])

    def switch_time(self, k: int) -> float:
        p = len(self.order)
        q, j = divmod(int(k), p)
        return q * self.cycle + float(self._offsets[j])

    def topology(self, k: int) -> int:
        return self.order[int(k) % len(self.order)]

    def interval(self, k: int) -> tuple[float, float, int]:
        return self.switch_time(k), self.switch_time(k + 1), self.topology(k)

    def switch_times(self, horizon: float) -> np.ndarray:
        """All ``t_k <= horizon``, starting with ``t_0 = 0``."""
        p = len(self.order)
        n_cycles = int(math.floor(horizon / self.cycle)) + 1
        q = np.repeat(np.arange(n_cycles), p) * self.cycle
        t = q + np.tile(self._offsets[:-1], n_cycles)
        return t[t <= horizon]

    def interval_index(self, t: float) -> int:
        """Index ``k`` with ``t_k <= t < t_{k+1}``."""
        p = len(self.order)
        q = int(math.floor(t / self.cycle))
        j = int(np.searchsorted(self._offsets, t - q * self.cycle, side="right")) - 1
        j = min(max(j, 0), p - 1)
        k = q * p + j
        # guard against rounding at the interval edges
        while self.switch_time(k) > t:
            k -= 1
        while self.switch_time(k + 1) <= t:
            k += 1
        return k

    def topology_at(self, t: float) -> int:
        return self.topology(self.interval_index(t))

    def topology_indices(self, t: Sequence[float]) -> np.ndarray:
        return np.array([self.topology_at(float(s)) for s in np.atleast_1d(t)], dtype=int)

    def to_dict(self, horizon: float | None = None) -> dict:
        d = {"dwell": {str(r + 1): tau for r, tau in enumerate(self.dwell)},
             "order": [r + 1 for r in self.order]}
        if horizon is not None:
            d["switch_times"] = [float(t) for t in self.switch_times(horizon)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchSchedule":
        dwell_map = {int(k) - 1: float(v) for k, v in d["dwell"].items()}
        dwell = tuple(dwell_map[r] for r in range(len(dwell_map)))
        order = tuple(int(r) - 1 for r in d["order"])
        return cls(dwell, order)


def build_schedule(dwell: Sequence[float] | Sequence[DwellCertificate],
                   order: Sequence[int] | None = None) -> SwitchSchedule:
    """Round-robin schedule ``1 -> 2 -> ... -> |S| -> 1 -> ...``."""
    taus = tuple(d.tau if isinstance(d, DwellCertificate) else float(d) for d in dwell)
    return SwitchSchedule(taus, None if order is None else tuple(order))


def matrix_measure(A: np.ndarray, P: np.ndarray | None = None) -> float:
    """Weighted logarithmic norm ``mu_P(A)`` for the norm ``|P x|_2``.

    Evaluated as the top generalized eigenvalue of
    ``((P^T P) A + A^T (P^T P)) / 2`` against ``P^T P``, which equals the
    largest eigenvalue of the symmetric part of ``P A P^{-1}`` but avoids
    forming ``P^{-1}``.
    """
    A = np.asarray(A, dtype=float)
    if P is None:
        return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])
    P = np.asarray(P, dtype=float)
    Q = P.T @ P
    Q = 0.5 * (Q + Q.T)
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise ValueError("weight matrix is singular")
    S = 0.5 * (Q @ A + A.T @ Q)
    return float(eigh(S, Q, eigvals_only=True)[-1])


def lyapunov_weight(A: np.ndarray) -> np.ndarray:
    """``P = X^(1/2)`` where ``A^T X + X A = -I``.

    With this weight ``mu_P(A) = -1 / (2 lambda_max(X)) < 0``.
    """
    A = np.asarray(A, dtype=float)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise ValueError("designated matrix is not Hurwitz")
    X = solve_continuous_lyapunov(A.T, -np.eye(A.shape[0]))
    X = 0.5 * (X + X.T)
    if np.linalg.eigvalsh(X)[0] <= 0:
        raise ValueError("Lyapunov solution is not positive definite")
    P = np.real(sqrtm(X))
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class MeasureCertificate:
    value: float
    measures: tuple[float, ...]
    fractions: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.value < 0

    def cycle_exponent(self, cycle: float) -> float:
        """Log of the certified contraction of ``|P e|`` over one cycle."""
        return self.value * cycle

    def to_dict(self) -> dict:
        return {"value": self.value, "passed": self.passed,
                "measures": list(self.measures), "fractions": list(self.fractions)}


def matrix_measure_certificate(matrices: Sequence[np.ndarray], dwell: Sequence[float],
                               P: np.ndarray) -> MeasureCertificate:
    """Time-weighted measure ``sum_s nu_s mu_P(A_s)`` with ``nu_s = tau_s / sum tau``."""
    if len(matrices) != len(dwell):
        raise ValueError("one dwell time per matrix is required")
    tau = np.asarray(dwell, dtype=float)
    nu = tau / tau.sum()
    mus = tuple(matrix_measure(A, P) for A in matrices)
    value = float(np.dot(nu, mus))
    return MeasureCertificate(value, mus, tuple(float(v) for v in nu))


def certified_dwell_multipliers(matrices: Sequence[np.ndarray], periods: Sequence[float],
                                tau_hat: float, designated: int, P: np.ndarray,
                                target: float = -1.0, base_m: int = 1) -> tuple[int, ...]:
    """Choose ``m_s`` for the designated topology so the cycle exponent reaches ``target``.

    Other topologies keep ``base_m``. The designated dwell grows until
    ``sum_r tau_r mu_P(A_r) <= target``; the measure of the designated
    matrix must be negative.
    """
    if target >= 0:
        raise ValueError("target exponent must be negative")
    mus = [matrix_measure(A, P) for A in matrices]
    if mus[designated] >= 0:
        raise ValueError("designated topology has a nonnegative measure under P")
    rest = sum(mu * (tau_hat + base_m * T / 2)
               for r, (mu, T) in enumerate(zip(mus, periods)) if r != designated)
    # tau_s * mu_s <= target - rest
    need_tau = (target - rest) / mus[designated]
    T_s = periods[designated]
    m_s = max(base_m, math.ceil((need_tau - tau_hat) / (T_s / 2)))
    return tuple(m_s if r == designated else base_m for r in range(len(matrices)))
