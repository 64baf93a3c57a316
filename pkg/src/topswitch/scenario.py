"""JSON scenario files and the end-to-end experiment pipeline.

Agent and topology indices in scenario files are 1-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from scipy.linalg import expm

from . import attack as atk
from .dynamics import (Trajectory, consensus_error, output_matrix, read_csv, simulate,
                       system_matrix, write_csv)
from .graph import (TopologySet, WeightedGraph, detectability_check, distinct_eigenvalue_check,
                    laplacian, spectral_ratio_check)
from .observer import (ObserverConfig, detect, gain_matrices, hurwitz_check, observer_matrix,
                       run_observer)
from .switching import (DwellTimeParams, IncommensurableSpectrumError, InfeasibleDwellTimeError,
                        SwitchSchedule, build_schedule, certified_dwell_multipliers, dwell_times,
                        lyapunov_weight, matrix_measure_certificate, period, suggest_dwell_params)

__all__ = [
    "EXIT_OK",
    "EXIT_SCHEMA",
    "EXIT_DWELL",
    "EXIT_DIVERGED",
    "SCENARIO_SCHEMA",
    "ScenarioError",
    "Scenario",
    "load_scenario",
    "prepare",
    "run_scenario",
    "check_scenario",
    "synthesize_scenario",
    "replay_observer",
]

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DWELL = 3
EXIT_DIVERGED = 4

MAX_SAMPLES = 2_000_000

_vec = {"type": "array", "items": {"type": "number"}}
_graph = {
    "type": "object",
    "required": ["n", "edges"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "integer", "minimum": 1},
                            {"type": "number", "minimum": 0}]}},
    },
}
_plan = {
    "type": "object",
    "required": ["eta", "rho", "g", "z_breve0"],
    "properties": {"eta": {"type": "number"}, "rho": {"type": "number", "minimum": 0},
                   "g": _vec, "z_breve0": _vec,
                   "misbehaving": {"type": "array", "items": {"type": "integer", "minimum": 1}}},
}

SCENARIO_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "topologies", "monitored", "horizon", "x0", "v0"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "topologies": {"type": "array", "minItems": 1, "items": _graph},
        "monitored": {"type": "array", "minItems": 1, "uniqueItems": True,
                      "items": {"type": "integer", "minimum": 1}},
        "dwell": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau_hat": {"type": "number", "exclusiveMinimum": 0},
                "m": {"oneOf": [{"type": "integer", "minimum": 1},
                                {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "beta": {"type": "number"},
                "alpha": {"type": "number"},
                "kappa": {"type": "integer"},
                "auto": {"type": "boolean"},
                "certify_observer": {"type": "boolean"},
                "target_exponent": {"type": "number", "exclusiveMaximum": 0},
            },
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "sample_dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "x0": _vec,
        "v0": _vec,
        "attack": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["none", "synthesize", "explicit"]},
                "eta": {"type": "array", "items": {"type": "number"}},
                "amplitude": {"type": "number", "exclusiveMinimum": 0},
                "start": {"enum": ["zero", "algorithm"]},
                "misbehaving": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                "minItems": 1, "uniqueItems": True},
                "plan": _plan,
            },
        },
        "observer": {
            "type": "object",
            "required": ["psi", "theta"],
            "additionalProperties": False,
            "properties": {
                "psi": _vec, "theta": _vec,
                "threshold": {"type": "number", "exclusiveMinimum": 0},
                "window": {"type": "number", "minimum": 0},
                "x0": _vec, "v0": _vec,
            },
        },
        "output": {"type": "string"},
    },
}


class ScenarioError(ValueError):
    """Schema or consistency violation in a scenario file."""


@dataclass
class Scenario:
    raw: dict
    graphs: TopologySet
    monitored: tuple[int, ...]
    horizon: float
    sample_dt: float | None
    z0: np.ndarray
    observer: ObserverConfig
    observer_z0: np.ndarray | None
    attack: dict
    dwell: dict
    output: str | None
    path: Path | None = None

    @property
    def n(self) -> int:
        return self.graphs.n


_VALIDATOR = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)


def _validate(raw: Any) -> None:
    try:
        _VALIDATOR.validate(raw)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {loc}: {exc.message}") from None


def load_scenario(path_or_dict: str | Path | dict) -> Scenario:
    """Parse and validate a scenario; raises :class:`ScenarioError`."""
    path = None
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        path = Path(path_or_dict)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from None
    _validate(raw)
    try:
        graphs = TopologySet(tuple(WeightedGraph.from_dict(g) for g in raw["topologies"]))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    n = graphs.n
    mon = sorted(int(i) - 1 for i in raw["monitored"])
    if mon[-1] >= n:
        raise ScenarioError(f"monitored agent {mon[-1] + 1} outside 1..{n}")

    def vec(key, src=raw, size=n):
        v = np.asarray(src[key], dtype=float)
        if v.size != size:
            raise ScenarioError(f"{key} must have length {size}")
        return v

    z0 = np.concatenate([vec("x0"), vec("v0")])
    obs = raw.get("observer", {"psi": [1e-6] * len(mon), "theta": [1e-6] * len(mon)})
    try:
        cfg = ObserverConfig(tuple(mon), tuple(obs["psi"]), tuple(obs["theta"]),
                             obs.get("threshold", 1e-4), obs.get("window", 0.05))
    except ValueError as exc:
        raise ScenarioError(f"observer: {exc}") from None
    obs_z0 = None
    if "x0" in obs or "v0" in obs:
        if not ("x0" in obs and "v0" in obs):
            raise ScenarioError("observer initial data needs both x0 and v0")
        obs_z0 = np.concatenate([vec("x0", obs), vec("v0", obs)])
    att = raw.get("attack", {"mode": "none"})
    if att["mode"] == "explicit":
        if "plan" not in att:
            raise ScenarioError("explicit attack needs a plan")
        p = att["plan"]
        if len(p["g"]) != n or len(p["z_breve0"]) != 2 * n:
            raise ScenarioError("plan vectors do not match the agent count")
        if any(not 1 <= i <= n for i in p.get("misbehaving", [])):
            raise ScenarioError("misbehaving agent out of range")
        try:
            atk.ZdaPlan.from_dict(p)
        except ValueError as exc:
            raise ScenarioError(f"invalid attack plan: {exc}") from None
    if any(not 1 <= i <= n for i in att.get("misbehaving", [])):
        raise ScenarioError("misbehaving agent out of range")
    dwell = raw.get("dwell", {})
    m = dwell.get("m", 1)
    if isinstance(m, list) and len(m) != len(graphs):
        raise ScenarioError("dwell.m needs one entry per topology")
    sdt = raw.get("sample_dt", None)
    if sdt is not None and raw["horizon"] / sdt > MAX_SAMPLES:
        raise ScenarioError(f"horizon / sample_dt exceeds {MAX_SAMPLES} samples")
    return Scenario(raw, graphs, tuple(mon), float(raw["horizon"]), sdt, z0, cfg, obs_z0,
                    att, dwell, raw.get("output"), path)


@dataclass
class Prepared:
    """Static analysis of a scenario: matrices, dwell times and verdicts."""

    sc: Scenario
    systems: list
    observers: list
    C: np.ndarray
    schedule: SwitchSchedule
    params: DwellTimeParams
    dwell_certs: list
    periods: list
    checks: dict = field(default_factory=dict)
    measure: Any = None
    designated: int | None = None


def _params(sc: Scenario, m) -> DwellTimeParams:
    d = sc.dwell
    tau_hat = float(d.get("tau_hat", 0.2))
    m_field = tuple(m) if isinstance(m, (list, tuple)) else int(m)
    if d.get("auto", False):
        return suggest_dwell_params(list(sc.graphs), tau_hat=tau_hat, m=m_field)
    return DwellTimeParams(beta=float(d.get("beta", 0.5)),
                           alpha=None if d.get("alpha") is None else float(d["alpha"]),
                           kappa=int(d.get("kappa", 1)), m=m_field, tau_hat=tau_hat)


def prepare(sc: Scenario) -> Prepared:
    """Run every static predicate and build the schedule.

    Raises
    ------
    InfeasibleDwellTimeError, IncommensurableSpectrumError
    """
    graphs = list(sc.graphs)
    systems = [system_matrix(laplacian(g)) for g in graphs]
    observers = [observer_matrix(g, sc.observer) for g in graphs]
    C = output_matrix(sc.n, sc.monitored)
    checks = {
        "spectral_ratio": [spectral_ratio_check(g) for g in graphs],
        "distinct_eigenvalues": [distinct_eigenvalue_check(g) for g in graphs],
        "hurwitz": [hurwitz_check(A) for A in observers],
        "detectability": detectability_check(graphs, sc.monitored),
    }
    periods = [period(g) for g in graphs]
    m = sc.dwell.get("m", 1)
    params = _params(sc, m)
    certs = dwell_times(graphs, params)
    designated = next((r for r, ok in enumerate(checks["hurwitz"]) if ok), None)
    measure = None
    if designated is not None:
        P = lyapunov_weight(observers[designated])
        if sc.dwell.get("certify_observer", False):
            target = float(sc.dwell.get("target_exponent", -1.0))
            ms = certified_dwell_multipliers(observers, periods, params.tau_hat, designated, P,
                                             target=target, base_m=params.m_for(0))
            params = _params(sc, ms)
            certs = dwell_times(graphs, params)
        measure = matrix_measure_certificate(observers, [c.tau for c in certs], P)
    schedule = build_schedule(certs)
    return Prepared(sc, systems, observers, C, schedule, params, certs, periods, checks,
                    measure, designated)


def _synthesize(sc: Scenario, systems: list, C: np.ndarray) -> atk.ZdaPlan | None:
    att = sc.attack
    allowed = att.get("misbehaving")
    return atk.synthesize_zda(systems, C, att.get("eta"),
                              amplitude=float(att.get("amplitude", 1e-3)),
                              misbehaving=None if allowed is None else [i - 1 for i in allowed])


def _plan_for(prep: Prepared) -> tuple[atk.ZdaPlan | None, atk.AttackStart | None]:
    att = prep.sc.attack
    if att["mode"] == "none":
        return None, None
    if att["mode"] == "explicit":
        return atk.ZdaPlan.from_dict(att["plan"]), None
    plan = _synthesize(prep.sc, prep.systems, prep.C)
    if plan is None or att.get("start", "zero") == "zero":
        return plan, None
    plan, start = atk.plan_attack_start(plan, prep.systems, prep.C, prep.schedule)
    return plan, start


def _static_dict(prep: Prepared) -> dict:
    ch = prep.checks
    det = ch["detectability"]
    return {
        "detectability": {"detectable": det.detectable,
                          "witness": [sorted(i + 1 for i in c) for c in det.witness]},
        "spectral_ratio": [bool(r) for r in ch["spectral_ratio"]],
        "distinct_eigenvalues": ch["distinct_eigenvalues"],
        "hurwitz": ch["hurwitz"],
        "periods": prep.periods,
        "dwell": {"params": {"beta": prep.params.beta, "alpha": prep.dwell_certs[0].alpha,
                             "kappa": prep.params.kappa, "tau_hat": prep.params.tau_hat,
                             "xi": prep.dwell_certs[0].xi},
                  "m": [c.m for c in prep.dwell_certs],
                  "tau": [c.tau for c in prep.dwell_certs],
                  "passed": all(c.passed for c in prep.dwell_certs)},
        "measure_certificate": None if prep.measure is None else {
            **prep.measure.to_dict(), "designated": prep.designated + 1},
    }


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_scenario(path_or_scenario, out_dir: str | Path | None = None,
                 sample_dt: float | None = None) -> tuple[int, dict]:
    """Full pipeline; returns ``(exit_code, report)`` and writes artifacts.

    Files: ``nominal.csv``, ``attacked.csv`` (attack only), ``observer.csv``,
    ``schedule.json`` and ``report.json``.
    """
    try:
        sc = path_or_scenario if isinstance(path_or_scenario, Scenario) else load_scenario(path_or_scenario)
        if sample_dt is not None:
            sc.sample_dt = sample_dt
    except ScenarioError as exc:
        return EXIT_SCHEMA, {"error": str(exc)}
    out = Path(out_dir or sc.output or "out")
    try:
        prep = prepare(sc)
    except (InfeasibleDwellTimeError, IncommensurableSpectrumError) as exc:
        return EXIT_DWELL, {"error": str(exc)}
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"schema": 1, "name": sc.raw.get("name"), **_static_dict(prep)}
    _write_json(out / "schedule.json", prep.schedule.to_dict(sc.horizon))

    nominal = simulate(prep.systems, prep.schedule, sc.z0, sc.horizon, sc.sample_dt, C=prep.C)
    write_csv(out / "nominal.csv", nominal)
    report["nominal"] = {"status": nominal.status,
                         "final_consensus_error": consensus_error(nominal.z[-1])}

    plan, start = _plan_for(prep)
    report["plan"] = None if plan is None else plan.to_dict()
    report["attack_start"] = None if start is None else {
        "branch": start.branch, "rho": start.rho, "interval": start.k}
    plant_z0 = sc.z0 if plan is None else sc.z0 + plan.z_breve0
    obs_z0 = sc.observer_z0 if sc.observer_z0 is not None else sc.z0
    run = run_observer(prep.systems, prep.observers, prep.schedule, sc.observer, plant_z0,
                       obs_z0, sc.horizon, plan, sc.sample_dt)
    write_csv(out / "observer.csv", _replace_z(run.plant, run.observer), run.residual)
    if plan is not None:
        write_csv(out / "attacked.csv", run.plant, run.residual)
        cert = atk.certify_plan(plan, prep.systems, prep.C, prep.schedule)
        t_common = min(nominal.t.size, run.plant.t.size)
        dev = run.plant.z[:t_common] - nominal.z[:t_common]
        report["stealth"] = cert.to_dict()
        report["attacked"] = {"status": run.plant.status,
                              "max_abs_state": float(np.max(np.abs(run.plant.z))),
                              "max_deviation": float(np.max(np.abs(dev)))}
    else:
        report["stealth"] = None
        report["attacked"] = None
    report["detection"] = run.report.to_dict()
    e0 = np.linalg.norm(run.error[0])
    report["observer"] = {"status": run.plant.status,
                          "initial_error_norm": float(e0),
                          "final_error_norm": float(np.linalg.norm(run.error[-1]))}
    code = EXIT_OK
    if nominal.diverged or (plan is None and run.plant.diverged):
        code = EXIT_DIVERGED
    report["exit_code"] = code
    _write_json(out / "report.json", report)
    return code, report


def _replace_z(traj, z):
    return Trajectory(traj.t, z, traj.topo, traj.switch_times, traj.switch_topos, traj.status, traj.C)


def check_scenario(path_or_scenario) -> tuple[int, list[tuple[str, bool, str]]]:
    """Static predicates only. Returns ``(exit_code, rows)``."""
    try:
        sc = path_or_scenario if isinstance(path_or_scenario, Scenario) else load_scenario(path_or_scenario)
    except ScenarioError as exc:
        return EXIT_SCHEMA, [("schema", False, str(exc))]
    rows: list[tuple[str, bool, str]] = [("schema", True, "valid")]
    graphs = list(sc.graphs)
    for r, g in enumerate(graphs, start=1):
        res = spectral_ratio_check(g)
        detail = "ok" if res else "irrational ratio " + ", ".join(f"{f[2]:.10g}" for f in res.failures)
        rows.append((f"commensurate spectrum, topology {r}", bool(res), detail))
    for r, g in enumerate(graphs, start=1):
        d = distinct_eigenvalue_check(g)
        h = hurwitz_check(observer_matrix(g, sc.observer))
        rows.append((f"distinct eigenvalues, topology {r}", d, ""))
        rows.append((f"observer Hurwitz, topology {r}", h, ""))
    det = detectability_check(graphs, sc.monitored)
    rows.append(("detectability (every component monitored)", det.detectable,
                 "" if det else "unmonitored: " + "; ".join(
                     str(sorted(i + 1 for i in c)) for c in det.witness)))
    try:
        prep = prepare(sc)
    except (InfeasibleDwellTimeError, IncommensurableSpectrumError) as exc:
        rows.append(("dwell times", False, str(exc)))
        return EXIT_DWELL, rows
    rows.append(("dwell times", True, ", ".join(f"{c.tau:.6g}" for c in prep.dwell_certs)))
    if prep.measure is None:
        rows.append(("matrix-measure certificate", False, "no Hurwitz topology in the set"))
    else:
        rows.append(("matrix-measure certificate", prep.measure.passed,
                     f"value {prep.measure.value:.6g}"))
    return EXIT_OK, rows


def synthesize_scenario(path_or_scenario) -> tuple[int, dict]:
    """Attack synthesis only; returns ``(exit_code, result)``."""
    try:
        sc = path_or_scenario if isinstance(path_or_scenario, Scenario) else load_scenario(path_or_scenario)
    except ScenarioError as exc:
        return EXIT_SCHEMA, {"error": str(exc)}
    systems = [system_matrix(laplacian(g)) for g in sc.graphs]
    C = output_matrix(sc.n, sc.monitored)
    plan = _synthesize(sc, systems, C)
    det = detectability_check(list(sc.graphs), sc.monitored)
    out = {"detectable": det.detectable, "plan": None if plan is None else plan.to_dict()}
    if plan is not None:
        out["residuals"] = list(atk.certify_plan(plan, systems, C).residuals)
    return EXIT_OK, out


def replay_observer(sc: Scenario, trace_path: str | Path, observer_z0: np.ndarray | None = None):
    """Drive the observer with a recorded plant trace.

    The plant state is interpolated linearly between samples, so the replay
    is exact only up to that hold; residuals carry an error of order
    ``gain * dt^2 * |z''|``. The topology column of the trace must match
    the scenario schedule.
    """
    prep = prepare(sc)
    data = read_csv(trace_path)
    t, Z, topo = data["t"], data["z"], data["topo"]
    if t.size < 2:
        raise ScenarioError("trace needs at least two samples")
    mid = prep.schedule.topology_indices(0.5 * (t[:-1] + t[1:]))
    if not np.array_equal(mid, topo[:-1]):
        raise ScenarioError("trace topology sequence does not match the scenario schedule")
    n, m = sc.n, 2 * sc.n
    Phi, Theta = gain_matrices(sc.observer, n)
    K = np.zeros((m, m))
    K[n:, :n], K[n:, n:] = Phi, Theta
    # same default as the full run: the observer receives the reported initial data
    if observer_z0 is None:
        observer_z0 = sc.observer_z0 if sc.observer_z0 is not None else sc.z0
    xo = np.array(observer_z0, dtype=float)
    X = np.empty_like(Z)
    X[0] = xo
    for k in range(t.size - 1):
        dt = t[k + 1] - t[k]
        Ao = prep.observers[int(mid[k])]
        M = np.zeros((m + 2, m + 2))
        M[:m, :m] = Ao
        M[:m, m] = K @ Z[k]
        M[:m, m + 1] = K @ (Z[k + 1] - Z[k]) / dt
        M[m + 1, m] = 1.0
        E = expm(M * dt)
        X[k + 1] = E[:m, :m] @ X[k] + E[:m, m]
    C = prep.C
    res = (X - Z) @ C.T
    report = detect(t, res, sc.observer.detect_threshold, sc.observer.detect_window)
    return t, X, res, report
