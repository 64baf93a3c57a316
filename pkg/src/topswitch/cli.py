"""Command-line entry point: ``topswitch {run,check,synthesize,observe}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dynamics import write_csv, Trajectory
from .scenario import (EXIT_DWELL, EXIT_OK, EXIT_SCHEMA, ScenarioError, check_scenario,
                       load_scenario, prepare, replay_observer, run_scenario, synthesize_scenario)
from .switching import IncommensurableSpectrumError, InfeasibleDwellTimeError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topswitch",
                                description="Stealthy attacks and detection under topology switching")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("scenario", type=Path, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed for randomized suites; the pipeline itself is deterministic")

    r = sub.add_parser("run", help="nominal, attacked and observer runs with artifacts")
    common(r)
    r.add_argument("--out", type=Path, default=None, help="output directory")
    r.add_argument("--sample-dt", type=float, default=None, help="override the sampling step")

    c = sub.add_parser("check", help="static predicates only")
    common(c)

    s = sub.add_parser("synthesize", help="attack synthesis only")
    common(s)
    s.add_argument("--out", type=Path, default=None, help="write plan.json here")

    o = sub.add_parser("observe", help="replay a recorded plant trace through the observer")
    common(o)
    o.add_argument("trace", type=Path, help="plant trajectory CSV (e.g. attacked.csv)")
    o.add_argument("--out", type=Path, default=None, help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.seed is not None:
        np.random.seed(args.seed)

    if args.verb == "run":
        code, report = run_scenario(args.scenario, args.out, args.sample_dt)
        if "error" in report:
            print(f"error: {report['error']}", file=sys.stderr)
        else:
            det = report["detection"]
            print(f"detectable={report['detectability']['detectable']} "
                  f"plan={'yes' if report['plan'] else 'none'} "
                  f"detected={det['detected']} max_residual={det['max_residual']:.3e} "
                  f"exit={code}")
        return code

    if args.verb == "check":
        code, rows = check_scenario(args.scenario)
        width = max(len(name) for name, _, _ in rows)
        for name, ok, detail in rows:
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        return code

    if args.verb == "synthesize":
        code, out = synthesize_scenario(args.scenario)
        text = json.dumps(out, indent=2, sort_keys=True)
        if args.out is not None and code == EXIT_OK:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "plan.json").write_text(text + "\n")
        print(text)
        return code

    if args.verb == "observe":
        try:
            sc = load_scenario(args.scenario)
            t, X, res, report = replay_observer(sc, args.trace)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        except (InfeasibleDwellTimeError, IncommensurableSpectrumError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DWELL
        out = args.out or Path(sc.output or "out")
        out.mkdir(parents=True, exist_ok=True)
        prep = prepare(sc)
        topo = np.empty(t.size, dtype=int)
        topo[:-1] = prep.schedule.topology_indices(0.5 * (t[:-1] + t[1:]))
        topo[-1] = prep.schedule.topology_at(float(t[-1]))
        sw = prep.schedule.switch_times(float(t[-1]))
        traj = Trajectory(t, X, topo, sw, prep.schedule.topology_indices(sw))
        write_csv(out / "observer_replay.csv", traj, res)
        (out / "detection.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        print(json.dumps(report.to_dict(), sort_keys=True))
        return EXIT_OK
    return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
