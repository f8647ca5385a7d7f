"""Batch runner: scenario pipelines and invariant audits.

``mfgcs run <config-or-preset>`` executes the full pipeline (hypothesis
check, constants ledger, budget solve, fixed-point search, solution
verification) and writes machine-readable artifacts into the output
directory:

* ``report.json``   -- hypothesis report, constants ledger with formula
  provenance, iteration history, verification results; byte-identical for
  identical seeds (no timestamps or machine data are recorded).
* ``measures.json`` -- the equilibrium path measure (grid, particles,
  weights).
* ``value.csv``     -- value lattice rows ``t, x..., value``.
* ``sigma.csv``     -- state-flow atoms ``t, x..., weight``.

``mfgcs audit <config-or-preset>`` runs the invariant suites (geometry,
costs, measures, constants, path approximation) and writes one CSV per
suite; the exit status is nonzero when any check fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import audits
from . import constants as C
from . import lagrangian as L
from .equilibrium import damped_fixed_point_solve, verify_mild_solution
from .errors import ConfigError, MFGCSError, NotConverged
from .geometry import build_atlas
from .scenarios import PRESET_CONFIGS, Scenario, from_config, preset_config


def _load_config(ref: str, seed: int | None) -> dict:
    if os.path.exists(ref):
        with open(ref) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {ref}: invalid JSON ({exc})")
        if seed is not None:
            cfg["seed"] = int(seed)
        return cfg
    return preset_config(ref, seed)


def _canonical(obj):
    """JSON-stable conversion: numpy scalars/arrays to builtin types."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _dump_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(_canonical(payload), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _config_digest(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(_canonical(cfg), sort_keys=True).encode()
    ).hexdigest()


def run_scenario(cfg: dict, out_dir: str, allow_nonconverged: bool = False,
                 resume: bool = False) -> int:
    """Full pipeline for one scenario; returns a process exit status."""
    scenario = from_config(cfg)
    os.makedirs(out_dir, exist_ok=True)
    digest = _config_digest(cfg)
    report_path = os.path.join(out_dir, "report.json")
    if resume and os.path.exists(report_path):
        with open(report_path) as fh:
            previous = json.load(fh)
        if previous.get("config_digest") == digest:
            print(f"[resume] {out_dir} already complete; nothing to do")
            return 0

    model, terminal, domain = scenario.model, scenario.terminal, scenario.domain
    hypothesis = L.verify_hypotheses(
        model, terminal, domain, rng=np.random.default_rng(scenario.seed)
    )
    view = L.hamiltonian_view(model, domain,
                              rng=np.random.default_rng(scenario.seed + 1))
    budget_sol = C.solve_k_budget(model, terminal, view, domain)
    ledger = budget_sol.constants.ledger()
    ledger["K1"] = {"value": budget_sol.budget.k1,
                    "formula": "doubling search on the self-map inequality"}
    ledger["K2"] = {"value": budget_sol.budget.k2,
                    "formula": "(b5 + (b6 c1 + c2) K1) / (1 - b6 c1 - c2) * (1 + 1e-6)"}

    sol = damped_fixed_point_solve(
        scenario.equilibrium, scenario.m0, domain, model, terminal,
        budget_sol.budget, num_nodes=scenario.num_nodes,
        solver_opts=scenario.solver, constants_ledger=ledger,
    )
    verification = verify_mild_solution(
        sol, scenario.m0, budget_sol.budget, model, terminal, domain,
        gap_tolerance=scenario.equilibrium.mild_gap_tolerance,
        opts=scenario.solver,
    )

    report = {
        "schema_version": 1,
        "config": cfg,
        "config_digest": digest,
        "hypothesis_report": {
            "passed": hypothesis.passed,
            "entries": hypothesis.entries,
        },
        "constants_ledger": ledger,
        "equilibrium": sol.report,
        "verification": verification,
    }
    _dump_json(report_path, report)

    eta = sol.eta
    _dump_json(os.path.join(out_dir, "measures.json"), {
        "schema_version": 1,
        "grid": eta.times,
        "particles": [
            {"states": eta.states[i], "controls": eta.controls[i],
             "weight": eta.weights[i]}
            for i in range(eta.num_particles)
        ],
    })

    with open(os.path.join(out_dir, "value.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(domain.dimension)]
                        + ["value"])
        for r, t in enumerate(sol.value_times):
            for g, pt in enumerate(sol.value_points):
                writer.writerow([repr(float(t))]
                                + [repr(float(v)) for v in pt]
                                + [repr(float(sol.values[r, g]))])

    with open(os.path.join(out_dir, "sigma.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(domain.dimension)]
                        + ["weight"])
        for j, sig in enumerate(sol.sigma):
            t = eta.times[j]
            for pt, w in zip(sig.points, sig.weights):
                writer.writerow([repr(float(t))]
                                + [repr(float(v)) for v in pt]
                                + [repr(float(w))])

    print(f"[run] {scenario.name}: converged={sol.converged} "
          f"exploitability={sol.report['final_exploitability']:.3e} "
          f"iterations={sol.report['iterations']} "
          f"verification={'pass' if verification['passed'] else 'FAIL'}")
    if not sol.converged and not allow_nonconverged:
        raise NotConverged(
            "fixed-point iteration stopped above tolerance "
            f"({sol.report['final_exploitability']:.3e}); rerun with "
            "--allow-nonconverged to keep the artifacts and exit 0"
        )
    return 0 if verification["passed"] else 4


def run_audits(cfg: dict, out_dir: str, threads: int = 1) -> int:
    """Invariant suites for a scenario; one CSV per suite."""
    scenario = from_config(cfg)
    os.makedirs(out_dir, exist_ok=True)
    domain = scenario.domain
    atlas = None
    if domain.boundary_param is not None:
        atlas = build_atlas(domain, domain.collar_width / 4.0)
    suites = {
        "geometry": lambda: audits.geometry_suite(domain, atlas),
        "lagrangian": lambda: audits.lagrangian_suite(scenario),
        "measures": lambda: audits.measures_suite(),
        "constants": lambda: audits.constants_suite(scenario),
        "approx": lambda: audits.approx_suite(),
    }
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = {name: pool.submit(fn) for name, fn in suites.items()}
        collected = {name: fut.result() for name, fut in results.items()}
    else:
        collected = {name: fn() for name, fn in suites.items()}
    overall = True
    for name, rows in collected.items():
        path = os.path.join(out_dir, f"audit_{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["check", "value", "bound", "passed", "note"]
            )
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        ok = all(r["passed"] for r in rows)
        overall &= ok
        print(f"[audit] {name}: {'pass' if ok else 'FAIL'} "
              f"({sum(r['passed'] for r in rows)}/{len(rows)} checks)")
    return 0 if overall else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfgcs",
        description="Particle solver for state-constrained mean field games "
                    "of controls",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, help_text in (("run", "run a scenario pipeline"),
                           ("audit", "run the invariant audit suites")):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("config", help="path to a JSON config, or a preset "
                       "name: " + ", ".join(sorted(PRESET_CONFIGS)))
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--output", default=None,
                       help="output directory (default: from config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent audit suites")
        p.add_argument("--allow-nonconverged", action="store_true",
                       help="exit 0 even if the fixed point did not converge")
        p.add_argument("--resume", action="store_true",
                       help="skip the run if the output is already complete")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, args.seed)
        out_dir = args.output or cfg.get(
            "output_dir", os.path.join("runs", cfg.get("name", "scenario"))
        )
        if args.command == "run":
            return run_scenario(cfg, out_dir,
                                allow_nonconverged=args.allow_nonconverged,
                                resume=args.resume)
        return run_audits(cfg, out_dir, threads=args.threads)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MFGCSError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
