"""Fixed-point search for constrained equilibria and solution extraction.

An equilibrium candidate is a path measure whose supported particles are all
cost-optimal against the measure itself.  The search iterates damped
fictitious play: replace each initial atom's conditional by the Dirac at its
best response, mix with the current iterate, prune negligible particles
within each initial-atom group (so the initial marginal is preserved
exactly), and stop when exploitability -- the weighted excess of supported
costs over best-response costs -- falls under tolerance.  Existence theory
gives no constructive iteration, so non-convergence at the cap is a
legitimate, explicitly reported outcome.

The extracted solution pairs the equilibrium measure with the value function
of the frozen population cost (computed by sub-horizon best responses on a
space-time lattice) and the state-distribution flow of its time slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleStart
from .geometry import Domain
from .lagrangian import LagrangianModel, TerminalCost
from .measures import (
    JointMeasure,
    PathMeasure,
    StateMeasure,
    push_forward_at_time,
    state_marginal,
)
from .trajopt import (
    BestResponse,
    SolveOptions,
    _integrate,
    _quad_weights,
    best_response_batch,
    coupling_of,
)


@dataclass(frozen=True)
class EquilibriumConfig:
    damping: str | float = "harmonic"  # alpha_k = 2/(k+2), or a fixed value
    max_iterations: int = 200
    exploitability_tolerance: float = 1e-3
    step_tolerance: float = 0.0        # optional early stop on the W1 step bound
    prune_threshold: float = 1e-6
    seed: int = 0
    value_time_points: int = 5
    value_space_points: int = 11
    mild_gap_tolerance: float = 5e-3

    def alpha(self, k: int) -> float:
        if self.damping == "harmonic":
            return 2.0 / (k + 2.0)
        a = float(self.damping)
        if not (0.0 <= a <= 1.0):
            raise ValueError("fixed damping must lie in [0, 1]")
        return a


def particle_costs(eta: PathMeasure, model: LagrangianModel,
                   terminal: TerminalCost) -> np.ndarray:
    """Cost of every supported particle against the measure itself."""
    stats, sigma_T = coupling_of(model, eta)
    ts = eta.times
    wq = _quad_weights(len(ts), float(ts[1] - ts[0]))
    run = np.sum(
        wq * model.value(ts[None, :], eta.states, eta.controls, stats),
        axis=-1,
    )
    return run + terminal.value(eta.states[:, -1, :], sigma_T)


def _group_key(x0: np.ndarray) -> tuple:
    return tuple(np.round(np.asarray(x0, dtype=float) / 1e-12).astype(np.int64))


def _distinct_initials(eta: PathMeasure):
    x0 = eta.initial_points()
    keys = np.round(x0 / 1e-12).astype(np.int64)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True,
                                     return_inverse=True)
    return x0[first], inverse


def best_response_map(eta: PathMeasure, budget, model: LagrangianModel,
                      terminal: TerminalCost, domain: Domain,
                      opts: SolveOptions | None = None):
    """One selection from the best-response correspondence.

    For each distinct initial atom the conditional measure is replaced by
    the Dirac at that atom's computed best response; the initial marginal is
    preserved atom-for-atom.  Returns ``(image, responses)`` with one
    :class:`BestResponse` per distinct initial point, in the order of
    ``image``'s particles.
    """
    x0s, inverse = _distinct_initials(eta)
    masses = np.array([
        float(np.sum(eta.weights[inverse == g])) for g in range(len(x0s))
    ])
    responses = best_response_batch(
        x0s, eta, (budget.k1, budget.k2), model, terminal, domain, opts
    )
    dt = float(eta.times[1] - eta.times[0])
    controls = np.stack([r.control.values for r in responses])
    states = _integrate(x0s, controls, dt)
    image = PathMeasure(times=eta.times, states=states, controls=controls,
                        weights=masses)
    return image, responses


def exploitability(eta: PathMeasure, budget, model: LagrangianModel,
                   terminal: TerminalCost, domain: Domain,
                   opts: SolveOptions | None = None,
                   responses: list[BestResponse] | None = None) -> float:
    """Weighted excess of supported-particle costs over best-response costs.

    Nonnegative up to solver tolerance; at (or below) zero exactly when the
    measure certifies as a discrete constrained equilibrium.
    """
    detail = exploitability_report(eta, budget, model, terminal, domain,
                                   opts, responses)
    return detail["exploitability"]


def exploitability_report(eta: PathMeasure, budget, model: LagrangianModel,
                          terminal: TerminalCost, domain: Domain,
                          opts: SolveOptions | None = None,
                          responses: list[BestResponse] | None = None) -> dict:
    x0s, inverse = _distinct_initials(eta)
    if responses is None:
        responses = best_response_batch(
            x0s, eta, (budget.k1, budget.k2), model, terminal, domain, opts
        )
    br_cost = np.array([r.cost for r in responses])
    costs = particle_costs(eta, model, terminal)
    gaps = costs - br_cost[inverse]
    value = float(np.sum(eta.weights * np.maximum(0.0, gaps)))
    return {
        "exploitability": value,
        "max_gap": float(np.max(gaps)),
        "min_gap": float(np.min(gaps)),
        "skipped": [i for i, r in enumerate(responses) if r.stalled],
    }


def budget_audit(eta: PathMeasure, domain: Domain, budget) -> dict:
    """Membership check of every particle in the budgeted feasible class."""
    dt = float(eta.times[1] - eta.times[0])
    speeds = np.linalg.norm(eta.controls, axis=-1)
    slopes = (np.linalg.norm(np.diff(eta.controls, axis=1), axis=-1) / dt
              if eta.controls.shape[1] > 1 else np.zeros((len(eta.weights), 0)))
    min_b = float(np.min(domain.signed_distance(eta.states)))
    max_speed = float(np.max(speeds))
    max_slope = float(np.max(slopes)) if slopes.size else 0.0
    return {
        "ok": bool(max_speed <= budget.k1 + 1e-9
                   and max_slope <= budget.k2 + 1e-9
                   and min_b >= -1e-9),
        "max_speed": max_speed,
        "max_slope": max_slope,
        "min_distance": min_b,
    }


def _mix_grouped(eta: PathMeasure, image: PathMeasure, alpha: float,
                 prune: float) -> tuple[PathMeasure, float]:
    """Damped mixture with per-initial-atom pruning and renormalization.

    Pruning renormalizes inside each initial-atom group so the initial
    marginal stays exactly equal to the starting distribution.
    """
    states = np.concatenate([eta.states, image.states], axis=0)
    controls = np.concatenate([eta.controls, image.controls], axis=0)
    weights = np.concatenate([(1.0 - alpha) * eta.weights,
                              alpha * image.weights])
    if alpha >= 1.0:
        states, controls, weights = image.states, image.controls, image.weights
    x0 = states[:, 0, :]
    keys = np.round(x0 / 1e-12).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    keep = np.ones(len(weights), dtype=bool)
    pruned_mass = 0.0
    for g in range(len(uniq)):
        sel = np.flatnonzero(inverse == g)
        w = weights[sel]
        mass = float(np.sum(w))
        drop = sel[w < prune * mass]
        if len(drop) == len(sel):
            drop = drop[np.argsort(weights[drop])[:-1]]  # keep the heaviest
        if len(drop):
            pruned_mass += float(np.sum(weights[drop]))
            keep[drop] = False
            kept = np.setdiff1d(sel, drop)
            weights[kept] *= mass / float(np.sum(weights[kept]))
    out = PathMeasure(times=eta.times, states=states[keep],
                      controls=controls[keep], weights=weights[keep])
    return out, pruned_mass


def _w1_step_upper(eta: PathMeasure, image: PathMeasure, alpha: float) -> float:
    """Upper bound on the path-space W1 step via the per-atom coupling.

    Each initial atom's conditional moves (with the mixture coefficient)
    onto a Dirac; the conditional-to-Dirac transport cost is exact and the
    per-atom mixture coupling certifies the bound.
    """
    x0s, inverse = _distinct_initials(eta)
    img_lookup = {
        _group_key(x): i for i, x in enumerate(image.initial_points())
    }
    total = 0.0
    for g, x in enumerate(x0s):
        sel = inverse == g
        j = img_lookup[_group_key(x)]
        dx = np.max(np.linalg.norm(eta.states[sel] - image.states[j], axis=-1),
                    axis=-1)
        du = np.max(np.linalg.norm(eta.controls[sel] - image.controls[j],
                                   axis=-1), axis=-1)
        total += float(np.sum(eta.weights[sel] * (dx + du)))
    return alpha * total


def initial_measure(m0: StateMeasure, times: np.ndarray,
                    domain: Domain) -> PathMeasure:
    """Standing-still population: one zero-control particle per atom."""
    if np.any(domain.signed_distance(m0.points) < -1e-12):
        raise InfeasibleStart("an initial atom lies outside the region")
    P, d = m0.points.shape
    M = len(times)
    states = np.repeat(m0.points[:, None, :], M, axis=1)
    controls = np.zeros((P, M, d))
    return PathMeasure(times=times, states=states, controls=controls,
                       weights=m0.weights)


@dataclass
class MildSolution:
    """Equilibrium measure with its value lattice and state flow."""

    eta: PathMeasure
    value_times: np.ndarray      # (n_t,)
    value_points: np.ndarray     # (G, d)
    values: np.ndarray           # (n_t, G)
    sigma: list[StateMeasure]    # one per grid node
    report: dict
    converged: bool


def value_function(eta: PathMeasure, time_indices, points, budget,
                   model: LagrangianModel, terminal: TerminalCost,
                   domain: Domain, opts: SolveOptions | None = None) -> np.ndarray:
    """Optimal cost-to-go on a lattice, by sub-horizon best responses.

    At the final time the value is the terminal cost against the measure's
    terminal state marginal, exactly.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _, sigma_T = coupling_of(model, eta)
    out = np.empty((len(time_indices), len(points)))
    N = len(eta.times) - 1
    for row, j in enumerate(time_indices):
        if j == N:
            out[row] = terminal.value(points, sigma_T)
        else:
            responses = best_response_batch(
                points, eta, (budget.k1, budget.k2), model, terminal, domain,
                opts, t_index=int(j),
            )
            out[row] = [r.cost for r in responses]
    return out


def _value_lattice_points(domain: Domain, per_axis: int) -> np.ndarray:
    grid = domain.ambient_grid(per_axis)
    return grid[domain.signed_distance(grid) >= 0.0]


def damped_fixed_point_solve(config: EquilibriumConfig, m0: StateMeasure,
                             domain: Domain, model: LagrangianModel,
                             terminal: TerminalCost, budget,
                             num_nodes: int = 200,
                             solver_opts: SolveOptions | None = None,
                             constants_ledger: dict | None = None) -> MildSolution:
    """Damped fictitious play on path measures, with certification.

    Iterates mixture steps toward the best-response image until
    exploitability falls under tolerance or the iteration cap is reached;
    the returned report carries the full history (exploitability, W1 step
    bounds, pruned mass, support size, budget audits) and the outcome flag.
    Non-convergence is reported, never silent.
    """
    times = np.linspace(0.0, model.horizon, num_nodes + 1)
    solver_opts = SolveOptions(seed=config.seed) if solver_opts is None else solver_opts
    eta = initial_measure(m0, times, domain)
    history = []
    converged = False
    warm = None
    final_responses = None
    for k in range(config.max_iterations + 1):
        opts_k = solver_opts if warm is None else replace(
            solver_opts, warm_start=warm
        )
        image, responses = best_response_map(
            eta, budget, model, terminal, domain, opts_k
        )
        warm = image.controls
        detail = exploitability_report(eta, budget, model, terminal, domain,
                                       responses=responses)
        audit = budget_audit(eta, domain, budget)
        row = {
            "iteration": k,
            "exploitability": detail["exploitability"],
            "max_gap": detail["max_gap"],
            "support": eta.num_particles,
            "budget_ok": audit["ok"],
            "min_distance": audit["min_distance"],
        }
        if detail["exploitability"] <= config.exploitability_tolerance:
            history.append(row)
            converged = True
            final_responses = responses
            break
        if k == config.max_iterations:
            history.append(row)
            final_responses = responses
            break
        alpha = config.alpha(k)
        eta_next, pruned = _mix_grouped(eta, image, alpha,
                                        config.prune_threshold)
        row["alpha"] = alpha
        row["pruned_mass"] = pruned
        row["w1_step_upper"] = _w1_step_upper(eta, image, alpha)
        history.append(row)
        eta = eta_next
        if config.step_tolerance and row["w1_step_upper"] < config.step_tolerance:
            break

    # value lattice and state flow of the final iterate
    n_t = max(2, config.value_time_points)
    t_idx = np.unique(np.linspace(0, num_nodes, n_t).astype(int))
    pts = _value_lattice_points(domain, config.value_space_points)
    values = value_function(eta, t_idx, pts, budget, model, terminal, domain,
                            solver_opts)
    sigma = [
        state_marginal(JointMeasure(eta.states[:, j], eta.controls[:, j],
                                    eta.weights))
        for j in range(num_nodes + 1)
    ]
    report = {
        "converged": converged,
        "iterations": history[-1]["iteration"],
        "final_exploitability": history[-1]["exploitability"],
        "history": history,
        "budget_audit": budget_audit(eta, domain, budget),
        "budget": {"k1": budget.k1, "k2": budget.k2},
        "stalled_responses": detail["skipped"],
    }
    if constants_ledger is not None:
        report["constants_ledger"] = constants_ledger
    return MildSolution(
        eta=eta,
        value_times=times[t_idx],
        value_points=pts,
        values=values,
        sigma=sigma,
        report=report,
        converged=converged,
    )


def verify_mild_solution(sol: MildSolution, m0: StateMeasure, budget,
                         model: LagrangianModel, terminal: TerminalCost,
                         domain: Domain, gap_tolerance: float | None = None,
                         opts: SolveOptions | None = None) -> dict:
    """Check the three defining properties of an extracted solution.

    (i) the state flow starts at the prescribed initial distribution,
    atom-for-atom; (ii) every stored slice equals the state marginal of the
    measure's pushforward at that node; (iii) every supported particle's
    cost tracks the optimal value from its start point within tolerance.
    """
    eta = sol.eta
    gap_tol = gap_tolerance if gap_tolerance is not None else 5e-3

    init = eta.initial_distribution()
    ref_pts, ref_w = m0.points, m0.weights
    ok_i = len(init) == len(ref_pts)
    if ok_i:
        order_a = np.lexsort(init.points.T)
        order_b = np.lexsort(ref_pts.T)
        ok_i = bool(
            np.max(np.linalg.norm(init.points[order_a] - ref_pts[order_b],
                                  axis=-1)) < 1e-10
            and np.max(np.abs(init.weights[order_a] - ref_w[order_b])) < 1e-10
        )

    ok_ii = True
    worst_ii = 0.0
    for j, sig in enumerate(sol.sigma):
        ref = state_marginal(push_forward_at_time(eta, eta.times[j]))
        if len(sig) != len(ref):
            ok_ii = False
            break
        err = max(
            float(np.max(np.linalg.norm(sig.points - ref.points, axis=-1))),
            float(np.max(np.abs(sig.weights - ref.weights))),
        )
        worst_ii = max(worst_ii, err)
        if err > 1e-10:
            ok_ii = False

    x0s, inverse = _distinct_initials(eta)
    responses = best_response_batch(
        x0s, eta, (budget.k1, budget.k2), model, terminal, domain, opts
    )
    v0 = np.array([r.cost for r in responses])
    costs = particle_costs(eta, model, terminal)
    gaps = np.maximum(0.0, costs - v0[inverse])
    ok_iii = bool(np.max(gaps) <= gap_tol)

    return {
        "initial_marginal": {"passed": bool(ok_i)},
        "slice_identity": {"passed": bool(ok_ii), "worst_error": worst_ii},
        "support_optimality": {
            "passed": ok_iii,
            "max_gap": float(np.max(gaps)),
            "tolerance": gap_tol,
        },
        "passed": bool(ok_i and ok_ii and ok_iii),
    }
