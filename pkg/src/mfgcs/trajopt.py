"""Discrete trajectories, best responses, and optimality certificates.

Controls are velocity samples on a uniform grid; states are their
trapezoidal integrals.  The best-response solver minimizes the discretized
cost functional directly: gradients come from reverse (adjoint)
accumulation, state-region feasibility from an augmented penalty on
``min(0, b(x_j))^2`` with multiplier updates, and the speed/slope budget
from an exact projection pass.  Everything is batched over a leading
problem axis so a whole population of best responses solves at once.

The first-order system certificate (:func:`euler_lagrange_residual`) never
drives the solver; it reconstructs a costate from the terminal condition
and reports defect norms, boundary-multiplier traces, and the terminal
normal coefficient for any candidate path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Combinatorics, GridMismatch, InfeasibleStart
from .geometry import Domain
from .lagrangian import LagrangianModel, TerminalCost, dp_hamiltonian
from .measures import PathMeasure, StateMeasure, push_forward_at_time, state_marginal

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class ControlPath:
    """Velocity samples on a uniform grid, optionally budget-checked."""

    times: np.ndarray
    values: np.ndarray  # (N+1, d)
    budget: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape[0] != len(self.times):
            raise ValueError("control samples inconsistent with the grid")
        if self.budget is not None:
            k1, k2 = self.budget
            dt = float(self.times[1] - self.times[0])
            if np.max(np.linalg.norm(self.values, axis=-1)) > k1 + 1e-9:
                raise ValueError("speed bound violated")
            jumps = np.linalg.norm(np.diff(self.values, axis=0), axis=-1)
            if len(jumps) and np.max(jumps) > k2 * dt + 1e-9:
                raise ValueError("slope bound violated")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class StatePath:
    times: np.ndarray
    points: np.ndarray  # (N+1, d)
    initial: np.ndarray
    feasible: bool
    min_distance: float


def _integrate(x0: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal state integral, batched: u (..., M, d) -> x (..., M, d)."""
    x = np.empty_like(u)
    x[..., 0, :] = x0
    if u.shape[-2] > 1:
        inc = 0.5 * dt * (u[..., :-1, :] + u[..., 1:, :])
        x[..., 1:, :] = x0[..., None, :] + np.cumsum(inc, axis=-2)
    return x


def rollout(x0, u: ControlPath, domain: Domain) -> StatePath:
    """Integrate a control from x0 and flag node-wise feasibility."""
    x0 = np.asarray(x0, dtype=float)
    pts = _integrate(x0, u.values, u.dt)
    b = domain.signed_distance(pts)
    return StatePath(
        times=u.times, points=pts, initial=x0,
        feasible=bool(np.min(b) >= -FEAS_TOL),
        min_distance=float(np.min(b)),
    )


def _quad_weights(n_nodes: int, dt: float) -> np.ndarray:
    w = np.full(n_nodes, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def coupling_of(model: LagrangianModel, eta: PathMeasure):
    """Per-node coupling statistics and the terminal state marginal."""
    stats = model.stats_path(eta)
    sigma_T = state_marginal(push_forward_at_time(eta, eta.times[-1]))
    return stats, sigma_T


def total_cost(x0, u: ControlPath, eta: PathMeasure, model: LagrangianModel,
               terminal: TerminalCost) -> float:
    """Trapezoidal cost of a control against a population measure."""
    if u.times.shape != eta.times.shape or np.max(np.abs(u.times - eta.times)) > 1e-12:
        raise GridMismatch("control and population measure use different grids")
    stats, sigma_T = coupling_of(model, eta)
    x = _integrate(np.asarray(x0, dtype=float), u.values, u.dt)
    wq = _quad_weights(len(u.times), u.dt)
    run = float(np.sum(
        wq * model.value(u.times, x, u.values, stats)
    ))
    return run + float(terminal.value(x[-1], sigma_T))


# ---------------------------------------------------------------------------
# batched objective with augmented feasibility penalty
# ---------------------------------------------------------------------------

@dataclass
class _Objective:
    """Discrete cost + augmented penalty, batched over problems."""

    model: LagrangianModel
    terminal: TerminalCost
    domain: Domain
    times: np.ndarray          # (M,)
    stats: np.ndarray          # (M, k)
    sigma_T: StateMeasure | None
    x0: np.ndarray             # (B, d)
    margin: float = 1e-8       # inward constraint shift absorbing solver noise

    def __post_init__(self):
        self.dt = float(self.times[1] - self.times[0])
        self.wq = _quad_weights(len(self.times), self.dt)
        self.tcol = self.times[None, :]

    def states(self, u: np.ndarray) -> np.ndarray:
        return _integrate(self.x0, u, self.dt)

    def min_distance(self, u: np.ndarray) -> np.ndarray:
        return np.min(self.domain.signed_distance(self.states(u)), axis=-1)

    def value(self, u: np.ndarray, lam: np.ndarray, rho: float) -> np.ndarray:
        x = self.states(u)
        run = np.sum(self.wq * self.model.value(self.tcol, x, u, self.stats),
                     axis=-1)
        run += self.terminal.value(x[..., -1, :], self.sigma_T)
        if rho > 0.0:
            b = self.domain.signed_distance(x[..., 1:, :]) - self.margin
            shifted = np.minimum(0.0, b - lam / rho)
            run += 0.5 * rho * np.sum(shifted**2 - (lam / rho) ** 2, axis=-1)
        return run

    def value_grad(self, u: np.ndarray, lam: np.ndarray, rho: float):
        x = self.states(u)
        lval = self.model.value(self.tcol, x, u, self.stats)
        run = np.sum(self.wq * lval, axis=-1) + self.terminal.value(
            x[..., -1, :], self.sigma_T
        )
        g_state = self.wq[:, None] * self.model.grad_x(self.tcol, x, u, self.stats)
        if rho > 0.0:
            b = self.domain.signed_distance(x[..., 1:, :]) - self.margin
            shifted = np.minimum(0.0, b - lam / rho)
            run += 0.5 * rho * np.sum(shifted**2 - (lam / rho) ** 2, axis=-1)
            gb = rho * shifted[..., None] * self.domain.distance_gradient(
                x[..., 1:, :]
            )
            g_state = g_state.copy()
            g_state[..., 1:, :] += gb
        g_state[..., -1, :] += self.terminal.gradient(x[..., -1, :], self.sigma_T)
        # adjoint accumulation through the trapezoidal integrator
        tail = np.flip(np.cumsum(np.flip(g_state, axis=-2), axis=-2), axis=-2)
        adj = self.dt * (tail - 0.5 * g_state)
        adj[..., 0, :] = 0.5 * self.dt * (tail[..., 0, :] - g_state[..., 0, :])
        grad = self.wq[:, None] * self.model.grad_v(self.tcol, x, u, self.stats) + adj
        return run, grad

    def feasibility(self, u: np.ndarray) -> np.ndarray:
        """Signed distances at the movable nodes, (B, M-1)."""
        return self.domain.signed_distance(self.states(u)[..., 1:, :])


def _project_budget(u: np.ndarray, k1: float, k2dt: float) -> np.ndarray:
    """Exact restoration of speed and slope bounds.

    A forward pass pulls each node toward its predecessor until every
    consecutive jump satisfies the slope bound exactly; the final speed clip
    is nonexpansive per node and therefore preserves the slope bounds.
    """
    speeds = np.linalg.norm(u, axis=-1)
    jumps = np.linalg.norm(np.diff(u, axis=-2), axis=-1)
    if np.max(speeds) <= k1 and (jumps.size == 0 or np.max(jumps) <= k2dt):
        return u
    v = np.array(u, copy=True)
    for j in range(1, v.shape[-2]):
        d = v[..., j, :] - v[..., j - 1, :]
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.minimum(1.0, k2dt / np.maximum(n, 1e-300))
        v[..., j, :] = v[..., j - 1, :] + d * scale
    sp = np.linalg.norm(v, axis=-1, keepdims=True)
    v *= np.minimum(1.0, k1 / np.maximum(sp, 1e-300))
    return v


@dataclass(frozen=True)
class SolveOptions:
    num_starts: int = 3
    pg_tol: float = 1e-7
    max_inner: int = 800
    penalty_weights: tuple = (1e2, 1e3, 1e4)
    max_multiplier_rounds: int = 25
    feasibility_target: float = 1e-10
    seed: int = 0
    warm_start: np.ndarray | None = None


@dataclass(frozen=True)
class BestResponse:
    control: ControlPath
    cost: float
    pg_norm: float
    stalled: bool
    feasible: bool
    min_distance: float
    multiplier_rounds: int


def _pg_inner(obj: _Objective, u, lam, rho, k1, k2dt, tol, max_iter):
    """Projected-gradient descent with per-problem backtracking steps."""
    B = u.shape[0]
    step = np.full(B, 1.0)
    stalled = np.zeros(B, dtype=bool)
    pg = np.full(B, np.inf)
    f, g = obj.value_grad(u, lam, rho)
    for _ in range(max_iter):
        accepted = np.zeros(B, dtype=bool)
        best_u, best_f = u, f
        for _ in range(60):
            cand = _project_budget(u - step[:, None, None] * g, k1, k2dt)
            f_cand = obj.value(cand, lam, rho)
            move = np.sum((cand - u) ** 2, axis=(-2, -1))
            ok = f_cand <= f - 1e-4 * move / np.maximum(step, 1e-300)
            newly = ok & ~accepted
            if np.any(newly):
                best_u = np.where(newly[:, None, None], cand, best_u)
                best_f = np.where(newly, f_cand, best_f)
                accepted |= newly
            pending = ~accepted & ~stalled
            if not np.any(pending):
                break
            step[pending] *= 0.5
            stalled |= pending & (step < 1e-18)
        u, f = best_u, best_f
        step = np.where(accepted, np.minimum(step * 1.3, 1e6), step)
        f, g = obj.value_grad(u, lam, rho)
        ref = _project_budget(u - g, k1, k2dt)
        pg = np.max(np.abs(u - ref), axis=(-2, -1))
        if not np.any((pg > tol) & ~stalled):
            break
    return u, pg, stalled


def _dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=(-2, -1))


def _lbfgs_inner(obj: _Objective, u, lam, rho, k1, k2dt, tol, max_iter,
                 memory: int = 30):
    """Batched limited-memory quasi-Newton descent on the penalized cost.

    Runs unconstrained on the adjoint gradient (budget constraints are
    restored afterwards by the proximal pass); per-problem curvature pairs
    with failed curvature checks are disabled rather than shared.
    Stationarity is always measured as a projected-gradient norm.
    """
    B = u.shape[0]
    f, g = obj.value_grad(u, lam, rho)
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    R: list[np.ndarray] = []  # reciprocal curvature, 0 where the pair is invalid
    stalled = np.zeros(B, dtype=bool)
    pg = np.full(B, np.inf)
    for _ in range(max_iter):
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(R)):
            a = r * _dots(s, q)[:, None, None]
            q -= a * y
            alphas.append(a)
        alphas.reverse()
        if S:
            yy = _dots(Y[-1], Y[-1])[:, None, None]
            r_last = R[-1]
            gamma = np.where(
                r_last > 0,
                1.0 / np.maximum(r_last * yy, 1e-300),
                1.0,
            )
        else:
            gamma = 1.0
        d = gamma * q
        for s, y, r, a in zip(S, Y, R, alphas):
            b_coef = r * _dots(y, d)[:, None, None]
            d += s * (a - b_coef)
        gd = _dots(g, d)
        gg = _dots(g, g)
        bad = gd <= 1e-12 * np.sqrt(np.maximum(gg, 0.0)) * np.sqrt(
            np.maximum(_dots(d, d), 0.0)
        )
        if np.any(bad):
            d = np.where(bad[:, None, None], g, d)
            gd = np.where(bad, gg, gd)

        step = np.ones(B)
        accepted = np.zeros(B, dtype=bool)
        u_new, f_new = u.copy(), f.copy()
        for _ in range(55):
            cand = u - step[:, None, None] * d
            fc = obj.value(cand, lam, rho)
            ok = fc <= f - 1e-4 * step * gd
            newly = ok & ~accepted
            if np.any(newly):
                u_new = np.where(newly[:, None, None], cand, u_new)
                f_new = np.where(newly, fc, f_new)
                accepted |= newly
            pending = ~accepted & ~stalled
            if not np.any(pending):
                break
            step[pending] *= 0.5
            stalled |= pending & (step < 1e-20)
        _, g_new = obj.value_grad(u_new, lam, rho)
        s_vec = u_new - u
        y_vec = g_new - g
        sy = _dots(s_vec, y_vec)
        norm_ok = sy > 1e-12 * np.sqrt(
            np.maximum(_dots(s_vec, s_vec) * _dots(y_vec, y_vec), 1e-300)
        )
        r_vec = np.where(norm_ok & accepted, 1.0 / np.where(sy != 0, sy, 1.0),
                         0.0)[:, None, None]
        S.append(s_vec)
        Y.append(y_vec)
        R.append(r_vec)
        if len(S) > memory:
            S.pop(0), Y.pop(0), R.pop(0)
        u, f, g = u_new, f_new, g_new
        ref = _project_budget(u - g, k1, k2dt)
        pg = np.max(np.abs(u - ref), axis=(-2, -1))
        if not np.any((pg > tol) & ~stalled):
            break
    return u, pg, stalled


def _solve_batch(obj: _Objective, u0: np.ndarray, budget, opts: SolveOptions):
    """Full penalty schedule + multiplier rounds for a batch of starts."""
    k1, k2dt = float(budget[0]), float(budget[1]) * obj.dt
    B, M = u0.shape[0], u0.shape[1]
    u = _project_budget(u0, k1, k2dt)
    lam = np.zeros((B, M - 1))
    weights = tuple(opts.penalty_weights)
    rho = weights[-1] if weights else 0.0

    def subsolve(u, lam, w, tol):
        u, pg, stalled = _lbfgs_inner(obj, u, lam, w, k1, k2dt, tol,
                                      opts.max_inner)
        proj = _project_budget(u, k1, k2dt)
        if np.max(np.abs(proj - u)) > 1e-14:
            # budget constraints bind: polish with projected gradient
            u, pg, st2 = _pg_inner(obj, proj, lam, w, k1, k2dt, tol,
                                   min(opts.max_inner, 400))
            stalled = stalled | st2
        else:
            u = proj
        return u, pg, stalled

    pg = np.full(B, np.inf)
    stalled = np.zeros(B, dtype=bool)
    for i, w in enumerate(weights):
        tol = opts.pg_tol if i == len(weights) - 1 else max(opts.pg_tol, 1e-5)
        u, pg, stalled = subsolve(u, lam, w, tol)
    # multiplier rounds; the weight escalates when the violation stalls,
    # since the inner tolerance floors the reachable violation at
    # pg_tol / (dt * weight)
    rounds = 0
    prev_viol = np.inf
    for _ in range(opts.max_multiplier_rounds):
        b = obj.feasibility(u)
        viol = -float(np.min(b))
        if viol <= opts.feasibility_target:
            break
        if viol > 0.25 * prev_viol and rho < 1e6:
            rho *= 10.0
        prev_viol = viol
        lam = np.maximum(0.0, lam - rho * (b - obj.margin))
        u, pg, stalled = subsolve(u, lam, rho, opts.pg_tol)
        rounds += 1
    b = obj.feasibility(u)
    cost = obj.value(u, np.zeros_like(lam), 0.0)
    return u, cost, pg, stalled, np.min(b, axis=-1), rounds


def _starts(obj: _Objective, x0s: np.ndarray, budget, opts: SolveOptions):
    """Deterministic multi-start controls: rest, pull, jittered pull."""
    B, M, d = len(x0s), len(obj.times), x0s.shape[-1]
    T_left = obj.times[-1] - obj.times[0]
    pull = -obj.terminal.gradient(x0s, obj.sigma_T) / (1.0 + 2.0 * T_left)
    nrm = np.linalg.norm(pull, axis=-1, keepdims=True)
    pull *= np.minimum(1.0, 0.95 * budget[0] / np.maximum(nrm, 1e-12))
    starts = [np.zeros((B, M, d)), np.tile(pull[:, None, :], (1, M, 1))]
    if opts.num_starts >= 3:
        rng = np.random.default_rng(opts.seed)
        jitter = 0.05 * rng.standard_normal((B, M, d))
        starts.append(starts[1] + jitter)
    if opts.warm_start is not None:
        starts[0] = np.broadcast_to(opts.warm_start, (B, M, d)).copy()
    return np.concatenate(starts[: max(opts.num_starts, 1)], axis=0)


def best_response_batch(x0s, eta: PathMeasure, budget, model: LagrangianModel,
                        terminal: TerminalCost, domain: Domain,
                        opts: SolveOptions | None = None,
                        t_index: int = 0) -> list[BestResponse]:
    """Constrained best responses from many initial points at once.

    ``t_index`` restricts the problem to the sub-horizon starting at that
    grid node (used for value-function extraction); costs always include the
    terminal term against eta's terminal marginal.
    """
    opts = SolveOptions() if opts is None else opts
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if np.any(domain.signed_distance(x0s) < -1e-12):
        raise InfeasibleStart("an initial point lies outside the region")
    stats, sigma_T = coupling_of(model, eta)
    obj = _Objective(
        model=model, terminal=terminal, domain=domain,
        times=eta.times[t_index:], stats=stats[t_index:], sigma_T=sigma_T,
        x0=x0s,
    )
    B = len(x0s)
    u0 = _starts(obj, x0s, budget, opts)
    S = u0.shape[0] // B
    obj.x0 = np.tile(x0s, (S, 1))
    u, cost, pg, stalled, min_b, rounds = _solve_batch(obj, u0, budget, opts)
    # prefer feasible solutions, then low cost
    ranked = cost + 1e12 * (min_b < -FEAS_TOL)
    pick = np.argmin(ranked.reshape(S, B), axis=0) * B + np.arange(B)
    out = []
    for i, j in enumerate(pick):
        out.append(BestResponse(
            control=ControlPath(times=obj.times, values=u[j],
                                budget=(float(budget[0]), float(budget[1]))),
            cost=float(cost[j]),
            pg_norm=float(pg[j]),
            stalled=bool(stalled[j]),
            feasible=bool(min_b[j] >= -FEAS_TOL),
            min_distance=float(min_b[j]),
            multiplier_rounds=int(rounds),
        ))
    return out


def best_response(x0, eta: PathMeasure, budget, model: LagrangianModel,
                  terminal: TerminalCost, domain: Domain,
                  opts: SolveOptions | None = None) -> BestResponse:
    """Single-start-point wrapper around :func:`best_response_batch`."""
    return best_response_batch(
        np.atleast_2d(np.asarray(x0, dtype=float)), eta, budget, model,
        terminal, domain, opts,
    )[0]


# ---------------------------------------------------------------------------
# first-order optimality certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ELResidual:
    """Defect report for the constrained first-order system.

    ``costate`` is integrated backward from the terminal condition
    ``p(T) = Dl_T + beta * grad b`` (the normal coefficient ``beta_hat`` is
    fitted least-squares when the endpoint is active).  The velocity
    equation residual compares the control with the conjugate maximizer at
    the reflected costate; the costate-equation defect is measured on the
    pointwise stationarity costate, tangentially at active nodes (its
    normal component defines the multiplier trace) and in full at interior
    nodes.
    """

    costate: np.ndarray
    xdot_residual: np.ndarray
    pdot_residual: np.ndarray
    lambda_hat: np.ndarray
    beta_hat: float
    terminal_residual: float
    active: np.ndarray
    transition: np.ndarray
    costate_lipschitz: float

    @property
    def xdot_max(self) -> float:
        return float(np.max(self.xdot_residual))

    def _ode_nodes(self) -> np.ndarray:
        """Nodes where the costate ODE defect is meaningful.

        The final node is governed by the terminal condition instead, and
        contact-switch nodes carry a genuine acceleration jump that any
        fixed finite-difference stencil smears by O(1).
        """
        ode = np.ones_like(self.active)
        ode[-1] = False
        return ode & ~self.transition

    @property
    def pdot_tangential_max(self) -> float:
        sel = self._ode_nodes() & self.active
        if not np.any(sel):
            return 0.0
        return float(np.max(self.pdot_residual[sel]))

    @property
    def pdot_interior_max(self) -> float:
        sel = self._ode_nodes() & ~self.active
        if not np.any(sel):
            return 0.0
        return float(np.max(self.pdot_residual[sel]))


def _time_derivative(arr: np.ndarray, dt: float,
                     active: np.ndarray | None = None) -> np.ndarray:
    """Finite differences that do not straddle activity transitions.

    Central by default; one-sided (second order where the three-node window
    shares an activity status, first order otherwise) at nodes where the
    constraint turns on or off, since the costate derivative may jump there.
    """
    M = len(arr)
    fwd1 = np.empty_like(arr)
    fwd1[:-1] = (arr[1:] - arr[:-1]) / dt
    fwd1[-1] = fwd1[-2]
    bwd1 = np.empty_like(arr)
    bwd1[1:] = (arr[1:] - arr[:-1]) / dt
    bwd1[0] = bwd1[1]
    fwd2 = fwd1.copy()
    bwd2 = bwd1.copy()
    if M >= 3:
        fwd2[:-2] = (-3.0 * arr[:-2] + 4.0 * arr[1:-1] - arr[2:]) / (2.0 * dt)
        bwd2[2:] = (3.0 * arr[2:] - 4.0 * arr[1:-1] + arr[:-2]) / (2.0 * dt)
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dt)
    if active is None:
        out[0] = fwd2[0] if M >= 3 else fwd1[0]
        out[-1] = bwd2[-1] if M >= 3 else bwd1[-1]
        return out
    prev = np.concatenate([[active[0]], active[:-1]])
    nxt = np.concatenate([active[1:], [active[-1]]])
    use_fwd = ((prev != active) & (nxt == active))
    use_fwd[0] = True
    use_bwd = ((nxt != active) & (prev == active))
    use_bwd[-1] = True
    idx = np.arange(M)
    fwd2_ok = (idx + 2 < M)
    fwd2_ok[:-2] &= (active[1:-1] == active[:-2]) & (active[2:] == active[:-2])
    bwd2_ok = (idx - 2 >= 0)
    bwd2_ok[2:] &= (active[1:-1] == active[2:]) & (active[:-2] == active[2:])
    out[use_fwd] = np.where(fwd2_ok[use_fwd, None], fwd2[use_fwd], fwd1[use_fwd])
    out[use_bwd] = np.where(bwd2_ok[use_bwd, None], bwd2[use_bwd], bwd1[use_bwd])
    return out


def euler_lagrange_residual(x: StatePath, u: ControlPath, eta: PathMeasure,
                            model: LagrangianModel, terminal: TerminalCost,
                            domain: Domain, active_tol: float = 1e-6) -> ELResidual:
    if x.times.shape != u.times.shape or np.max(np.abs(x.times - u.times)) > 1e-12:
        raise GridMismatch("state and control grids differ")
    stats, sigma_T = coupling_of(model, eta)
    if len(stats) != len(u.times):
        raise GridMismatch("population grid differs from the path grid")
    ts, dt = u.times, u.dt
    pts, vel = x.points, u.values

    b = domain.signed_distance(pts)
    active = b < active_tol
    normals = domain.distance_gradient(pts)
    normals = normals / np.maximum(
        np.linalg.norm(normals, axis=-1, keepdims=True), 1e-300
    )

    p_stat = -model.grad_v(ts, pts, vel, stats)
    dxl = model.grad_x(ts, pts, vel, stats)
    glT = terminal.gradient(pts[-1], sigma_T)

    if active[-1]:
        beta = float((p_stat[-1] - glT) @ normals[-1])
    else:
        beta = 0.0
    term_res = float(np.linalg.norm(
        p_stat[-1] - glT - beta * normals[-1] * (1.0 if active[-1] else 0.0)
    ))

    # terminal node belongs to the terminal condition, not the costate ODE
    stencil_active = np.concatenate([active[:-1], [~active[-2]]])
    defect = _time_derivative(p_stat, dt, stencil_active) + dxl
    prev = np.concatenate([[active[0]], active[:-1]])
    nxt = np.concatenate([active[1:], [active[-1]]])
    transition = (prev != active) | (nxt != active)
    lam = np.where(active, -np.sum(defect * normals, axis=-1), 0.0)
    lam[-1] = 0.0  # the terminal multiplier is reported as beta_hat
    tang = defect + lam[:, None] * normals
    pdot_res = np.where(
        active,
        np.linalg.norm(tang, axis=-1),
        np.linalg.norm(defect, axis=-1),
    )

    # backward trapezoidal costate from the terminal condition
    pdot_rhs = -dxl - (active * lam)[:, None] * normals
    p = np.empty_like(p_stat)
    p[-1] = glT + beta * normals[-1] * (1.0 if active[-1] else 0.0)
    for j in range(len(ts) - 2, -1, -1):
        p[j] = p[j + 1] - 0.5 * dt * (pdot_rhs[j] + pdot_rhs[j + 1])

    v_star = dp_hamiltonian(model, ts, pts, -p, stats)
    xdot_res = np.linalg.norm(vel - v_star, axis=-1)
    lip_p = float(np.max(np.linalg.norm(np.diff(p, axis=0), axis=-1))) / dt

    return ELResidual(
        costate=p, xdot_residual=xdot_res, pdot_residual=pdot_res,
        lambda_hat=lam, beta_hat=beta, terminal_residual=term_res,
        active=active, transition=transition, costate_lipschitz=lip_p,
    )


# ---------------------------------------------------------------------------
# lattice oracle
# ---------------------------------------------------------------------------

def brute_force_best_response(x0, eta: PathMeasure, budget,
                              model: LagrangianModel, terminal: TerminalCost,
                              domain: Domain, segments: int, grid: int,
                              v_max: float | None = None,
                              refine: bool = True):
    """Exhaustive piecewise-constant search on a velocity lattice.

    Candidates are all lattice assignments of one velocity per segment;
    infeasible prefixes (convex region: endpoint checks suffice) are pruned
    during expansion.  Running costs accumulate segment-wise (a fast
    precomputed path when the running cost has no state dependence, full
    per-prefix quadrature otherwise); the surviving leaders are re-scored on
    the full grid, and one local coordinate-descent pass refines the winner.

    Raises :class:`Combinatorics` when the lattice would exceed 1e8
    candidates, and enforces ``segments <= 8``, ``grid <= 9``.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[-1]
    if segments > 8 or grid > 9:
        raise ValueError("lattice guard: segments <= 8 and grid <= 9 per axis")
    n_velocities = grid**d
    if n_velocities**segments > 10**8:
        raise Combinatorics(
            f"{n_velocities ** segments} candidates exceed the 1e8 cap"
        )
    N = len(eta.times) - 1
    if N % segments != 0:
        raise GridMismatch("grid size must be a multiple of the segment count")
    if domain.signed_distance(x0) < -1e-12:
        raise InfeasibleStart("oracle start outside the region")

    stats, sigma_T = coupling_of(model, eta)
    ts = eta.times
    dt = float(ts[1] - ts[0])
    wq = _quad_weights(N + 1, dt)
    nodes_per = N // segments
    k1 = float(budget[0])
    if v_max is None:
        v_max = min(k1, 2.0 * domain.diameter / max(ts[-1], 1e-12))
    axis = np.linspace(-v_max, v_max, grid)
    lattice = np.stack(np.meshgrid(*([axis] * d), indexing="ij"),
                       axis=-1).reshape(-1, d)
    lattice = lattice[np.linalg.norm(lattice, axis=-1) <= k1 + 1e-12]
    V = len(lattice)

    probe = np.asarray(model.grad_x(0.0, x0[None, :], np.ones((1, d)),
                                    model.reference_stats))
    x_free = float(np.max(np.abs(probe))) == 0.0

    seg_w, seg_t, seg_stats = [], [], []
    for s in range(segments):
        j0, j1 = s * nodes_per, (s + 1) * nodes_per
        w = wq[j0:j1 + 1].copy()
        if s > 0:
            w[0] = 0.5 * dt  # interior segment boundary: split node weight
        if s < segments - 1:
            w[-1] = 0.5 * dt
        seg_w.append(w)
        seg_t.append(ts[j0:j1 + 1])
        seg_stats.append(stats[j0:j1 + 1])

    seg_cost_xfree = None
    if x_free:
        seg_cost_xfree = np.empty((segments, V))
        for s in range(segments):
            vv = np.broadcast_to(lattice[:, None, :], (V, nodes_per + 1, d))
            seg_cost_xfree[s] = np.sum(
                seg_w[s] * model.value(seg_t[s], np.zeros_like(vv), vv,
                                       seg_stats[s]),
                axis=-1,
            )

    def seg_increment(starts: np.ndarray, s: int) -> np.ndarray:
        """Running cost over segment s from each start with each velocity."""
        if x_free:
            return np.broadcast_to(seg_cost_xfree[s], (len(starts), V))
        offs = (seg_t[s] - seg_t[s][0])[None, None, :, None] * lattice[None, :, None, :]
        pos = starts[:, None, None, :] + offs
        vv = np.broadcast_to(lattice[None, :, None, :], pos.shape)
        return np.sum(
            seg_w[s] * model.value(seg_t[s], pos, vv, seg_stats[s]), axis=-1
        )

    seg_len = nodes_per * dt
    ends = np.array(x0)[None, :]
    costs = np.zeros(1)
    choices = np.zeros((1, 0), dtype=np.int16)
    inc_chunk = max(1, (200_000 if x_free else 20_000) // V)
    for s in range(segments - 1):
        new_costs = np.empty((len(ends), V))
        for lo in range(0, len(ends), inc_chunk):
            hi = min(lo + inc_chunk, len(ends))
            new_costs[lo:hi] = costs[lo:hi, None] + seg_increment(ends[lo:hi], s)
        new_ends = (ends[:, None, :] + seg_len * lattice[None, :, :]).reshape(-1, d)
        new_choices = np.concatenate(
            [np.repeat(choices, V, axis=0),
             np.tile(np.arange(V, dtype=np.int16), len(ends))[:, None]],
            axis=1,
        )
        keep = domain.signed_distance(new_ends) >= -FEAS_TOL
        ends, costs, choices = (
            new_ends[keep], new_costs.ravel()[keep], new_choices[keep]
        )
        if len(ends) == 0:
            raise Combinatorics("no feasible lattice candidate survives")

    # final stage: scan leaves in chunks, keep the 64 cheapest candidates
    top_cost: list[float] = []
    top_choice: list[np.ndarray] = []
    for lo in range(0, len(ends), inc_chunk):
        hi = min(lo + inc_chunk, len(ends))
        leaf_ends = (ends[lo:hi, None, :] + seg_len * lattice[None, :, :])
        leaf_costs = (costs[lo:hi, None] + seg_increment(ends[lo:hi], segments - 1)
                      + terminal.value(leaf_ends, sigma_T))
        feas = domain.signed_distance(leaf_ends) >= -FEAS_TOL
        leaf_costs = np.where(feas, leaf_costs, np.inf).ravel()
        take = np.argsort(leaf_costs)[:64]
        for flat in take:
            if not np.isfinite(leaf_costs[flat]):
                continue
            i, j = divmod(int(flat), V)
            top_cost.append(float(leaf_costs[flat]))
            top_choice.append(np.concatenate(
                [choices[lo + i], np.array([j], dtype=np.int16)]
            ))
    if not top_cost:
        raise Combinatorics("no feasible lattice candidate survives")
    order = np.argsort(top_cost)[:64]
    choices = np.stack([top_choice[i] for i in order])
    leaders = np.arange(len(choices))

    def expand(choice_row: np.ndarray) -> np.ndarray:
        vals = np.empty((N + 1, d))
        for s in range(segments):
            vals[s * nodes_per: (s + 1) * nodes_per + 1] = lattice[choice_row[s]]
        return vals

    def grid_cost(vals: np.ndarray) -> float:
        pts = _integrate(x0, vals, dt)
        run = float(np.sum(wq * model.value(ts, pts, vals, stats)))
        return run + float(terminal.value(pts[-1], sigma_T))

    def node_feasible(vals: np.ndarray) -> bool:
        pts = _integrate(x0, vals, dt)
        return bool(np.min(domain.signed_distance(pts)) >= -FEAS_TOL)

    best_vals, best_cost = None, np.inf
    for row in leaders:
        vals = expand(choices[row])
        cost = grid_cost(vals)
        if cost < best_cost and node_feasible(vals):
            best_vals, best_cost = vals, cost

    if refine and best_vals is not None:
        seg_vals = np.stack(
            [best_vals[s * nodes_per] for s in range(segments)]
        )
        span = axis[1] - axis[0] if grid > 1 else v_max
        for s in range(segments):
            for ax in range(d):
                center = seg_vals[s, ax]
                for cand in center + span * np.linspace(-1.0, 1.0, 17):
                    trial = seg_vals.copy()
                    trial[s, ax] = cand
                    if np.linalg.norm(trial[s]) > k1 + 1e-12:
                        continue
                    vals = np.empty((N + 1, d))
                    for q in range(segments):
                        vals[q * nodes_per: (q + 1) * nodes_per + 1] = trial[q]
                    c = grid_cost(vals)
                    if c < best_cost and node_feasible(vals):
                        seg_vals, best_cost = trial, c
        best_vals = np.empty((N + 1, d))
        for q in range(segments):
            best_vals[q * nodes_per: (q + 1) * nodes_per + 1] = seg_vals[q]

    control = ControlPath(times=ts, values=best_vals, budget=None)
    return control, float(best_cost)
