"""Feasible approximation of constrained controls from perturbed starts.

Given a budgeted feasible control from ``x0`` and a nearby start ``xk``,
this module constructs a control from ``xk`` that remains feasible, lands in
the budget class inflated by one, and tracks the original control uniformly
at a rate linear in ``|xk - x0|``.

The construction partitions the horizon into ``L`` equal intervals and works
interval by interval.  Away from the boundary collar the perturbed path runs
parallel to the original.  Inside the collar it is expressed in a distance
chart, where the tangential coordinates are parallel-transported and the
distance coordinate is scaled by the ratio of the two paths' boundary
distances, which preserves feasibility exactly.  Entering, leaving, and
switching charts are handled by short quadratic bridges on a trailing
sub-window of each interval whose relative length ``lambda`` is halved until
every inequality used by that case verifies numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CaseInequalityFailure, DegenerateStart, PerturbationTooLarge
from .geometry import Atlas, Chart, Domain
from .trajopt import ControlPath, _integrate

LAMBDA_FLOOR = 2.0**-40


@dataclass(frozen=True)
class ApproxConstants:
    """Scalar data of the construction at a given atlas and budget."""

    deriv_bound: float   # C
    k0: float            # max(K1, K2, 1)
    r_outer: float       # capped at 1/2
    r_hat: float         # capped at 1/2
    growth: float        # M = 3 C^5 K0 / r_hat^2
    intervals: int       # L = ceil(K1 T / r_hat) + 1
    eps_max: float       # largest admissible |xk - x0|; may underflow to 0
    log10_eps_max: float

    def gap_bound(self, ell: int, eps: float) -> float:
        """(3M)^ell * eps, overflow-safe."""
        log = ell * math.log10(3.0 * self.growth) + math.log10(max(eps, 1e-300))
        return math.inf if log > 300 else 10.0**log


def check_approx_constants(atlas: Atlas, budget, horizon: float) -> ApproxConstants:
    """Evaluate the construction constants exactly from their formulas."""
    C = max(float(atlas.deriv_bound), 1.0)
    k1, k2 = float(budget[0]), float(budget[1])
    k0 = max(k1, k2, 1.0)
    r = min(float(atlas.r_outer), 0.5)
    r_hat = min(float(atlas.r_hat), 0.5)
    M = 3.0 * C**5 * k0 / r_hat**2
    L = math.ceil(k1 * horizon / r_hat) + 1
    log10_eps = math.log10(min(r_hat, r)) - L * math.log10(3.0 * M)
    eps_max = 10.0**log10_eps if log10_eps > -300 else 0.0
    return ApproxConstants(
        deriv_bound=C, k0=k0, r_outer=r, r_hat=r_hat, growth=M,
        intervals=L, eps_max=eps_max, log10_eps_max=log10_eps,
    )


def scale_halfline(path: np.ndarray, xk0: float) -> np.ndarray:
    """Re-root a nonnegative scalar path at a new start value.

    If the new start is at least the old one, the path is translated
    (parallel transport); otherwise it is scaled by ``xk0 / path[0]``, which
    preserves nonnegativity and perturbs the derivative by at most
    ``sup|path'| * |xk0 - path[0]| / path[0]``.
    """
    path = np.asarray(path, dtype=float)
    if xk0 < 0:
        raise ValueError("new start value must be nonnegative")
    if xk0 >= path[0]:
        return path + (xk0 - path[0])
    if path[0] <= 0.0:
        raise DegenerateStart("cannot scale a path starting at zero downward")
    if np.any(path <= 0.0):
        raise DegenerateStart("scaling branch requires a positive path")
    return (xk0 / path[0]) * path


# ---------------------------------------------------------------------------
# reference-path interpolation (exact for piecewise-linear controls)
# ---------------------------------------------------------------------------

class _RefPath:
    def __init__(self, u0: ControlPath, x0: np.ndarray):
        self.ts = u0.times
        self.dt = u0.dt
        self.vals = u0.values
        self.x_nodes = _integrate(np.asarray(x0, dtype=float), u0.values, self.dt)

    def _locate(self, t: float) -> tuple[int, float]:
        j = min(int((t - self.ts[0]) / self.dt), len(self.ts) - 2)
        j = max(j, 0)
        return j, t - self.ts[j]

    def x(self, t: float) -> np.ndarray:
        j, tau = self._locate(t)
        slope = (self.vals[j + 1] - self.vals[j]) / self.dt
        return self.x_nodes[j] + tau * self.vals[j] + 0.5 * tau**2 * slope

    def u(self, t: float) -> np.ndarray:
        j, tau = self._locate(t)
        return self.vals[j] + (tau / self.dt) * (self.vals[j + 1] - self.vals[j])


def _chart_jacobian(chart: Chart, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    if chart.jacobian_raw is not None:
        return chart.jacobian_raw(x)
    d = len(x)
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((chart.forward_raw(x + e) - chart.forward_raw(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass
class ApproxAudit:
    eps: float
    eps_max: float
    mode: str
    log10_bound: float     # log10((3M)^L eps)
    sup_gap_control: float  # over the returned control's own samples
    sup_gap_dense: float    # including dense points inside bridge windows
    sup_gap_state: float
    min_distance: float
    max_speed: float
    max_slope: float
    budget_ok: bool
    feasible: bool
    bound_holds: bool
    rows: list

    @property
    def passed(self) -> bool:
        return bool(self.feasible and self.budget_ok and self.bound_holds
                    and all(r["checks_ok"] for r in self.rows))


def approximate_control(domain: Domain, atlas: Atlas, u0: ControlPath,
                        x0, xk, budget, mode: str = "strict",
                        num_nodes_out: int | None = None):
    """Construct a feasible control from ``xk`` tracking ``u0`` from ``x0``.

    In ``strict`` mode the perturbation must satisfy the certified smallness
    radius, and the returned control carries the inflated budget declaration
    (its constructor re-checks the bounds).  In ``best-effort`` mode the
    construction runs for any perturbation and all claims are downgraded to
    measured audit entries.  Returns ``(control, audit)``.
    """
    if mode not in ("strict", "best-effort"):
        raise ValueError("mode must be 'strict' or 'best-effort'")
    x0 = np.asarray(x0, dtype=float)
    xk = np.asarray(xk, dtype=float)
    k1, k2 = float(budget[0]), float(budget[1])
    T = float(u0.times[-1])
    consts = check_approx_constants(atlas, (k1, k2), T)
    eps = float(np.linalg.norm(xk - x0))
    if mode == "strict" and eps >= consts.eps_max:
        raise PerturbationTooLarge(
            f"|xk - x0| = {eps:.3g} >= certified radius {consts.eps_max:.3g}"
        )
    ref = _RefPath(u0, x0)
    if np.min(domain.signed_distance(ref.x_nodes)) < -1e-9:
        raise ValueError("the reference control is not feasible from x0")

    if eps == 0.0:
        # every case reduces to the identity; return the control unchanged
        audit = ApproxAudit(
            eps=0.0, eps_max=consts.eps_max, mode=mode, log10_bound=-math.inf,
            sup_gap_control=0.0, sup_gap_dense=0.0, sup_gap_state=0.0,
            min_distance=float(np.min(domain.signed_distance(ref.x_nodes))),
            max_speed=float(np.max(np.linalg.norm(u0.values, axis=-1))),
            max_slope=float(np.max(np.linalg.norm(np.diff(u0.values, axis=0),
                                                  axis=-1)) / u0.dt),
            budget_ok=True, feasible=True, bound_holds=True, rows=[],
        )
        declared = (k1 + 1.0, k2 + 1.0) if mode == "strict" else None
        return ControlPath(times=u0.times, values=u0.values.copy(),
                           budget=declared), audit

    L = consts.intervals
    r_hat, r_out, C, M = consts.r_hat, consts.r_outer, consts.deriv_bound, consts.growth
    t_edges = np.linspace(0.0, T, L + 1)

    def in_collar(p: np.ndarray) -> bool:
        return float(domain.signed_distance(p)) <= 2.0 * r_hat

    segments: list[dict] = []  # closures and metadata per interval
    rows: list[dict] = []
    state_x = xk.copy()
    state_u = None  # filled by the first segment

    for ell in range(L):
        ta, tb = float(t_edges[ell]), float(t_edges[ell + 1])
        xa, xb = ref.x(ta), ref.x(tb)
        bound_next = consts.gap_bound(ell + 1, eps)
        case = (1 if not in_collar(xa) and not in_collar(xb) else
                2 if not in_collar(xa) else
                3 if not in_collar(xb) else 4)
        checks: dict[str, bool] = {}

        if case == 1:
            shift = state_x - xa

            def seg_eval(t, shift=shift):
                return shift + ref.x(t), ref.u(t)

            seg = {"eval": seg_eval, "t_mid": None}
            lam_used = None
            ok, info = _audit_segment(
                domain, ref, seg_eval, ta, tb, None, bound_next
            )
            checks.update(info)
            if not ok and mode == "strict":
                raise CaseInequalityFailure(
                    f"interval {ell} (parallel transport): "
                    + _failed(checks)
                )
        else:
            lam = 0.25
            best = None
            while lam >= LAMBDA_FLOOR:
                built = _build_collar_segment(
                    domain, atlas, ref, consts, case, ell, ta, tb, lam,
                    state_x, state_u, eps,
                )
                if built is None:
                    lam *= 0.5
                    continue
                seg_eval, t_mid, case_checks = built
                ok, info = _audit_segment(
                    domain, ref, seg_eval, ta, tb, t_mid, bound_next
                )
                case_checks.update(info)
                best = (seg_eval, t_mid, case_checks, lam)
                if ok and all(case_checks.values()):
                    break
                lam *= 0.5
            if best is None or lam < LAMBDA_FLOOR:
                if best is None or mode == "strict":
                    raise CaseInequalityFailure(
                        f"interval {ell} case {case}: sub-window shrinking "
                        f"bottomed out; failed: "
                        + (_failed(best[2]) if best else "segment construction")
                    )
            seg_eval, t_mid, case_checks, lam_used = best
            checks = case_checks
            seg = {"eval": seg_eval, "t_mid": t_mid}

        state_x, state_u = seg["eval"](tb)
        d_ref = float(domain.signed_distance(ref.x(tb)))
        d_new = float(domain.signed_distance(state_x))
        ratio_defect = abs(d_new - d_ref)
        checks["distance_ratio"] = bool(
            ratio_defect <= bound_next * max(d_ref, 0.0) + 1e-12
        )
        rows.append({
            "interval": ell,
            "case": case,
            "lambda": lam_used,
            "gap_bound": bound_next,
            "distance_ratio_defect": ratio_defect,
            "checks": checks,
            "checks_ok": all(checks.values()),
        })
        segments.append({"t0": ta, "t1": tb, **seg})

    # sample the construction on the output grid and audit globally
    out_times = (u0.times if num_nodes_out is None
                 else np.linspace(0.0, T, num_nodes_out + 1))
    out_vals = np.empty((len(out_times), len(xk)))
    sup_u = 0.0
    sup_x = 0.0
    for j, t in enumerate(out_times):
        seg = segments[min(int(t / (T / L)), L - 1)]
        xk_t, uk_t = seg["eval"](float(t))
        out_vals[j] = uk_t
        sup_u = max(sup_u, float(np.linalg.norm(uk_t - ref.u(float(t)))))
        sup_x = max(sup_x, float(np.linalg.norm(xk_t - ref.x(float(t)))))
    # dense audit points, including the short bridge windows between nodes
    sup_dense = sup_u
    for seg in segments:
        t_dense = [np.linspace(seg["t0"], seg["t1"], 9)]
        if seg["t_mid"] is not None:
            t_dense.append(np.linspace(seg["t_mid"], seg["t1"], 17))
        for t in np.concatenate(t_dense):
            xk_t, uk_t = seg["eval"](float(t))
            sup_dense = max(sup_dense, float(np.linalg.norm(uk_t - ref.u(float(t)))))
            sup_x = max(sup_x, float(np.linalg.norm(xk_t - ref.x(float(t)))))

    dt_out = float(out_times[1] - out_times[0])
    speeds = np.linalg.norm(out_vals, axis=-1)
    slopes = np.linalg.norm(np.diff(out_vals, axis=0), axis=-1) / dt_out
    states = _integrate(xk, out_vals, dt_out)
    min_b = float(np.min(domain.signed_distance(states)))
    log10_bound = (L * math.log10(3.0 * M) + math.log10(max(eps, 1e-300)))
    bound_holds = (log10_bound > 300) or (sup_dense <= 10.0**log10_bound)
    audit = ApproxAudit(
        eps=eps, eps_max=consts.eps_max, mode=mode, log10_bound=log10_bound,
        sup_gap_control=sup_u, sup_gap_dense=sup_dense,
        sup_gap_state=sup_x, min_distance=min_b,
        max_speed=float(np.max(speeds)),
        max_slope=float(np.max(slopes)) if len(slopes) else 0.0,
        budget_ok=bool(np.max(speeds) <= k1 + 1.0 + 1e-9
                       and (not len(slopes) or np.max(slopes) <= k2 + 1.0 + 1e-9)),
        feasible=bool(min_b >= -1e-9),
        bound_holds=bool(bound_holds),
        rows=rows,
    )
    declared = (k1 + 1.0, k2 + 1.0) if mode == "strict" else None
    control = ControlPath(times=out_times, values=out_vals, budget=declared)
    return control, audit


def _failed(checks: dict) -> str:
    return ", ".join(k for k, v in checks.items() if not v) or "none"


def _audit_segment(domain, ref, seg_eval, ta, tb, t_mid, bound):
    """Per-interval conclusion checks: gap growth and feasibility."""
    ts = [np.linspace(ta, tb, 13)]
    if t_mid is not None:
        ts.append(np.linspace(t_mid, tb, 17))
    gap_x = gap_u = 0.0
    min_b = math.inf
    for t in np.concatenate(ts):
        xk_t, uk_t = seg_eval(float(t))
        gap_x = max(gap_x, float(np.linalg.norm(xk_t - ref.x(float(t)))))
        gap_u = max(gap_u, float(np.linalg.norm(uk_t - ref.u(float(t)))))
        min_b = min(min_b, float(domain.signed_distance(xk_t)))
    checks = {
        "position_gap": gap_x <= bound,
        "velocity_gap": gap_u <= bound,
        "stays_feasible": min_b >= -1e-12,
    }
    return all(checks.values()), checks


def _build_collar_segment(domain, atlas, ref: _RefPath, consts: ApproxConstants,
                          case: int, ell: int, ta: float, tb: float,
                          lam: float, state_x: np.ndarray,
                          state_u: np.ndarray | None, eps: float):
    """Assemble the evaluator for one collar interval at a given lambda.

    Returns ``(evaluator, t_mid, checks)`` or ``None`` when the geometry
    preconditions cannot even be evaluated at this lambda (caller halves).
    """
    r_hat, C = consts.r_hat, consts.deriv_bound
    lam_T = lam * (tb - ta)
    t_mid = tb - lam_T
    xa, xb = ref.x(ta), ref.x(tb)
    checks: dict[str, bool] = {}
    # the bridging window must shrink linearly with the perturbation, as in
    # the recursion's gap-growth display; checked first since it is cheap
    checks["window_linear_in_eps"] = lam_T <= (2.0 / 3.0) * eps
    if not checks["window_linear_in_eps"]:
        return None

    def dcoord(p):
        return float(domain.signed_distance(p))

    def ddot(t):
        p = ref.x(t)
        return float(np.sum(domain.distance_gradient(p) * ref.u(t), axis=-1))

    if case == 2:
        chart = atlas.chart_for(xb)
        shift = state_x - xa

        d_end = dcoord(xb)
        checks["collar_floor_at_entry"] = d_end >= r_hat * (1.0 - 1e-9)
        checks["window_small_vs_speed"] = lam_T <= r_hat / (C * consts.k0)
        x_mid_k = shift + ref.x(t_mid)
        checks["bridge_start_near_entry"] = (
            float(np.linalg.norm(x_mid_k - xb)) < r_hat
        )
        J_mid = _chart_jacobian(chart, x_mid_k)
        J_end = _chart_jacobian(chart, xb)
        v0 = J_mid @ ref.u(t_mid)
        v1 = J_end @ ref.u(tb)
        y_mid = chart.forward_raw(x_mid_k)
        denom_margin = lam_T * v1[-1] / (2.0 * d_end)
        checks["bridge_denominator_margin"] = abs(denom_margin) <= 0.5
        if not checks["bridge_denominator_margin"]:
            return None
        v = np.empty_like(v0)
        v[:-1] = (v1[:-1] - v0[:-1]) / lam_T
        v[-1] = ((1.0 / lam_T) / (1.0 - denom_margin)
                 * ((y_mid[-1] + lam_T * v0[-1]) / d_end * v1[-1] - v0[-1]))

        def seg_eval(t, shift=shift, chart=chart, y_mid=y_mid, v0=v0, v=v,
                     t_mid=t_mid):
            if t <= t_mid:
                return shift + ref.x(t), ref.u(t)
            tau = t - t_mid
            y = y_mid + tau * v0 + 0.5 * tau**2 * v
            ydot = v0 + tau * v
            x_t = chart.inverse_raw(y)
            u_t = np.linalg.solve(_chart_jacobian(chart, x_t), ydot)
            return x_t, u_t

        # chart containment and positivity along the bridge
        ok_chart = True
        for t in np.linspace(t_mid, tb, 9):
            tau = t - t_mid
            y = y_mid + tau * v0 + 0.5 * tau**2 * v
            if (np.linalg.norm(y) > 2.0 * chart.r_outer
                    or y[-1] < 0.0
                    or np.linalg.norm(chart.inverse_raw(y) - chart.center)
                    > chart.domain_radius):
                ok_chart = False
                break
        checks["bridge_in_chart"] = ok_chart
        return seg_eval, t_mid, checks

    # cases 3 and 4 share the scaled leg on [ta, t_mid]
    chart = atlas.chart_for(xa)
    d_a = dcoord(xa)
    d_k_a = dcoord(state_x)
    ratio = d_k_a / d_a if d_a > 0.0 else 1.0
    checks["scaling_ratio_nonnegative"] = ratio >= 0.0
    y_a = chart.forward_raw(xa)
    y_k_a = chart.forward_raw(state_x)
    tang_shift = y_k_a[:-1] - y_a[:-1]

    def scaled_eval(t, chart=chart, tang_shift=tang_shift, ratio=ratio, d_a=d_a):
        y_t = chart.forward_raw(ref.x(t))
        J_t = _chart_jacobian(chart, ref.x(t))
        ydot = J_t @ ref.u(t)
        y_new = np.concatenate([
            y_t[:-1] + tang_shift,
            [ratio * y_t[-1] if d_a > 0.0 else y_t[-1]],
        ])
        ydot_new = np.concatenate([
            ydot[:-1], [ratio * ydot[-1] if d_a > 0.0 else ydot[-1]],
        ])
        x_t = chart.inverse_raw(y_new)
        u_t = np.linalg.solve(_chart_jacobian(chart, x_t), ydot_new)
        return x_t, u_t

    # chart containment of the scaled leg
    ok_chart = True
    for t in np.linspace(ta, t_mid, 9):
        x_t, _ = scaled_eval(t)
        if (np.linalg.norm(x_t - chart.center) > chart.domain_radius
                or np.linalg.norm(ref.x(t) - chart.center) > chart.domain_radius):
            ok_chart = False
            break
    checks["scaled_leg_in_chart"] = ok_chart
    if not ok_chart:
        return None

    x_mid_k, u_mid_k = scaled_eval(t_mid)

    if case == 3:
        checks["exit_point_outside_collar"] = dcoord(ref.x(t_mid)) >= 2.0 * r_hat * (1.0 - 1e-9)
        u_end = ref.u(tb)

        def seg_eval(t, x_mid_k=x_mid_k, u_mid_k=u_mid_k, u_end=u_end,
                     t_mid=t_mid, lam_T=lam_T):
            if t <= t_mid:
                return scaled_eval(t)
            tau = t - t_mid
            acc = (u_end - u_mid_k) / lam_T
            x_t = x_mid_k + tau * u_mid_k + 0.5 * tau**2 * acc
            return x_t, u_mid_k + tau * acc

        return seg_eval, t_mid, checks

    # case 4: chart handoff on the trailing window
    chart_next = atlas.chart_for(xb)
    y_mid_next = chart_next.forward_raw(x_mid_k)
    J_next_mid = _chart_jacobian(chart_next, x_mid_k)
    w0 = J_next_mid @ u_mid_k
    J_next_end = _chart_jacobian(chart_next, xb)
    w1 = J_next_end @ ref.u(tb)
    checks["handoff_chart_reachable"] = (
        float(np.linalg.norm(x_mid_k - chart_next.center))
        <= chart_next.domain_radius
    )
    if not checks["handoff_chart_reachable"]:
        return None

    def seg_eval(t, chart_next=chart_next, y_mid_next=y_mid_next, w0=w0,
                 w1=w1, ratio=ratio, d_a=d_a, t_mid=t_mid, lam_T=lam_T):
        if t <= t_mid:
            return scaled_eval(t)
        tau = t - t_mid
        acc = (w1[:-1] - w0[:-1]) / lam_T
        y_tang = y_mid_next[:-1] + tau * w0[:-1] + 0.5 * tau**2 * acc
        d_ref_t = dcoord(ref.x(t))
        d_new = ratio * d_ref_t if d_a > 0.0 else d_ref_t
        y = np.concatenate([y_tang, [d_new]])
        ddot_ref = ddot(t)
        ydot = np.concatenate([
            w0[:-1] + tau * acc,
            [ratio * ddot_ref if d_a > 0.0 else ddot_ref],
        ])
        x_t = chart_next.inverse_raw(y)
        u_t = np.linalg.solve(_chart_jacobian(chart_next, x_t), ydot)
        return x_t, u_t

    return seg_eval, t_mid, checks
