"""Invariant audit suites runnable against any scenario.

Each suite returns a list of row dicts (check, value, bound, passed) that the
CLI writes as one CSV per suite; a suite passes when every row does.  The
checks are sampled restatements of the library's structural contracts:
tubular-coordinate identities and chart certifications for the geometry,
convex-duality and Lipschitz properties for the cost models, transport
certificates for the measure engine, ledger exactness and monotonicity for
the constants chain, and identity/linearity probes for the path
approximation.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import constants as C
from . import lagrangian as L
from . import measures as M
from .approx import approximate_control, check_approx_constants, scale_halfline
from .errors import SmallnessViolated
from .geometry import Atlas, Domain, boundary_projection
from .scenarios import Scenario, boundary_hug


def _row(check: str, value: float, bound: float, passed: bool, note: str = ""):
    return {"check": check, "value": float(value), "bound": float(bound),
            "passed": bool(passed), "note": note}


def geometry_suite(domain: Domain, atlas: Atlas | None = None,
                   rng=None, samples: int = 2000) -> list[dict]:
    rng = np.random.default_rng(3) if rng is None else rng
    rows = []
    xi = domain.boundary_samples(samples, rng)
    n = domain.distance_gradient(xi)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)

    # tubular coordinate: distance along the normal equals the step
    steps = np.linspace(1e-3, domain.collar_width * (1 - 1e-9), 24)
    worst = 0.0
    for s in steps:
        worst = max(worst, float(np.max(np.abs(
            domain.signed_distance(xi + s * n) - s
        ))))
    rows.append(_row("normal_offset_distance_identity", worst, 1e-9,
                     worst <= 1e-9))

    # unit gradient inside the collar (finite differences, step 1e-5)
    pts = xi + rng.uniform(0.0, domain.collar_width * 0.999,
                           size=(len(xi), 1)) * n
    h = 1e-5
    grad = np.stack([
        (domain.signed_distance(pts + h * e) - domain.signed_distance(pts - h * e))
        / (2 * h)
        for e in np.eye(domain.dimension)
    ], axis=-1)
    worst = float(np.max(np.abs(np.linalg.norm(grad, axis=-1) - 1.0)))
    rows.append(_row("unit_gradient_in_collar", worst, 1e-6, worst <= 1e-6))

    # 1-Lipschitz signed distance on sampled pairs
    lo, hi = domain.ambient_box[:, 0], domain.ambient_box[:, 1]
    a = lo + rng.uniform(size=(samples, domain.dimension)) * (hi - lo)
    b = lo + rng.uniform(size=(samples, domain.dimension)) * (hi - lo)
    num = np.abs(domain.signed_distance(a) - domain.signed_distance(b))
    den = np.linalg.norm(a - b, axis=-1) + 1e-12
    worst = float(np.max(num / den))
    rows.append(_row("distance_is_1_lipschitz", worst, 1.0 + 1e-12,
                     worst <= 1.0 + 1e-12))

    # projection identities on collar points
    proj = boundary_projection(domain, pts)
    twice = boundary_projection(domain, proj + 0.0)
    worst = float(np.max(np.linalg.norm(twice - proj, axis=-1)))
    rows.append(_row("projection_idempotent", worst, 1e-10, worst <= 1e-10))
    bb = domain.signed_distance(pts)
    nf = domain.distance_gradient(proj)
    nf = nf / np.linalg.norm(nf, axis=-1, keepdims=True)
    recon = proj + bb[:, None] * nf
    worst = float(np.max(np.linalg.norm(recon - pts, axis=-1)))
    rows.append(_row("foot_plus_offset_decomposition", worst, 1e-8,
                     worst <= 1e-8))

    if atlas is not None:
        centers = np.stack([c.center for c in atlas.charts])
        cover = domain.boundary_samples(10_000, rng)
        dist = np.min(np.linalg.norm(cover[:, None, :] - centers[None], axis=-1),
                      axis=1)
        worst = float(np.max(dist))
        rows.append(_row("boundary_covering", worst, atlas.r_hat,
                         worst <= atlas.r_hat))
        worst_rt = 0.0
        worst_dc = 0.0
        worst_jac = 0.0
        for chart in atlas.charts[: min(len(atlas.charts), 8)]:
            base = chart.center
            g = domain.distance_gradient(base)
            samp = base + rng.uniform(-0.5, 1.5, size=(64, 1)) * chart.r_hat * g
            tang = rng.standard_normal(samp.shape)
            samp = samp + 0.3 * chart.r_hat * tang
            keep = np.linalg.norm(samp - base, axis=-1) <= chart.domain_radius
            samp = samp[keep]
            y = chart.forward_raw(samp)
            worst_dc = max(worst_dc, float(np.max(np.abs(
                y[:, -1] - domain.signed_distance(samp)
            ))))
            back = chart.inverse_raw(y)
            worst_rt = max(worst_rt, float(np.max(
                np.linalg.norm(back - samp, axis=-1)
            )))
            for x in samp[:8]:
                J = (chart.jacobian_raw(x) if chart.jacobian_raw is not None
                     else None)
                if J is not None:
                    worst_jac = max(
                        worst_jac, float(np.linalg.norm(J, 2)) / chart.deriv_bound
                    )
        rows.append(_row("chart_round_trip", worst_rt, 1e-8, worst_rt <= 1e-8))
        rows.append(_row("chart_distance_coordinate", worst_dc, 1e-8,
                         worst_dc <= 1e-8))
        rows.append(_row("chart_derivative_bound", worst_jac, 1.0,
                         worst_jac <= 1.0))
    return rows


def lagrangian_suite(scenario: Scenario, rng=None,
                     sample_budget: int = 1000) -> list[dict]:
    rng = np.random.default_rng(5) if rng is None else rng
    model, terminal, domain = scenario.model, scenario.terminal, scenario.domain
    rows = []
    report = L.verify_hypotheses(model, terminal, domain, sample_budget,
                                 rng=rng)
    for key, entry in report.entries.items():
        rows.append(_row(f"hypothesis_{key}", entry["worst_ratio"], 1.0 + 1e-9,
                         entry["passed"]))

    # convex-duality inequality, with equality at the conjugate maximizer
    n = 400
    lo, hi = domain.ambient_box[:, 0], domain.ambient_box[:, 1]
    xs = lo + rng.uniform(size=(n, domain.dimension)) * (hi - lo)
    ts = rng.uniform(0.0, model.horizon, size=n)
    ps = rng.standard_normal((n, domain.dimension)) * 3.0
    vs = rng.standard_normal((n, domain.dimension)) * 3.0
    stats = model.reference_stats
    h, v_star = L.legendre_transform(model, ts, xs, ps, stats)
    lvals = model.value(ts, xs, vs, stats)
    fenchel = h + lvals - np.sum(ps * vs, axis=-1)
    worst = -float(np.min(fenchel))
    rows.append(_row("fenchel_inequality", worst, 1e-10, worst <= 1e-10))
    at_max = np.abs(h + model.value(ts, xs, v_star, stats)
                    - np.sum(ps * v_star, axis=-1))
    worst = float(np.max(at_max))
    rows.append(_row("fenchel_equality_at_maximizer", worst, 1e-8,
                     worst <= 1e-8))

    # biconjugacy by refined grid search over the dual variable
    worst = 0.0
    for i in range(6):
        t_, x_, v_ = ts[i], xs[i], vs[i]
        center = model.grad_v(t_, x_, v_, stats)
        span = 2.0
        best = -np.inf
        for _ in range(4):
            axes = [np.linspace(c - span, c + span, 21) for c in center]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"),
                            axis=-1).reshape(-1, domain.dimension)
            hh, _ = L.legendre_transform(model, t_, np.broadcast_to(x_, grid.shape),
                                         grid, stats)
            vals = grid @ v_ - hh
            j = int(np.argmax(vals))
            best = max(best, float(vals[j]))
            center = grid[j]
            span /= 8.0
        worst = max(worst, abs(best - float(model.value(t_, x_, v_, stats))))
    rows.append(_row("biconjugacy_grid_search", worst, 1e-6, worst <= 1e-6))

    # conjugate-gradient transfer of the measure Lipschitz constant
    if model.c1 > 0:
        view_c2 = model.c1 * model.c
        worst = 0.0
        for _ in range(10):
            nu1 = L._random_joint(domain, rng, 4, 3.0)
            nu2 = L._random_joint(domain, rng, 4, 3.0)
            w1 = M.wasserstein1(nu1, nu2)
            if w1 < 1e-9:
                continue
            idx = rng.integers(0, n, size=4)
            d1 = L.dp_hamiltonian(model, ts[idx], xs[idx], ps[idx],
                                  model.stats_of(nu1))
            d2 = L.dp_hamiltonian(model, ts[idx], xs[idx], ps[idx],
                                  model.stats_of(nu2))
            worst = max(worst, float(np.max(
                np.linalg.norm(d1 - d2, axis=-1)
            )) / (view_c2 * w1))
        rows.append(_row("conjugate_measure_lipschitz", worst, 1.0 + 1e-9,
                         worst <= 1.0 + 1e-9))
    return rows


def measures_suite(rng=None) -> list[dict]:
    rng = np.random.default_rng(11) if rng is None else rng
    rows = []
    # transport certificates on random instances
    worst_gap = 0.0
    for _ in range(20):
        na, nb = rng.integers(2, 50), rng.integers(2, 50)
        mu1 = M.StateMeasure(points=rng.standard_normal((na, 2)),
                             weights=np.ones(na) / na)
        mu2 = M.StateMeasure(points=rng.standard_normal((nb, 2)),
                             weights=np.ones(nb) / nb)
        cert = M.wasserstein1(mu1, mu2, return_certificate=True)
        worst_gap = max(worst_gap, abs(cert.primal_upper - cert.value),
                        abs(cert.value - cert.dual_lower))
    rows.append(_row("transport_duality_gap", worst_gap, 1e-9,
                     worst_gap <= 1e-9))

    # triangle inequality on sampled triples
    worst = 0.0
    for _ in range(30):
        mus = []
        for _ in range(3):
            k = int(rng.integers(2, 30))
            mus.append(M.StateMeasure(points=rng.standard_normal((k, 2)),
                                      weights=np.ones(k) / k))
        dab = M.wasserstein1(mus[0], mus[1])
        dbc = M.wasserstein1(mus[1], mus[2])
        dac = M.wasserstein1(mus[0], mus[2])
        worst = max(worst, dac - dab - dbc)
    rows.append(_row("triangle_inequality_violation", worst, 1e-9,
                     worst <= 1e-9))

    # pushforward commutes with mixing
    times = np.linspace(0.0, 1.0, 51)
    def particle(x0, v):
        states = x0 + np.outer(times, [v])
        return states[None, :, :], np.full((1, 51, 1), v)
    s1, c1v = particle(0.1, 0.3)
    s2, c2v = particle(0.5, -0.2)
    eta1 = M.PathMeasure(times=times, states=s1, controls=c1v, weights=[1.0])
    eta2 = M.PathMeasure(times=times, states=s2, controls=c2v, weights=[1.0])
    mixed, _ = M.mix([eta1, eta2], [0.25, 0.75])
    nu_mix = M.push_forward_at_time(mixed, 0.4)
    nu1 = M.push_forward_at_time(eta1, 0.4)
    nu2 = M.push_forward_at_time(eta2, 0.4)
    manual = np.concatenate([nu1.points, nu2.points])
    err = float(np.max(np.abs(np.sort(nu_mix.points, axis=0)
                              - np.sort(manual, axis=0))))
    wts = sorted(nu_mix.weights)
    err = max(err, abs(wts[0] - 0.25), abs(wts[1] - 0.75))
    rows.append(_row("pushforward_mixing_commutes", err, 1e-12, err <= 1e-12))

    # moving one particle dominates slice transport by its weighted excursion
    eta3 = M.PathMeasure(
        times=times,
        states=np.concatenate([s1, s2]),
        controls=np.concatenate([c1v, c2v]),
        weights=[0.5, 0.5],
    )
    s2b = s2 + 0.05
    eta4 = M.PathMeasure(
        times=times,
        states=np.concatenate([s1, s2b]),
        controls=np.concatenate([c1v, c2v]),
        weights=[0.5, 0.5],
    )
    worst = 0.0
    for t in (0.0, 0.3, 0.9):
        w1 = M.wasserstein1(M.push_forward_at_time(eta3, t),
                            M.push_forward_at_time(eta4, t))
        worst = max(worst, w1 - 0.5 * 0.05)
    rows.append(_row("one_particle_move_domination", worst, 1e-10,
                     worst <= 1e-10))
    return rows


def constants_suite(scenario: Scenario, rng=None) -> list[dict]:
    rng = np.random.default_rng(13) if rng is None else rng
    model, terminal, domain = scenario.model, scenario.terminal, scenario.domain
    rows = []
    view = L.hamiltonian_view(model, domain, rng=rng)
    try:
        sol = C.solve_k_budget(model, terminal, view, domain)
        k1t, k2t = C.k_tilde(sol.constants, sol.budget)
        rows.append(_row("budget_speed_strict", k1t / sol.budget.k1, 1.0,
                         k1t < sol.budget.k1))
        rows.append(_row("budget_slope_strict", k2t / sol.budget.k2, 1.0,
                         k2t < sol.budget.k2))
        cc = sol.constants
        rows.append(_row(
            "closed_form_exactness",
            abs(cc.delta - min(1.0 / (2 * cc.m * model.c), 1.0))
            + abs(cc.costate_bound - 2 * np.sqrt(model.c * cc.C1) / cc.delta),
            0.0, cc.delta == min(1.0 / (2 * cc.m * model.c), 1.0)
            and cc.costate_bound == 2 * np.sqrt(model.c * cc.C1) / cc.delta,
        ))
    except SmallnessViolated as exc:
        rows.append(_row("budget_exists", 1.0, 0.0, False, str(exc)))
        return rows

    # monotonicity of theta and C1 under +10% sweeps of declared constants
    base = C.compute_base(model, terminal, view, domain, 0.0)
    for attr in ("n1", "c", "kappa1"):
        bumped = replace(model, **{attr: getattr(model, attr) * 1.1})
        up = C.compute_base(bumped, terminal, view, domain, 0.0,
                            _m_cache=base.m)
        ok = up.theta >= base.theta - 1e-12 and up.C1 >= base.C1 - 1e-12
        rows.append(_row(f"monotone_in_{attr}",
                         min(up.theta - base.theta, up.C1 - base.C1), 0.0, ok))
    # self-map values increase with the coupling constant
    if model.c1 > 0:
        s = sol.budget.lip_nu
        lo = C.compute_base(model, terminal, view, domain, s / 2,
                            _m_cache=base.m)
        hi = C.compute_base(model, terminal, view, domain, s,
                            _m_cache=base.m)
        ok = (hi.k_tilde_1 >= lo.k_tilde_1 - 1e-12
              and hi.k_tilde_2 >= lo.k_tilde_2 - 1e-12)
        rows.append(_row("self_map_monotone_in_flow",
                         hi.k_tilde_1 - lo.k_tilde_1, 0.0, ok))
    return rows


def approx_suite(rng=None, fast: bool = True) -> list[dict]:
    rows = []
    hug = boundary_hug(num_nodes=200 if fast else 400)
    consts = check_approx_constants(hug.atlas, hug.budget, 4.0)
    rows.append(_row("interval_count", consts.intervals, consts.intervals,
                     consts.intervals == int(np.ceil(hug.budget[0] * 4.0
                                                     / consts.r_hat)) + 1))
    # half-line scaling identities
    p = 1.0 + np.linspace(0.0, 1.0, 33)
    scaled = scale_halfline(p, 0.5)
    ok = (abs(scaled[0] - 0.5) < 1e-15
          and float(np.max(np.abs(np.diff(scaled) - 0.5 * np.diff(p)))) < 1e-15)
    rows.append(_row("halfline_scaling", abs(scaled[0] - 0.5), 1e-15, ok))

    # identity at zero perturbation
    ctrl0, audit0 = approximate_control(
        hug.domain, hug.atlas, hug.control, hug.start, hug.start, hug.budget,
        mode="best-effort",
    )
    rows.append(_row("identity_at_zero_perturbation", audit0.sup_gap_control,
                     0.0, audit0.sup_gap_control == 0.0))

    # small perturbation: feasibility, inflated budget, linear gap
    eps = 1e-6
    n_in = -hug.start / np.linalg.norm(hug.start)
    ctrl, audit = approximate_control(
        hug.domain, hug.atlas, hug.control, hug.start, hug.start + eps * n_in,
        hug.budget, mode="best-effort",
    )
    rows.append(_row("perturbed_feasible", audit.min_distance, -1e-9,
                     audit.feasible))
    rows.append(_row("perturbed_within_inflated_budget",
                     max(audit.max_speed - hug.budget[0] - 1.0,
                         audit.max_slope - hug.budget[1] - 1.0), 0.0,
                     audit.budget_ok))
    rows.append(_row("perturbed_case_checks",
                     sum(not r["checks_ok"] for r in audit.rows), 0.0,
                     all(r["checks_ok"] for r in audit.rows)))
    ctrl2, audit2 = approximate_control(
        hug.domain, hug.atlas, hug.control, hug.start,
        hug.start + 0.5 * eps * n_in, hug.budget, mode="best-effort",
    )
    ratio = audit2.sup_gap_control / audit.sup_gap_control
    rows.append(_row("gap_halves_with_perturbation", ratio, 0.5 + 1e-4,
                     ratio <= 0.5 + 1e-4))
    return rows
