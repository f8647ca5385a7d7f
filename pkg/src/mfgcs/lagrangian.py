"""Running and terminal cost models, convex duality, hypothesis checks.

A :class:`LagrangianModel` packages the running cost ``l(t, x, v, nu)`` with
its closed-form derivatives and the structural constants it declares:

* ``n1``   -- bound on ``|l| + |D_x l| + |D_v l|`` at ``v = 0``;
* ``c``    -- two-sided velocity-Hessian bound, ``(1/c) I <= D2_vv l <= c I``;
* ``k1``   -- mixed-Hessian growth, ``|D2_xv l| <= k1 (1 + |v|)``;
* ``c1``   -- Lipschitz constant of ``l`` and ``D_v l`` in the measure
  argument (1-Wasserstein, sum ground metric);
* ``kappa1`` -- velocity-weighted time-Lipschitz factor.

Measure dependence in the built-in models factors through a bounded smooth
statistic ``S(nu)`` of certified norm bound and Wasserstein-Lipschitz
constant, so the declared ``c1`` is guaranteed by construction.

``legendre_transform`` computes the convex conjugate in the velocity variable
(with maximizer) by a damped, batched Newton iteration; ``dp_hamiltonian``
returns the maximizer, which is the optimal-velocity map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NoConvergence
from .geometry import Domain
from .measures import JointMeasure, StateMeasure, wasserstein1


@dataclass(frozen=True)
class LagrangianModel:
    name: str
    dimension: int
    horizon: float
    n1: float
    c: float
    k1: float
    c1: float
    kappa1: float
    value: Callable  # (t, x, v, stats) -> (...)
    grad_x: Callable
    grad_v: Callable
    hess_vv: Callable  # (..., d, d)
    hess_xv: Callable  # (..., d, d); [i, j] = d2 l / dx_i dv_j
    num_stats: int = 0
    stats_fn: Callable[[JointMeasure], np.ndarray] | None = None
    stats_bound: float = 0.0
    stats_lipschitz: float = 0.0
    reference_stats: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (self.c > 1.0):
            raise ValueError("Hessian bound c must exceed 1")
        for name in ("n1", "k1", "c1", "kappa1", "horizon"):
            if getattr(self, name) < 0 or not np.isfinite(getattr(self, name)):
                raise ValueError(f"declared constant {name} must be finite and >= 0")

    def stats_of(self, nu) -> np.ndarray:
        """Coupling statistic of a joint measure (or pass-through array)."""
        if nu is None:
            return self.reference_stats
        if isinstance(nu, JointMeasure):
            if self.stats_fn is None:
                return self.reference_stats
            return self.stats_fn(nu)
        return np.asarray(nu, dtype=float)

    def stats_path(self, eta) -> np.ndarray:
        """Statistics of every time slice of a path measure, (N+1, k)."""
        if self.stats_fn is None or self.num_stats == 0:
            return np.zeros((len(eta.times), 0))
        s = [
            self.stats_fn(JointMeasure(eta.states[:, j], eta.controls[:, j],
                                       eta.weights))
            for j in range(len(eta.times))
        ]
        return np.stack(s, axis=0)


@dataclass(frozen=True)
class TerminalCost:
    """Final cost ``l_T(x, mu)`` with declared sup bounds.

    ``c1`` is the declared measure-Lipschitz constant, shared with the
    running cost's declaration.
    """

    name: str
    value: Callable  # (x, mu: StateMeasure | None) -> (...)
    gradient: Callable  # (x, mu) -> (..., d)
    sup_value: float
    sup_gradient: float
    c1: float


# ---------------------------------------------------------------------------
# Legendre transform / Hamiltonian
# ---------------------------------------------------------------------------

def _golden_ascent(g, v0, iters=60):
    """Gradient ascent with golden-section line search (fallback path)."""
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    v = v0
    for _ in range(iters):
        d = g(v, grad=True)
        if np.max(np.linalg.norm(d, axis=-1)) < 1e-14:
            break
        a, b = 0.0, 4.0
        x1, x2 = b - gr * (b - a), a + gr * (b - a)
        for _ in range(80):
            if np.mean(g(v + x1 * d)) > np.mean(g(v + x2 * d)):
                b = x2
            else:
                a = x1
            x1, x2 = b - gr * (b - a), a + gr * (b - a)
        v = v + 0.5 * (a + b) * d
    return v


def legendre_transform(model: LagrangianModel, t, x, p, nu=None,
                       tol: float = 1e-12, max_iter: int = 100):
    """Convex conjugate of the running cost in v, with its maximizer.

    Solves ``D_v l(t, x, v, nu) = p`` by damped Newton (the Hessian is
    uniformly positive definite), then returns ``(h, v*)`` with
    ``h = p . v* - l(t, x, v*, nu)``.  Batched over leading axes of x and p.
    """
    stats = model.stats_of(nu)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.array(np.broadcast_arrays(np.zeros_like(x) + p)[0], copy=True)

    def residual(vv):
        return model.grad_v(t, x, vv, stats) - p

    r = residual(v)
    for _ in range(max_iter):
        rn = np.max(np.abs(r))
        if rn <= tol:
            break
        H = model.hess_vv(t, x, v, stats)
        try:
            step = np.linalg.solve(H, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"velocity Hessian is singular: {exc}") from None
        scale = 1.0
        for _ in range(40):
            v_new = v - scale * step
            r_new = residual(v_new)
            if np.max(np.abs(r_new)) <= rn * (1.0 - 1e-4 * scale) + 1e-15:
                break
            scale *= 0.5
        else:
            # damped Newton stalled; polish with golden-section ascent
            def g(vv, grad=False):
                if grad:
                    return p - model.grad_v(t, x, vv, stats)
                return np.sum(p * vv, axis=-1) - model.value(t, x, vv, stats)

            v = _golden_ascent(g, v)
            r = residual(v)
            if np.max(np.abs(r)) <= 1e-10:
                break
            raise NoConvergence("conjugate solve stalled")
        v, r = v_new, r_new
    else:
        raise NoConvergence(
            f"conjugate solve above tolerance after {max_iter} iterations"
        )
    h = np.sum(p * v, axis=-1) - model.value(t, x, v, stats)
    return h, v


def dp_hamiltonian(model: LagrangianModel, t, x, p, nu=None, **kw) -> np.ndarray:
    """Gradient of the conjugate in p: the conjugate maximizer itself."""
    return legendre_transform(model, t, x, p, nu, **kw)[1]


def dx_hamiltonian(model: LagrangianModel, t, x, p, nu=None, **kw) -> np.ndarray:
    """Gradient of the conjugate in x: ``-D_x l`` at the maximizer."""
    _, v = legendre_transform(model, t, x, p, nu, **kw)
    return -model.grad_x(t, x, v, model.stats_of(nu))


@dataclass(frozen=True)
class HamiltonianView:
    """Conjugate-side constants, estimated by sampled suprema x 1.25.

    ``c2 = c1 * c`` is exact (contraction of the maximizer map under the
    measure perturbation); ``n2``, ``k2``, ``kappa2`` are sampled over the
    scenario's state box, a p-ball, and the full certified statistic range,
    then inflated by a 1.25 safety factor.
    """

    n2: float
    k2: float
    c2: float
    kappa2: float
    p_radius: float
    model: LagrangianModel = field(repr=False)

    def h(self, t, x, p, nu=None):
        return legendre_transform(self.model, t, x, p, nu)[0]

    def dp_h(self, t, x, p, nu=None):
        return dp_hamiltonian(self.model, t, x, p, nu)

    def dx_h(self, t, x, p, nu=None):
        return dx_hamiltonian(self.model, t, x, p, nu)


def _sample_stats(model: LagrangianModel, rng, count: int) -> np.ndarray:
    """Statistic vectors spanning the certified range, extremes included."""
    k = model.num_stats
    if k == 0:
        return np.zeros((1, 0))
    raw = rng.uniform(-1.0, 1.0, size=(count, k))
    raw = np.concatenate([raw, np.eye(k), -np.eye(k), np.zeros((1, k))])
    nrm = np.linalg.norm(raw, axis=-1, keepdims=True)
    return model.stats_bound * raw / np.maximum(nrm, 1.0)


def hamiltonian_view(model: LagrangianModel, domain: Domain,
                     p_radius: float = 8.0, samples: int = 400,
                     rng=None) -> HamiltonianView:
    rng = np.random.default_rng(0) if rng is None else rng
    xs = domain.ambient_box[:, 0] + rng.uniform(
        0.0, 1.0, size=(samples, domain.dimension)
    ) * (domain.ambient_box[:, 1] - domain.ambient_box[:, 0])
    ts = rng.uniform(0.0, model.horizon, size=samples)
    stats = _sample_stats(model, rng, 8)

    n2 = 0.0
    k2 = 0.0
    kappa2 = 0.0
    for s in stats:
        zero = np.zeros((samples, model.dimension))
        h0, v0 = legendre_transform(model, ts, xs, zero, s)
        dxh0 = -model.grad_x(ts, xs, v0, s)
        n2 = max(n2, float(np.max(
            np.abs(h0) + np.linalg.norm(dxh0, axis=-1) + np.linalg.norm(v0, axis=-1)
        )))
        ps = rng.standard_normal((samples, model.dimension))
        ps *= rng.uniform(0.0, p_radius, size=(samples, 1)) / np.maximum(
            np.linalg.norm(ps, axis=-1, keepdims=True), 1e-12
        )
        _, vs = legendre_transform(model, ts, xs, ps, s)
        H = model.hess_vv(ts, xs, vs, s)
        Mxv = model.hess_xv(ts, xs, vs, s)
        dv_dx = -np.linalg.solve(H, np.swapaxes(Mxv, -1, -2))
        opnorm = np.linalg.norm(dv_dx, ord=2, axis=(-2, -1))
        k2 = max(k2, float(np.max(opnorm / (1.0 + np.linalg.norm(ps, axis=-1)))))
        # time ratios for the conjugate and its p-gradient
        ts2 = rng.uniform(0.0, model.horizon, size=samples)
        ok = np.abs(ts2 - ts) > 1e-3
        if np.any(ok) and model.horizon > 0:
            h_a, v_a = legendre_transform(model, ts[ok], xs[ok], ps[ok], s)
            h_b, v_b = legendre_transform(model, ts2[ok], xs[ok], ps[ok], s)
            dt = np.abs(ts2[ok] - ts[ok])
            pn = np.linalg.norm(ps[ok], axis=-1)
            kappa2 = max(kappa2, float(np.max(
                np.abs(h_a - h_b) / ((1.0 + pn**2) * dt)
            )), float(np.max(
                np.linalg.norm(v_a - v_b, axis=-1) / ((1.0 + pn) * dt)
            )))
    return HamiltonianView(
        n2=1.25 * n2,
        k2=1.25 * k2,
        c2=model.c1 * model.c,
        kappa2=1.25 * kappa2,
        p_radius=p_radius,
        model=model,
    )


def derived_derivative_bounds(model: LagrangianModel,
                              view: HamiltonianView) -> tuple[float, float, float, float]:
    """Explicit safe growth constants for the first derivatives.

    Mean-value bounds: ``|D_v l| <= (n1 + c)(1 + |v|)`` and
    ``|D_x l| <= (n1 + 1.5 k1)(1 + |v|^2)`` (using ``|v| <= (1 + |v|^2)/2``),
    mirrored on the conjugate side with ``(n2, k2)``.
    """
    return (
        model.n1 + model.c,
        model.n1 + 1.5 * model.k1,
        view.n2 + model.c,
        view.n2 + 1.5 * view.k2,
    )


# ---------------------------------------------------------------------------
# hypothesis verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    entries: dict

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries.values())

    def worst(self, key: str) -> float:
        return self.entries[key]["worst_ratio"]


def _random_joint(domain: Domain, rng, n_atoms: int, v_scale: float) -> JointMeasure:
    pts = []
    while len(pts) < n_atoms:
        cand = domain.ambient_box[:, 0] + rng.uniform(
            0.0, 1.0, size=(4 * n_atoms, domain.dimension)
        ) * (domain.ambient_box[:, 1] - domain.ambient_box[:, 0])
        inside = cand[domain.signed_distance(cand) >= 0.0]
        pts.extend(list(inside))
    pts = np.stack(pts[:n_atoms])
    vel = rng.uniform(-v_scale, v_scale, size=pts.shape)
    w = rng.uniform(0.2, 1.0, size=n_atoms)
    return JointMeasure(points=pts, velocities=vel, weights=w / w.sum())


def verify_hypotheses(model: LagrangianModel, terminal: TerminalCost,
                      domain: Domain, sample_budget: int = 1000,
                      rng=None, v_scale: float = 4.0) -> HypothesisReport:
    """Sampled check of every declared structural constant.

    Each entry reports the worst observed ratio of measured quantity to its
    declared bound; a ratio above ``1 + 1e-9`` fails.  Measure-Lipschitz
    checks use exact transport distances between small random atomic
    measures.
    """
    if sample_budget < 1000:
        raise ValueError("sample budget must be at least 1000")
    rng = np.random.default_rng(7) if rng is None else rng
    n = sample_budget
    lo, hi = domain.ambient_box[:, 0], domain.ambient_box[:, 1]
    xs = lo + rng.uniform(0.0, 1.0, size=(n, domain.dimension)) * (hi - lo)
    ts = rng.uniform(0.0, model.horizon, size=n)
    vs = rng.uniform(-v_scale, v_scale, size=(n, domain.dimension))
    stats = _sample_stats(model, rng, 6)
    slack = 1.0 + 1e-9
    entries: dict[str, dict] = {}

    def record(key, worst, declared, detail=""):
        entries[key] = {
            "passed": bool(worst <= slack),
            "worst_ratio": float(worst),
            "declared": float(declared),
            "detail": detail,
        }

    # bound at v = 0
    worst = 0.0
    zero = np.zeros((n, model.dimension))
    for s in stats:
        total = (
            np.abs(model.value(ts, xs, zero, s))
            + np.linalg.norm(model.grad_x(ts, xs, zero, s), axis=-1)
            + np.linalg.norm(model.grad_v(ts, xs, zero, s), axis=-1)
        )
        worst = max(worst, float(np.max(total)) / model.n1)
    record("zero_velocity_bound", worst, model.n1)

    # velocity Hessian two-sided bound and mixed-Hessian growth
    worst_h = 0.0
    worst_m = 0.0
    for s in stats:
        H = model.hess_vv(ts, xs, vs, s)
        eig = np.linalg.eigvalsh(H)
        worst_h = max(
            worst_h,
            float(np.max(eig)) / model.c,
            (1.0 / model.c) / max(float(np.min(eig)), 1e-300),
        )
        Mxv = model.hess_xv(ts, xs, vs, s)
        opn = np.linalg.norm(Mxv, ord=2, axis=(-2, -1))
        worst_m = max(worst_m, float(np.max(
            opn / (model.k1 * (1.0 + np.linalg.norm(vs, axis=-1)))
        )) if model.k1 > 0 else (1e9 if np.max(opn) > 0 else 0.0))
    record("velocity_hessian_bounds", worst_h, model.c)
    record("mixed_hessian_growth", worst_m, model.k1)

    # measure Lipschitz continuity of l and D_v l
    worst_l = 0.0
    worst_g = 0.0
    n_pairs = max(24, sample_budget // 40)
    for _ in range(n_pairs):
        nu1 = _random_joint(domain, rng, int(rng.integers(2, 6)), v_scale)
        nu2 = _random_joint(domain, rng, int(rng.integers(2, 6)), v_scale)
        w1 = wasserstein1(nu1, nu2)
        if w1 < 1e-9:
            continue
        idx = rng.integers(0, n, size=8)
        t_, x_, v_ = ts[idx], xs[idx], vs[idx]
        s1, s2 = model.stats_of(nu1), model.stats_of(nu2)
        dl = np.abs(model.value(t_, x_, v_, s1) - model.value(t_, x_, v_, s2))
        dg = np.linalg.norm(
            model.grad_v(t_, x_, v_, s1) - model.grad_v(t_, x_, v_, s2), axis=-1
        )
        if model.c1 > 0:
            worst_l = max(worst_l, float(np.max(dl)) / (model.c1 * w1))
            worst_g = max(worst_g, float(np.max(dg)) / (model.c1 * w1))
        elif max(float(np.max(dl)), float(np.max(dg))) > 1e-12:
            worst_l = worst_g = 1e9
    record("measure_lipschitz_value", worst_l, model.c1)
    record("measure_lipschitz_velocity_gradient", worst_g, model.c1)

    # |v|-weighted time Lipschitz continuity
    ts2 = rng.uniform(0.0, model.horizon, size=n)
    dt = np.abs(ts2 - ts)
    ok = dt > 1e-6
    worst_t = 0.0
    if model.horizon > 0 and np.any(ok):
        for s in stats:
            dv = np.abs(
                model.value(ts, xs, vs, s) - model.value(ts2, xs, vs, s)
            )[ok]
            dgv = np.linalg.norm(
                model.grad_v(ts, xs, vs, s) - model.grad_v(ts2, xs, vs, s),
                axis=-1,
            )[ok]
            vn = np.linalg.norm(vs, axis=-1)[ok]
            if model.kappa1 > 0:
                worst_t = max(
                    worst_t,
                    float(np.max(dv / (model.kappa1 * (1.0 + vn**2) * dt[ok]))),
                    float(np.max(dgv / (model.kappa1 * (1.0 + vn) * dt[ok]))),
                )
            elif max(float(np.max(dv)), float(np.max(dgv))) > 1e-12:
                worst_t = 1e9
    record("time_lipschitz", worst_t, model.kappa1)

    # terminal bounds and measure Lipschitz continuity
    mu_samples = [
        state_measure_from(_random_joint(domain, rng, int(rng.integers(2, 6)),
                                         v_scale))
        for _ in range(12)
    ]
    worst_tv = 0.0
    worst_tg = 0.0
    for mu in mu_samples:
        worst_tv = max(
            worst_tv, float(np.max(np.abs(terminal.value(xs, mu)))) / terminal.sup_value
        )
        worst_tg = max(
            worst_tg,
            float(np.max(np.linalg.norm(terminal.gradient(xs, mu), axis=-1)))
            / terminal.sup_gradient,
        )
    record("terminal_bounds", max(worst_tv, worst_tg),
           min(terminal.sup_value, terminal.sup_gradient))

    worst_tc = 0.0
    for i in range(len(mu_samples) - 1):
        mu1, mu2 = mu_samples[i], mu_samples[i + 1]
        w1 = wasserstein1(mu1, mu2)
        if w1 < 1e-9:
            continue
        idx = rng.integers(0, n, size=8)
        dv = np.abs(terminal.value(xs[idx], mu1) - terminal.value(xs[idx], mu2))
        dg = np.linalg.norm(
            terminal.gradient(xs[idx], mu1) - terminal.gradient(xs[idx], mu2),
            axis=-1,
        )
        if terminal.c1 > 0:
            worst_tc = max(worst_tc, float(np.max(dv)) / (terminal.c1 * w1),
                           float(np.max(dg)) / (terminal.c1 * w1))
        elif max(float(np.max(dv)), float(np.max(dg))) > 1e-12:
            worst_tc = 1e9
    record("terminal_measure_lipschitz", worst_tc, terminal.c1)

    return HypothesisReport(entries=entries)


def state_measure_from(nu: JointMeasure) -> StateMeasure:
    return StateMeasure(points=nu.points, weights=nu.weights)


# ---------------------------------------------------------------------------
# built-in cost models
# ---------------------------------------------------------------------------

def _squash(v):
    """Bounded velocity feature v / sqrt(1 + |v|^2); 1-Lipschitz, |.| < 1."""
    v = np.asarray(v, dtype=float)
    return v / np.sqrt(1.0 + np.sum(v**2, axis=-1, keepdims=True))


def _squash_jac(v):
    v = np.asarray(v, dtype=float)
    q = 1.0 + np.sum(v**2, axis=-1)
    eye = np.eye(v.shape[-1])
    outer = v[..., :, None] * v[..., None, :]
    return eye / np.sqrt(q)[..., None, None] - outer / (q**1.5)[..., None, None]


def quadratic(dimension: int, weights=None, horizon: float = 1.0,
              n1: float = 1.0, c: float = 2.0, k1: float = 1.0,
              kappa1: float = 1.0, c1: float = 0.0) -> LagrangianModel:
    """Pure kinetic cost ``l = (1/2) v' diag(w) v`` (no coupling).

    Declared constants default to the frozen verification scenario; the true
    suprema are all zero or the diagonal weights, so any declaration at least
    that large verifies.
    """
    w = np.ones(dimension) if weights is None else np.asarray(weights, dtype=float)
    if np.min(w) < 1.0 / c - 1e-12 or np.max(w) > c + 1e-12:
        raise ValueError("diagonal weights violate the declared Hessian bound")

    def value(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum(w * v * v, axis=-1)

    def grad_v(t, x, v, stats):
        return w * np.asarray(v, dtype=float)

    def grad_x(t, x, v, stats):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess_vv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.diag(w), v.shape + (dimension,)).copy()

    def hess_xv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.zeros(v.shape + (dimension,))

    return LagrangianModel(
        name="quadratic", dimension=dimension, horizon=horizon,
        n1=n1, c=c, k1=k1, c1=c1, kappa1=kappa1,
        value=value, grad_x=grad_x, grad_v=grad_v,
        hess_vv=hess_vv, hess_xv=hess_xv,
    )


def shifted_quadratic(dimension: int, drift, horizon: float = 1.0,
                      c: float = 2.0, c1: float = 0.0) -> LagrangianModel:
    """Kinetic cost around a preferred velocity: ``l = (1/2)|v - a|^2``."""
    a = np.asarray(drift, dtype=float)
    n1 = 0.5 * float(a @ a) + float(np.linalg.norm(a)) + 1e-9

    def value(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum((v - a) ** 2, axis=-1)

    def grad_v(t, x, v, stats):
        return np.asarray(v, dtype=float) - a

    def grad_x(t, x, v, stats):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess_vv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.eye(dimension), v.shape + (dimension,)).copy()

    def hess_xv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.zeros(v.shape + (dimension,))

    return LagrangianModel(
        name="shifted-quadratic", dimension=dimension, horizon=horizon,
        n1=n1, c=c, k1=1.0, c1=c1, kappa1=1.0,
        value=value, grad_x=grad_x, grad_v=grad_v,
        hess_vv=hess_vv, hess_xv=hess_xv,
    )


def quadratic_with_potential(dimension: int, target, weight: float = 0.5,
                             horizon: float = 1.0, c: float = 2.0,
                             n1: float | None = None,
                             box_radius: float = 4.0) -> LagrangianModel:
    """Kinetic cost plus a running quadratic attraction toward a point.

    ``l = (1/2)|v|^2 + weight * |x - z|^2``.  The running state cost makes
    constrained optima press against the boundary along whole arcs, which
    pure terminal chasing cannot do on a convex region (straight chords
    between feasible points stay feasible).
    """
    z = np.asarray(target, dtype=float)
    if n1 is None:
        n1 = weight * (box_radius + float(np.linalg.norm(z))) ** 2 * 1.5 + 1.0

    def value(t, x, v, stats):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum(v * v, axis=-1) + weight * np.sum((x - z) ** 2, axis=-1)

    def grad_v(t, x, v, stats):
        return np.asarray(v, dtype=float) + np.zeros_like(np.asarray(x, dtype=float))

    def grad_x(t, x, v, stats):
        return 2.0 * weight * (np.asarray(x, dtype=float) - z) + np.zeros_like(
            np.asarray(v, dtype=float)
        )

    def hess_vv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.eye(dimension), v.shape + (dimension,)).copy()

    def hess_xv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.zeros(v.shape + (dimension,))

    return LagrangianModel(
        name="quadratic-potential", dimension=dimension, horizon=horizon,
        n1=n1, c=c, k1=1.0, c1=0.0, kappa1=1.0,
        value=value, grad_x=grad_x, grad_v=grad_v,
        hess_vv=hess_vv, hess_xv=hess_xv,
    )


def quadratic_congestion(dimension: int, c1: float = 0.01,
                         amplitude: float = 0.1, horizon: float = 1.0,
                         n1: float = 1.0, c: float = 2.0, k1: float = 1.0,
                         kappa1: float = 1.0) -> LagrangianModel:
    """Kinetic cost plus a small alignment penalty with the crowd velocity.

    The coupling statistic is ``S(nu) = amplitude * mean of squash(v)``,
    which is bounded by ``amplitude`` and amplitude-Lipschitz in the
    1-Wasserstein distance; the coupling term ``c1 <squash(v), S(nu)>``
    therefore satisfies the declared measure-Lipschitz constant ``c1``
    by construction (both features are 1-Lipschitz with unit bound).
    """
    if not (0.0 < amplitude <= 1.0):
        raise ValueError("amplitude must lie in (0, 1]")

    def stats_fn(nu: JointMeasure) -> np.ndarray:
        return amplitude * (nu.weights @ _squash(nu.velocities))

    def value(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        base = 0.5 * np.sum(v * v, axis=-1)
        return base + c1 * np.sum(_squash(v) * stats, axis=-1)

    def grad_v(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        J = _squash_jac(v)
        stats_b = np.broadcast_to(stats, v.shape)
        return v + c1 * np.einsum("...ij,...i->...j", J, stats_b)

    def grad_x(t, x, v, stats):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess_vv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        h = 1e-5
        base = np.broadcast_to(np.eye(dimension), v.shape + (dimension,)).copy()
        cols = []
        for i in range(dimension):
            e = np.zeros(dimension)
            e[i] = h
            Jp = _squash_jac(v + e)
            Jm = _squash_jac(v - e)
            stats_b = np.broadcast_to(stats, v.shape)
            gp = np.einsum("...ij,...i->...j", Jp, stats_b)
            gm = np.einsum("...ij,...i->...j", Jm, stats_b)
            cols.append((gp - gm) / (2.0 * h))
        return base + c1 * np.stack(cols, axis=-1)

    def hess_xv(t, x, v, stats):
        v = np.asarray(v, dtype=float)
        return np.zeros(v.shape + (dimension,))

    return LagrangianModel(
        name="quadratic-congestion", dimension=dimension, horizon=horizon,
        n1=n1, c=c, k1=k1, c1=c1, kappa1=kappa1,
        value=value, grad_x=grad_x, grad_v=grad_v,
        hess_vv=hess_vv, hess_xv=hess_xv,
        num_stats=dimension, stats_fn=stats_fn, stats_bound=amplitude,
        stats_lipschitz=amplitude,
        reference_stats=np.zeros(dimension),
    )


# ---------------------------------------------------------------------------
# terminal cost presets
# ---------------------------------------------------------------------------

def _ramp(s):
    """Odd C^1 saturation: identity on [-1/2, 1/2], flat +-1 beyond 3/2."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    mid = 0.5 + (a - 0.5) - 0.5 * (a - 0.5) ** 2
    out = np.where(a <= 0.5, a, np.where(a < 1.5, mid, 1.0))
    return np.sign(s) * out


def _ramp_deriv(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    return np.where(a <= 0.5, 1.0, np.where(a < 1.5, 1.5 - a, 0.0))


def saturating_ramp(target, direction=None) -> TerminalCost:
    """Bounded pull toward a target along a unit direction.

    ``l_T(x) = ramp(<e, x - z>)`` with ``|l_T| <= 1`` and ``|D l_T| <= 1``,
    the gradient bound attained on a whole band (so grid maxima are exact).
    Measure-free: its declared measure-Lipschitz constant is 0.
    """
    z = np.atleast_1d(np.asarray(target, dtype=float))
    e = np.zeros_like(z)
    if direction is None:
        e[0] = 1.0
    else:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)

    def value(x, mu=None):
        x = np.asarray(x, dtype=float)
        return _ramp(np.sum(e * (x - z), axis=-1))

    def gradient(x, mu=None):
        x = np.asarray(x, dtype=float)
        return _ramp_deriv(np.sum(e * (x - z), axis=-1))[..., None] * e

    return TerminalCost(
        name="saturating-ramp", value=value, gradient=gradient,
        sup_value=1.0, sup_gradient=1.0, c1=0.0,
    )


def quadratic_distance(target, domain: Domain) -> TerminalCost:
    """Squared distance to a (possibly exterior) target point.

    Sup bounds are evaluated over the corners of the ambient box.
    """
    z = np.atleast_1d(np.asarray(target, dtype=float))
    corners = np.stack(np.meshgrid(*domain.ambient_box, indexing="ij"),
                       axis=-1).reshape(-1, domain.dimension)
    sup_v = float(np.max(np.sum((corners - z) ** 2, axis=-1)))
    sup_g = 2.0 * float(np.max(np.linalg.norm(corners - z, axis=-1)))

    def value(x, mu=None):
        x = np.asarray(x, dtype=float)
        return np.sum((x - z) ** 2, axis=-1)

    def gradient(x, mu=None):
        x = np.asarray(x, dtype=float)
        return 2.0 * (x - z)

    return TerminalCost(
        name="quadratic-distance", value=value, gradient=gradient,
        sup_value=sup_v, sup_gradient=sup_g, c1=0.0,
    )


def zero_terminal(dimension: int) -> TerminalCost:
    def value(x, mu=None):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def gradient(x, mu=None):
        return np.zeros_like(np.asarray(x, dtype=float))

    return TerminalCost(name="zero", value=value, gradient=gradient,
                        sup_value=1e-300, sup_gradient=1e-300, c1=0.0)
