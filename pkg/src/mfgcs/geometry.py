"""State regions: signed boundary distance, projections, and distance charts.

A :class:`Domain` is a smooth bounded region given by an analytic signed
distance (positive inside, zero on the boundary, negative outside).  Near the
boundary the distance function is a genuine tubular coordinate: every point
within ``collar_width`` of the boundary has a unique nearest boundary point,
and ``x = P(x) + b(x) * n(P(x))`` decomposes it into foot point and offset.

Charts (:class:`Chart`) are local coordinates around a boundary center whose
*last* coordinate equals the distance to the boundary; the remaining
coordinates parametrize the boundary patch itself (arc length in 2-D, a
tangent-frame projection on the sphere).  An :class:`Atlas` is a finite cover
of the boundary by such charts, with certified derivative bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ChartFailure, NotOnBoundary, OutOfChart, OutsideCollar

BOUNDARY_TOL = 1e-8
SNAP_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Bounded smooth state region described by its signed distance.

    Attributes
    ----------
    dimension : int
        Ambient dimension d.
    signed_distance : callable
        Vectorized map ``(..., d) -> (...)``; positive inside.
    distance_gradient : callable
        Closed-form gradient of the signed distance, unit norm in the collar.
    collar_width : float
        Radius of the band around the boundary on which the distance is twice
        continuously differentiable and projections are unique.
    diameter : float
    ambient_box : ndarray
        Shape (d, 2); a bounded box strictly containing the closed region,
        used as the sampling set for hypothesis checks and grid maxima.
    name : str
    boundary_samples : callable
        ``(n, rng) -> (n, d)`` quasi-uniform boundary points for audits.
    boundary_param : callable or None
        ``xi -> (phi, phi_inv)`` local boundary parametrization with
        ``phi(xi) = 0``; required to build charts.
    """

    dimension: int
    signed_distance: Callable[[np.ndarray], np.ndarray]
    distance_gradient: Callable[[np.ndarray], np.ndarray]
    collar_width: float
    diameter: float
    ambient_box: np.ndarray
    name: str
    boundary_samples: Callable[[int, np.random.Generator], np.ndarray]
    boundary_param: Callable[[np.ndarray], tuple] | None = None
    chart_jacobian_factory: Callable[[np.ndarray], Callable] | None = None

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return self.signed_distance(x) >= -tol

    def ambient_grid(self, points_per_axis: int = 64) -> np.ndarray:
        """Regular grid over the ambient box, flattened to (n, d)."""
        axes = [
            np.linspace(lo, hi, points_per_axis)
            for lo, hi in self.ambient_box
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def signed_distance(domain: Domain, x) -> np.ndarray:
    """Signed boundary distance; positive inside, negative outside."""
    return domain.signed_distance(np.asarray(x, dtype=float))


def snap_to_boundary(domain: Domain, x) -> np.ndarray:
    """Snap points with distance in [-1e-12, 0) onto the boundary."""
    x = np.asarray(x, dtype=float)
    b = domain.signed_distance(x)
    mask = (b < 0.0) & (b >= -SNAP_TOL)
    if not np.any(mask):
        return x
    out = np.array(x, copy=True)
    g = domain.distance_gradient(x)
    out[mask] = x[mask] - b[mask][..., None] * g[mask]
    return out


def boundary_projection(domain: Domain, x) -> np.ndarray:
    """Nearest boundary point, valid inside the collar.

    For an exact signed distance the foot point is ``x - b(x) grad b(x)``.
    Raises :class:`OutsideCollar` when ``|b(x)| >= collar_width`` (the
    projection may be non-unique there).
    """
    x = np.asarray(x, dtype=float)
    b = domain.signed_distance(x)
    if np.any(np.abs(b) >= domain.collar_width):
        raise OutsideCollar(
            f"point at distance {float(np.max(np.abs(b))):.3g} exceeds the "
            f"collar width {domain.collar_width:.3g} of '{domain.name}'"
        )
    return x - b[..., None] * domain.distance_gradient(x)


def inward_normal(domain: Domain, xi) -> np.ndarray:
    """Unit normal at a boundary point, pointing into the region."""
    xi = np.asarray(xi, dtype=float)
    b = domain.signed_distance(xi)
    if np.any(np.abs(b) > BOUNDARY_TOL):
        raise NotOnBoundary(
            f"|signed distance| = {float(np.max(np.abs(b))):.3g} > {BOUNDARY_TOL}"
        )
    g = domain.distance_gradient(xi)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    """Local boundary coordinates with the distance as last coordinate.

    ``forward`` maps an ambient point x near the center to coordinates
    ``(phi(P(x)), b(x))``; ``inverse`` maps ``y`` back to
    ``phi_inv(y[:-1]) + y[-1] * n(phi_inv(y[:-1]))``.  Both are certified on
    the ball of radius ``4 * r_hat`` around the center (forward) and on the
    image ball of radius ``2 * r_outer`` (inverse).
    """

    center: np.ndarray
    r_hat: float
    r_outer: float
    forward_raw: Callable[[np.ndarray], np.ndarray]
    inverse_raw: Callable[[np.ndarray], np.ndarray]
    deriv_bound: float
    jacobian_raw: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def domain_radius(self) -> float:
        return 4.0 * self.r_hat


def chart_forward(chart: Chart, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(x - chart.center, axis=-1) > chart.domain_radius):
        raise OutOfChart("point outside the chart's certified ball")
    y = chart.forward_raw(x)
    if np.any(np.linalg.norm(y, axis=-1) > 2.0 * chart.r_outer):
        raise OutOfChart("image outside the chart's certified range")
    return y


def chart_inverse(chart: Chart, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(np.linalg.norm(y, axis=-1) > 2.0 * chart.r_outer):
        raise OutOfChart("coordinates outside the chart's certified range")
    return chart.inverse_raw(y)


@dataclass(frozen=True)
class Atlas:
    """Finite chart cover of the boundary.

    ``deriv_bound`` is the max per-chart bound, ``r_outer``/``r_hat`` the min
    outer/inner radii; the collar set is ``{x : d(x, boundary) <= 2 r_hat}``.
    """

    charts: Sequence[Chart]
    deriv_bound: float
    r_outer: float
    r_hat: float
    domain: Domain = field(repr=False)

    def collar_contains(self, x, factor: float = 2.0) -> np.ndarray:
        b = self.domain.signed_distance(np.asarray(x, dtype=float))
        return np.abs(b) <= factor * self.r_hat

    def chart_for(self, x) -> Chart:
        """Chart whose center is nearest to x (must be within 3 r_hat)."""
        x = np.asarray(x, dtype=float)
        centers = np.stack([c.center for c in self.charts])
        dist = np.linalg.norm(centers - x, axis=-1)
        j = int(np.argmin(dist))
        if dist[j] > 3.0 * self.charts[j].r_hat + 1e-12:
            raise OutOfChart(
                f"no chart center within 3 r_hat of point (nearest {dist[j]:.3g})"
            )
        return self.charts[j]


def _fd_jacobian(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of f at a single point x."""
    d = x.shape[-1]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _fd_second_norm(f: Callable, x: np.ndarray, h: float = 1e-4) -> float:
    """Max norm of second-difference quotients of f at x (Hessian scale)."""
    d = x.shape[-1]
    f0 = f(x)
    worst = 0.0
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        second = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h**2
        worst = max(worst, float(np.max(np.abs(second))))
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            mixed = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h**2)
            worst = max(worst, float(np.max(np.abs(mixed))))
    return worst


def _build_chart(domain: Domain, xi: np.ndarray, r_hat: float) -> Chart:
    phi, phi_inv = domain.boundary_param(xi)

    def forward(x):
        x = np.asarray(x, dtype=float)
        b = domain.signed_distance(x)
        foot = x - b[..., None] * domain.distance_gradient(x)
        return np.concatenate([phi(foot), b[..., None]], axis=-1)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        foot = phi_inv(y[..., :-1])
        g = domain.distance_gradient(foot)
        n = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return foot + y[..., -1:] * n

    # Certification samples: foot points spread over the chart ball paired
    # with normal offsets covering the working band |b| <= 2 r_hat.
    rng = np.random.default_rng(0)
    n_samp = 160
    pts = domain.boundary_samples(4096, rng)
    near = pts[np.linalg.norm(pts - xi, axis=-1) <= 4.0 * r_hat]
    if len(near) == 0:
        near = xi[None, :]
    idx = rng.integers(0, len(near), size=n_samp)
    offsets = rng.uniform(-1.5 * r_hat, 2.0 * r_hat, size=n_samp)
    g = domain.distance_gradient(near[idx])
    samples = near[idx] + offsets[:, None] * g / np.linalg.norm(
        g, axis=-1, keepdims=True
    )
    samples = samples[
        np.linalg.norm(samples - xi, axis=-1) <= 4.0 * r_hat
    ]
    samples = np.concatenate([xi[None, :], samples], axis=0)

    y0 = forward(xi)
    if np.linalg.norm(y0) > 1e-9:
        raise ChartFailure("chart does not vanish at its own center")

    ys = forward(samples)
    b = domain.signed_distance(samples)
    if np.max(np.abs(ys[..., -1] - b)) > 1e-10:
        raise ChartFailure("last coordinate does not track the distance")
    round_trip = inverse(ys)
    if np.max(np.linalg.norm(round_trip - samples, axis=-1)) > 1e-8:
        raise ChartFailure("forward/inverse round trip exceeds 1e-8")

    bound = 1.0
    for k in range(0, len(samples), max(1, len(samples) // 40)):
        x = samples[k]
        y = forward(x)
        Jf = _fd_jacobian(forward, x)
        Ji = _fd_jacobian(inverse, y)
        smin = np.linalg.svd(Ji, compute_uv=False)[-1]
        if smin < 1e-3:
            raise ChartFailure(
                "inverse-derivative margin lost; shrink the inner radius"
            )
        bound = max(
            bound,
            float(np.linalg.norm(Jf, 2)),
            float(np.linalg.norm(Ji, 2)),
            _fd_second_norm(forward, x),
            _fd_second_norm(inverse, y),
        )

    r_outer = max(2.0 * r_hat, 1.25 * float(np.max(np.linalg.norm(ys, axis=-1))))
    jac = (domain.chart_jacobian_factory(xi)
           if domain.chart_jacobian_factory is not None else None)
    # safety factor on sampled derivative bounds
    return Chart(
        center=np.array(xi, dtype=float),
        r_hat=float(r_hat),
        r_outer=float(r_outer),
        forward_raw=forward,
        inverse_raw=inverse,
        deriv_bound=float(1.25 * bound),
        jacobian_raw=jac,
    )


def build_atlas(domain: Domain, target_r_hat: float, rng=None) -> Atlas:
    """Cover the boundary with distance charts of inner radius target_r_hat.

    Centers are chosen greedily from a fine boundary sample until every
    sampled boundary point lies within ``target_r_hat`` of a center.  Each
    chart is certified (center value, distance coordinate, round trip,
    derivative margin) at construction; failure raises :class:`ChartFailure`.
    """
    if domain.boundary_param is None:
        raise ChartFailure(f"domain '{domain.name}' has no boundary parametrization")
    if target_r_hat > domain.collar_width / 4.0:
        raise ValueError(
            "target inner radius must not exceed a quarter of the collar width"
        )
    rng = np.random.default_rng(0) if rng is None else rng
    pts = domain.boundary_samples(10_000, rng)
    centers = []
    uncovered = np.ones(len(pts), dtype=bool)
    while np.any(uncovered):
        xi = pts[np.argmax(uncovered)]
        centers.append(xi)
        uncovered &= np.linalg.norm(pts - xi, axis=-1) > 0.9 * target_r_hat
    charts = [_build_chart(domain, xi, target_r_hat) for xi in centers]
    return Atlas(
        charts=charts,
        deriv_bound=max(c.deriv_bound for c in charts),
        r_outer=min(c.r_outer for c in charts),
        r_hat=min(c.r_hat for c in charts),
        domain=domain,
    )


# ---------------------------------------------------------------------------
# Built-in domains
# ---------------------------------------------------------------------------

def _ball_domain(dim: int, name: str) -> Domain:
    def sd(x):
        x = np.asarray(x, dtype=float)
        return 1.0 - np.linalg.norm(x, axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return -x / np.maximum(r, 1e-300)

    if dim == 2:
        def bsamples(n, rng):
            th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
            return np.stack([np.cos(th), np.sin(th)], axis=-1)

        def bparam(xi):
            theta0 = float(np.arctan2(xi[1], xi[0]))

            def phi(y):
                y = np.asarray(y, dtype=float)
                th = np.arctan2(y[..., 1], y[..., 0]) - theta0
                th = (th + np.pi) % (2.0 * np.pi) - np.pi
                return th[..., None]  # unit circle: arc length == angle

            def phi_inv(s):
                s = np.asarray(s, dtype=float)[..., 0]
                return np.stack([np.cos(theta0 + s), np.sin(theta0 + s)], axis=-1)

            return phi, phi_inv
    else:
        def bsamples(n, rng):
            v = rng.standard_normal((n, dim))
            return v / np.linalg.norm(v, axis=-1, keepdims=True)

        def bparam(xi):
            xi = np.asarray(xi, dtype=float)
            # orthonormal tangent frame at xi
            basis = np.linalg.svd(xi[None, :])[2][1:]

            def phi(y):
                y = np.asarray(y, dtype=float)
                return (y - xi) @ basis.T

            def phi_inv(a):
                a = np.asarray(a, dtype=float)
                nrm2 = np.sum(a**2, axis=-1, keepdims=True)
                return a @ basis + np.sqrt(np.maximum(1.0 - nrm2, 0.0)) * xi

            return phi, phi_inv

    if dim == 2:
        def jac_factory(xi):
            def jac(x):
                x = np.asarray(x, dtype=float)
                r2 = float(x @ x)
                r = np.sqrt(r2)
                return np.array([[-x[1] / r2, x[0] / r2],
                                 [-x[0] / r, -x[1] / r]])

            return jac
    else:
        def jac_factory(xi):
            xi = np.asarray(xi, dtype=float)
            basis = np.linalg.svd(xi[None, :])[2][1:]

            def jac(x):
                x = np.asarray(x, dtype=float)
                r = float(np.linalg.norm(x))
                xh = x / r
                tang = basis @ (np.eye(dim) - np.outer(xh, xh)) / r
                return np.concatenate([tang, -xh[None, :]], axis=0)

            return jac

    box = np.array([[-1.25, 1.25]] * dim)
    return Domain(
        dimension=dim,
        signed_distance=sd,
        distance_gradient=grad,
        collar_width=0.8,
        diameter=2.0,
        ambient_box=box,
        name=name,
        boundary_samples=bsamples,
        boundary_param=bparam,
        chart_jacobian_factory=jac_factory,
    )


def disk() -> Domain:
    """Closed unit disk in the plane."""
    return _ball_domain(2, "disk")


def ball3d() -> Domain:
    """Closed unit ball in three dimensions."""
    return _ball_domain(3, "ball3d")


def interval() -> Domain:
    """Unit interval [0, 1] on the line; boundary is the two endpoints."""

    def sd(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.minimum(x, 1.0 - x)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.where(x[..., :1] <= 0.5, 1.0, -1.0) * np.ones_like(x)

    def bsamples(n, rng):
        half = max(1, n // 2)
        return np.concatenate(
            [np.zeros((half, 1)), np.ones((n - half, 1))], axis=0
        )

    def bparam(xi):
        def phi(y):
            y = np.asarray(y, dtype=float)
            return np.zeros(y.shape[:-1] + (0,))

        def phi_inv(a):
            a = np.asarray(a, dtype=float)
            out = np.broadcast_to(
                np.asarray(xi, dtype=float), a.shape[:-1] + (1,)
            )
            return np.array(out, copy=True)

        return phi, phi_inv

    def jac_factory(xi):
        def jac(x):
            return np.array(grad(np.asarray(x, dtype=float))[None, :], copy=True)

        return jac

    return Domain(
        dimension=1,
        signed_distance=sd,
        distance_gradient=grad,
        collar_width=0.4,
        diameter=1.0,
        ambient_box=np.array([[-0.25, 1.25]]),
        name="interval",
        boundary_samples=bsamples,
        boundary_param=bparam,
        chart_jacobian_factory=jac_factory,
    )


def rounded_box(half_widths=(1.0, 0.6), corner_radius: float = 0.3) -> Domain:
    """Axis-aligned planar box with circular corner fillets.

    The boundary is C^1 with curvature jumps at the fillet junctions, so the
    signed distance is exact but only C^{1,1} there; charts carry the finite
    sampled bound.
    """
    hx, hy = float(half_widths[0]), float(half_widths[1])
    rc = float(corner_radius)
    if not (0.0 < rc < min(hx, hy)):
        raise ValueError("corner radius must lie in (0, min half width)")
    ax, ay = hx - rc, hy - rc

    def outer_dist(x):
        x = np.asarray(x, dtype=float)
        q = np.abs(x) - np.array([ax, ay])
        pos = np.maximum(q, 0.0)
        return np.linalg.norm(pos, axis=-1) + np.minimum(
            np.maximum(q[..., 0], q[..., 1]), 0.0
        )

    def sd(x):
        return rc - outer_dist(x)

    def grad(x):
        x = np.asarray(x, dtype=float)
        q = np.abs(x) - np.array([ax, ay])
        pos = np.maximum(q, 0.0)
        nrm = np.linalg.norm(pos, axis=-1, keepdims=True)
        outside = nrm[..., 0] > 0.0
        axis0 = (q[..., 0] >= q[..., 1])[..., None]
        inward_axis = np.where(axis0, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        direction = np.where(
            outside[..., None], pos / np.maximum(nrm, 1e-300), inward_axis
        )
        sgn = np.where(x >= 0.0, 1.0, -1.0)
        return -sgn * direction

    # arc-length boundary parametrization, counter-clockwise from (hx, 0)
    seg_edge_x, seg_edge_y, seg_arc = 2.0 * ax, 2.0 * ay, 0.5 * np.pi * rc
    perimeter = 2.0 * seg_edge_x + 2.0 * seg_edge_y + 4.0 * seg_arc

    def point_at(s):
        s = np.mod(np.asarray(s, dtype=float), perimeter)
        pieces = np.array([
            seg_edge_y / 2.0, seg_arc, seg_edge_x, seg_arc, seg_edge_y,
            seg_arc, seg_edge_x, seg_arc, seg_edge_y / 2.0,
        ])
        starts = np.concatenate([[0.0], np.cumsum(pieces)])
        out = np.zeros(s.shape + (2,))
        for k in range(len(pieces)):
            m = (s >= starts[k]) & (s < starts[k + 1] + (1e-12 if k == len(pieces) - 1 else 0.0))
            t = s[m] - starts[k]
            if k == 0:
                out[m] = np.stack([np.full_like(t, hx), t], axis=-1)
            elif k == 8:
                out[m] = np.stack([np.full_like(t, hx), t - seg_edge_y / 2.0], axis=-1)
            elif k in (2, 6):
                sign = 1.0 if k == 2 else -1.0
                out[m] = np.stack([sign * (ax - t), np.full_like(t, sign * hy)], axis=-1)
            elif k == 4:
                out[m] = np.stack([np.full_like(t, -hx), ay - t], axis=-1)
            else:  # arcs
                corner = {1: (ax, ay), 3: (-ax, ay), 5: (-ax, -ay), 7: (ax, -ay)}[k]
                base = {1: 0.0, 3: 0.5 * np.pi, 5: np.pi, 7: 1.5 * np.pi}[k]
                ang = base + t / rc
                out[m] = np.stack(
                    [corner[0] + rc * np.cos(ang), corner[1] + rc * np.sin(ang)],
                    axis=-1,
                )
        return out

    def arclen_of(y):
        """Arc length of the nearest-feature foot of boundary points y."""
        y = np.asarray(y, dtype=float)
        qx = np.clip(y[..., 0], -ax, ax)
        qy = np.clip(y[..., 1], -ay, ay)
        on_right = np.abs(y[..., 0] - hx) < 1e-9
        on_left = np.abs(y[..., 0] + hx) < 1e-9
        on_top = np.abs(y[..., 1] - hy) < 1e-9
        on_bot = np.abs(y[..., 1] + hy) < 1e-9
        s = np.zeros(y.shape[:-1])
        # edges
        s = np.where(on_right, np.mod(qy, perimeter), s)
        s = np.where(on_top, seg_edge_y / 2.0 + seg_arc + (ax - qx), s)
        s = np.where(
            on_left,
            seg_edge_y / 2.0 + 2.0 * seg_arc + seg_edge_x + (ay - qy),
            s,
        )
        s = np.where(
            on_bot,
            seg_edge_y / 2.0 + 3.0 * seg_arc + seg_edge_x + seg_edge_y + (qx + ax),
            s,
        )
        corner_mask = ~(on_right | on_left | on_top | on_bot)
        if np.any(corner_mask):
            yc = y[corner_mask]
            cx, cy = np.sign(yc[..., 0]) * ax, np.sign(yc[..., 1]) * ay
            ang = np.arctan2(yc[..., 1] - cy, yc[..., 0] - cx) % (2.0 * np.pi)
            base_s = {
                (1, 1): seg_edge_y / 2.0,
                (-1, 1): seg_edge_y / 2.0 + seg_arc + seg_edge_x,
                (-1, -1): seg_edge_y / 2.0 + 2.0 * seg_arc + seg_edge_x + seg_edge_y,
                (1, -1): seg_edge_y / 2.0 + 3.0 * seg_arc + 2.0 * seg_edge_x + seg_edge_y,
            }
            base_a = {(1, 1): 0.0, (-1, 1): 0.5 * np.pi, (-1, -1): np.pi, (1, -1): 1.5 * np.pi}
            sc = np.zeros(len(yc))
            for key in base_s:
                km = (np.sign(yc[..., 0]) == key[0]) & (np.sign(yc[..., 1]) == key[1])
                rel = (ang[km] - base_a[key]) % (2.0 * np.pi)
                sc[km] = base_s[key] + rel * rc
            s[corner_mask] = sc
        return s

    def bsamples(n, rng):
        return point_at(np.linspace(0.0, perimeter, n, endpoint=False))

    def bparam(xi):
        s0 = float(arclen_of(np.asarray(xi, dtype=float)))

        def phi(y):
            s = arclen_of(y) - s0
            s = (s + perimeter / 2.0) % perimeter - perimeter / 2.0
            return s[..., None]

        def phi_inv(a):
            return point_at(s0 + np.asarray(a, dtype=float)[..., 0])

        return phi, phi_inv

    def jac_factory(xi):
        def jac(x):
            x = np.asarray(x, dtype=float)
            b = float(sd(x))
            g = np.asarray(grad(x), dtype=float)
            foot = x - b * g
            qf = np.abs(foot) - np.array([ax, ay])
            kappa = (1.0 / rc) if np.min(qf) > 1e-9 else 0.0
            out = -g
            tangent = np.array([-out[1], out[0]])
            return np.stack([tangent / (1.0 - b * kappa), g])

        return jac

    return Domain(
        dimension=2,
        signed_distance=sd,
        distance_gradient=grad,
        collar_width=0.8 * rc,
        diameter=2.0 * float(np.hypot(hx, hy)),
        ambient_box=np.array([[-hx - 0.25, hx + 0.25], [-hy - 0.25, hy + 0.25]]),
        name="roundedbox",
        boundary_samples=bsamples,
        boundary_param=bparam,
        chart_jacobian_factory=jac_factory,
    )


DOMAIN_PRESETS = {
    "disk": disk,
    "ball3d": ball3d,
    "interval": interval,
    "roundedbox": rounded_box,
}


def domain_preset(name: str) -> Domain:
    try:
        return DOMAIN_PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown domain preset '{name}'") from None
