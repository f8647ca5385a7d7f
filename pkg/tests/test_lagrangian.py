import numpy as np
import pytest

from mfgcs import lagrangian as L
from mfgcs.errors import NoConvergence
from mfgcs.measures import JointMeasure, wasserstein1


class TestLegendre:
    def test_self_dual_quadratic(self):
        model = L.quadratic(2)
        h, v = L.legendre_transform(model, 0.0, np.zeros(2), np.array([3.0, 4.0]))
        assert h == pytest.approx(12.5, abs=1e-10)
        assert v == pytest.approx([3.0, 4.0], abs=1e-10)

    def test_completed_square(self):
        model = L.shifted_quadratic(2, drift=[1.0, 0.0])
        h, v = L.legendre_transform(model, 0.0, np.zeros(2), np.array([0.0, 2.0]))
        assert h == pytest.approx(2.0, abs=1e-10)
        assert v == pytest.approx([1.0, 2.0], abs=1e-10)

    def test_diagonal_weights_against_grid_search(self):
        model = L.quadratic(2, weights=[1.0, 2.0])
        p = np.array([0.0, 2.0])
        h, v = L.legendre_transform(model, 0.0, np.zeros(2), p)
        assert h == pytest.approx(1.0, abs=1e-10)
        assert v == pytest.approx([0.0, 1.0], abs=1e-10)
        # independent oracle: per-axis grid search (the objective separates)
        best = 0.0
        for axis, weight in enumerate([1.0, 2.0]):
            grid = np.arange(-5.0, 5.0 + 1e-9, 1e-3)
            best += np.max(p[axis] * grid - 0.5 * weight * grid**2)
        assert abs(h - best) <= 1e-3

    def test_first_order_condition(self):
        model = L.quadratic_congestion(2, c1=0.01, amplitude=0.1)
        stats = np.array([0.05, -0.02])
        rng = np.random.default_rng(0)
        p = rng.standard_normal((50, 2))
        x = rng.standard_normal((50, 2)) * 0.3
        _, v = L.legendre_transform(model, 0.2, x, p, stats)
        residual = model.grad_v(0.2, x, v, stats) - p
        assert np.max(np.abs(residual)) < 1e-10

    def test_dp_examples(self):
        quad = L.quadratic(2)
        p = np.array([0.7, -0.3])
        assert L.dp_hamiltonian(quad, 0.0, np.zeros(2), p) == pytest.approx(p)
        shifted = L.shifted_quadratic(2, drift=[1.0, 0.0])
        assert L.dp_hamiltonian(shifted, 0.0, np.zeros(2), np.zeros(2)) == (
            pytest.approx([1.0, 0.0])
        )
        diag = L.quadratic(2, weights=[1.0, 2.0])
        assert L.dp_hamiltonian(diag, 0.0, np.zeros(2), np.array([0.0, 2.0])) == (
            pytest.approx([0.0, 1.0])
        )

    def test_linear_cost_has_no_conjugate(self):
        lin = L.LagrangianModel(
            name="linear", dimension=1, horizon=1.0, n1=2.0, c=2.0, k1=1.0,
            c1=0.0, kappa1=1.0,
            value=lambda t, x, v, s: np.sum(np.asarray(v), axis=-1),
            grad_x=lambda t, x, v, s: np.zeros_like(np.asarray(x, dtype=float)),
            grad_v=lambda t, x, v, s: np.ones_like(np.asarray(v, dtype=float)),
            hess_vv=lambda t, x, v, s: np.zeros(
                np.asarray(v, dtype=float).shape + (1,)
            ),
            hess_xv=lambda t, x, v, s: np.zeros(
                np.asarray(v, dtype=float).shape + (1,)
            ),
        )
        with pytest.raises(NoConvergence):
            L.legendre_transform(lin, 0.0, np.zeros(1), np.array([0.5]))


class TestFenchel:
    def test_inequality_and_equality(self, interval):
        model = L.quadratic_congestion(1, c1=0.01, amplitude=0.1)
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, size=(200, 1))
        p = rng.standard_normal((200, 1)) * 2
        v = rng.standard_normal((200, 1)) * 2
        stats = np.array([0.07])
        h, v_star = L.legendre_transform(model, 0.5, x, p, stats)
        gap = h + model.value(0.5, x, v, stats) - np.sum(p * v, axis=-1)
        assert np.min(gap) >= -1e-10
        eq = h + model.value(0.5, x, v_star, stats) - np.sum(p * v_star, axis=-1)
        assert np.max(np.abs(eq)) < 1e-8

    def test_conjugate_measure_lipschitz_transfer(self, interval):
        model = L.quadratic_congestion(1, c1=0.01, amplitude=0.1)
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(15):
            nu1 = L._random_joint(interval, rng, 4, 3.0)
            nu2 = L._random_joint(interval, rng, 3, 3.0)
            w1 = wasserstein1(nu1, nu2)
            if w1 < 1e-9:
                continue
            p = rng.standard_normal((5, 1))
            x = rng.uniform(0, 1, size=(5, 1))
            d1 = L.dp_hamiltonian(model, 0.1, x, p, model.stats_of(nu1))
            d2 = L.dp_hamiltonian(model, 0.1, x, p, model.stats_of(nu2))
            worst = max(worst, float(np.max(np.linalg.norm(d1 - d2, axis=-1)))
                        / (model.c1 * model.c * w1))
        assert worst <= 1.0 + 1e-9


class TestHypotheses:
    def test_congestion_model_passes(self, interval):
        model = L.quadratic_congestion(1, c1=0.01, amplitude=0.1)
        terminal = L.saturating_ramp(target=[1.2], direction=[-1.0])
        report = L.verify_hypotheses(model, terminal, interval, 1000)
        assert report.passed

    def test_linear_cost_fails_convexity(self, interval):
        lin = L.LagrangianModel(
            name="linear", dimension=1, horizon=1.0, n1=2.0, c=2.0, k1=1.0,
            c1=0.0, kappa1=1.0,
            value=lambda t, x, v, s: np.sum(np.asarray(v), axis=-1),
            grad_x=lambda t, x, v, s: np.zeros_like(np.asarray(x, dtype=float)),
            grad_v=lambda t, x, v, s: np.ones_like(np.asarray(v, dtype=float)),
            hess_vv=lambda t, x, v, s: np.zeros(
                np.asarray(v, dtype=float).shape + (1,)
            ),
            hess_xv=lambda t, x, v, s: np.zeros(
                np.asarray(v, dtype=float).shape + (1,)
            ),
        )
        terminal = L.zero_terminal(1)
        report = L.verify_hypotheses(lin, terminal, interval, 1000)
        assert not report.entries["velocity_hessian_bounds"]["passed"]

    def test_underdeclared_bound_fails(self, interval):
        def value(t, x, v, s):
            x = np.asarray(x, dtype=float)
            v = np.asarray(v, dtype=float)
            return 0.5 * np.sum(v * v, axis=-1) + np.sin(x[..., 0])

        def grad_x(t, x, v, s):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            out[..., 0] = np.cos(x[..., 0])
            return out + np.zeros_like(np.asarray(v, dtype=float))

        def make(n1):
            return L.LagrangianModel(
                name="wavy", dimension=1, horizon=1.0, n1=n1, c=2.0, k1=1.0,
                c1=0.0, kappa1=1.0, value=value, grad_x=grad_x,
                grad_v=lambda t, x, v, s: np.asarray(v, dtype=float)
                + np.zeros_like(np.asarray(x, dtype=float)),
                hess_vv=lambda t, x, v, s: np.ones(
                    np.asarray(v, dtype=float).shape + (1,)
                ),
                hess_xv=lambda t, x, v, s: np.zeros(
                    np.asarray(v, dtype=float).shape + (1,)
                ),
            )

        terminal = L.zero_terminal(1)
        ok = L.verify_hypotheses(make(1.5), terminal, interval, 1000)
        assert ok.entries["zero_velocity_bound"]["passed"]
        # halving the declared bound puts it below the true supremum
        bad = L.verify_hypotheses(make(0.75), terminal, interval, 1000)
        assert not bad.entries["zero_velocity_bound"]["passed"]


class TestDerivedBounds:
    def test_explicit_formulas(self, interval, frozen_setup):
        model, terminal, view = frozen_setup
        cc_n1, ck1_n1, cc_n2, ck2_n2 = L.derived_derivative_bounds(model, view)
        assert cc_n1 == pytest.approx(3.0)
        assert ck1_n1 == pytest.approx(2.5)
        assert cc_n2 >= model.c

    def test_sampled_gradients_respect_bound(self, interval, frozen_setup):
        model, _, _ = frozen_setup
        rng = np.random.default_rng(3)
        v = rng.standard_normal((500, 1)) * 4
        x = rng.uniform(0, 1, size=(500, 1))
        g = np.linalg.norm(model.grad_v(0.3, x, v, model.reference_stats),
                           axis=-1)
        bound = (model.n1 + model.c) * (1 + np.linalg.norm(v, axis=-1))
        assert np.all(g <= bound)

    def test_hamiltonian_view_constants(self, interval, frozen_setup):
        model, _, view = frozen_setup
        assert view.c2 == pytest.approx(model.c1 * model.c)
        assert view.n2 >= 0 and view.k2 >= 0
        # conjugate Hessian bounds via finite differences of the maximizer
        rng = np.random.default_rng(4)
        p = rng.standard_normal((50, 1))
        x = rng.uniform(0, 1, size=(50, 1))
        h = 1e-5
        dv = (L.dp_hamiltonian(model, 0.1, x, p + h) -
              L.dp_hamiltonian(model, 0.1, x, p - h)) / (2 * h)
        assert np.all(dv >= 1.0 / model.c - 1e-6)
        assert np.all(dv <= model.c + 1e-6)


def test_ramp_shape():
    s = np.linspace(-3, 3, 2001)
    f = L._ramp(s)
    df = L._ramp_deriv(s)
    assert np.max(np.abs(f)) <= 1.0
    assert np.max(np.abs(df)) <= 1.0
    band = np.abs(s) <= 0.5
    assert np.all(df[band] == 1.0)
    fd = np.gradient(f, s)
    assert np.max(np.abs(fd - df)) < 5e-3
