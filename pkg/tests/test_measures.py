import numpy as np
import pytest

from mfgcs import measures as M
from mfgcs.errors import SizeLimit


def make_path_measure(starts, velocities, weights, horizon=1.0, nodes=50):
    times = np.linspace(0.0, horizon, nodes + 1)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    states = starts[:, None, :] + times[None, :, None] * velocities[:, None, :]
    controls = np.broadcast_to(velocities[:, None, :], states.shape).copy()
    return M.PathMeasure(times=times, states=states, controls=controls,
                         weights=weights)


class TestWasserstein:
    def test_identical_measures(self):
        mu = M.StateMeasure(points=[[0.0], [1.0]], weights=[0.5, 0.5])
        assert M.wasserstein1(mu, mu) == pytest.approx(0.0, abs=1e-12)

    def test_joint_diracs_sum_metric(self):
        nu1 = M.JointMeasure(points=[[0.0, 0.0]], velocities=[[0.0, 0.0]],
                             weights=[1.0])
        nu2 = M.JointMeasure(points=[[1.0, 0.0]], velocities=[[1.0, 0.0]],
                             weights=[1.0])
        assert M.wasserstein1(nu1, nu2) == pytest.approx(2.0, abs=1e-12)

    def test_split_mass_on_line(self):
        mu1 = M.StateMeasure(points=[[0.0], [1.0]], weights=[0.5, 0.5])
        mu2 = M.StateMeasure(points=[[0.5]], weights=[1.0])
        value = M.wasserstein1(mu1, mu2)
        # the 2x1 coupling polytope is a single point: both atoms send
        # half their mass over distance 1/2
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_certificate_sandwich(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n, m = rng.integers(2, 50, size=2)
            mu1 = M.StateMeasure(points=rng.standard_normal((n, 3)),
                                 weights=np.full(n, 1.0 / n))
            mu2 = M.StateMeasure(points=rng.standard_normal((m, 3)),
                                 weights=np.full(m, 1.0 / m))
            cert = M.wasserstein1(mu1, mu2, return_certificate=True)
            assert cert.primal_upper >= cert.value - 1e-12
            assert cert.dual_lower <= cert.value + 1e-12
            assert cert.gap <= 1e-9
            assert np.all(cert.coupling >= -1e-12)
            assert cert.coupling.sum(axis=1) == pytest.approx(mu1.weights,
                                                              abs=1e-9)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            mus = []
            for _ in range(3):
                k = int(rng.integers(2, 30))
                mus.append(M.StateMeasure(points=rng.standard_normal((k, 2)),
                                          weights=np.full(k, 1.0 / k)))
            dab = M.wasserstein1(mus[0], mus[1])
            dbc = M.wasserstein1(mus[1], mus[2])
            dac = M.wasserstein1(mus[0], mus[2])
            assert dac <= dab + dbc + 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        mu1 = M.StateMeasure(points=rng.standard_normal((7, 2)),
                             weights=np.full(7, 1 / 7))
        mu2 = M.StateMeasure(points=rng.standard_normal((5, 2)),
                             weights=np.full(5, 1 / 5))
        assert M.wasserstein1(mu1, mu2) == pytest.approx(
            M.wasserstein1(mu2, mu1), abs=1e-10
        )

    def test_greedy_is_upper_bound(self):
        rng = np.random.default_rng(3)
        mu1 = M.StateMeasure(points=rng.standard_normal((12, 2)),
                             weights=np.full(12, 1 / 12))
        mu2 = M.StateMeasure(points=rng.standard_normal((9, 2)),
                             weights=np.full(9, 1 / 9))
        exact = M.wasserstein1(mu1, mu2)
        greedy = M.wasserstein1(mu1, mu2, backend="greedy")
        assert greedy >= exact - 1e-12

    def test_size_limit(self):
        big = M.StateMeasure(points=np.zeros((11_000, 1)),
                             weights=np.full(11_000, 1 / 11_000))
        other = M.StateMeasure(points=np.zeros((1001, 1)),
                               weights=np.full(1001, 1 / 1001))
        with pytest.raises(SizeLimit):
            M.wasserstein1(big, other)


class TestPathMeasure:
    def test_push_forward_single_particle(self):
        eta = make_path_measure([[0.0, 0.0]], [[1.0, 0.0]], [1.0])
        nu = M.push_forward_at_time(eta, 0.5)
        np.testing.assert_allclose(nu.points, [[0.5, 0.0]], atol=1e-12)
        np.testing.assert_allclose(nu.velocities, [[1.0, 0.0]], atol=1e-12)

    def test_push_forward_at_zero_matches_initial(self):
        eta = make_path_measure([[0.1], [0.4], [0.4]], [[1.0], [0.0], [0.5]],
                                [0.25, 0.5, 0.25])
        nu = M.push_forward_at_time(eta, 0.0)
        np.testing.assert_allclose(nu.points, eta.initial_points(), atol=1e-12)
        init = eta.initial_distribution()
        assert sorted(init.weights) == pytest.approx([0.25, 0.75])

    def test_equal_weight_atoms(self):
        eta = make_path_measure([[0.0], [1.0]], [[0.1], [-0.1]], [0.5, 0.5])
        nu = M.push_forward_at_time(eta, 0.3)
        assert nu.weights == pytest.approx([0.5, 0.5])
        sigma = M.state_marginal(nu)
        assert sigma.points.shape == (2, 1)
        assert sigma.weights == pytest.approx(nu.weights)

    def test_disintegrate_counting(self):
        eta = make_path_measure([[0.2], [0.2], [0.7]],
                                [[1.0], [-1.0], [0.0]],
                                [1 / 3, 1 / 3, 1 / 3])
        parts = M.disintegrate_by_initial(eta)
        masses = {k[0]: v[0] for k, v in parts.items()}
        assert masses[0.2] == pytest.approx(2 / 3)
        assert masses[0.7] == pytest.approx(1 / 3)
        cond = dict(parts)[(0.2,)][1]
        assert cond.weights == pytest.approx([0.5, 0.5])

    def test_disintegrate_single(self):
        eta = make_path_measure([[0.3]], [[0.5]], [1.0])
        parts = M.disintegrate_by_initial(eta)
        assert len(parts) == 1
        (mass, cond), = parts.values()
        assert mass == pytest.approx(1.0)
        assert cond.num_particles == 1

    def test_disintegrate_reconstruction(self):
        eta = make_path_measure([[0.2], [0.2], [0.7], [0.9]],
                                [[1.0], [-1.0], [0.0], [0.2]],
                                [0.1, 0.3, 0.2, 0.4])
        parts = M.disintegrate_by_initial(eta)
        pieces, alphas = [], []
        for mass, cond in parts.values():
            pieces.append(cond)
            alphas.append(mass)
        rebuilt, pruned = M.mix(pieces, alphas)
        assert pruned == 0.0
        order_a = np.lexsort((eta.controls[:, 0, 0], eta.states[:, 0, 0]))
        order_b = np.lexsort((rebuilt.controls[:, 0, 0], rebuilt.states[:, 0, 0]))
        np.testing.assert_allclose(rebuilt.states[order_b], eta.states[order_a])
        np.testing.assert_allclose(rebuilt.weights[order_b], eta.weights[order_a])

    def test_mix_commutes_with_push_forward(self):
        eta1 = make_path_measure([[0.1]], [[0.3]], [1.0])
        eta2 = make_path_measure([[0.5]], [[-0.2]], [1.0])
        mixed, _ = M.mix([eta1, eta2], [0.25, 0.75])
        nu = M.push_forward_at_time(mixed, 0.4)
        assert sorted(nu.weights) == pytest.approx([0.25, 0.75])
        pts = sorted(float(p) for p in nu.points[:, 0])
        assert pts == pytest.approx([0.1 + 0.12, 0.5 - 0.08])

    def test_one_particle_move_dominated_by_path_distance(self):
        eta1 = make_path_measure([[0.1], [0.5]], [[0.3], [-0.2]], [0.5, 0.5])
        eta2 = make_path_measure([[0.1], [0.55]], [[0.3], [-0.2]], [0.5, 0.5])
        # the moved particle is 0.05 away in the path metric, with weight 1/2
        for t in (0.0, 0.4, 1.0):
            w1 = M.wasserstein1(M.push_forward_at_time(eta1, t),
                                M.push_forward_at_time(eta2, t))
            assert w1 <= 0.5 * 0.05 + 1e-10

    def test_flow_lipschitz_examples(self):
        eta = make_path_measure([[0.0]], [[0.8]], [1.0])
        report = M.flow_lipschitz_check(eta, (0.8, 1.0))
        assert report["passed"]
        assert report["worst_ratio"] <= 0.8 / 1.8 + 1e-9

        static = make_path_measure([[0.3]], [[0.0]], [1.0])
        report = M.flow_lipschitz_check(static, (1.0, 1.0))
        assert report["passed"]
        assert report["worst_ratio"] == pytest.approx(0.0, abs=1e-12)

    def test_flow_lipschitz_saturating(self):
        # speed at the cap and slope at the cap: ratio stays at or below 1
        times = np.linspace(0.0, 1.0, 101)
        u = np.clip(1.0 - times, 0.0, 1.0)[None, :, None]
        x = np.cumsum(np.concatenate([[0.0], 0.005 * (u[0, 1:, 0] + u[0, :-1, 0])]))
        eta = M.PathMeasure(times=times, states=x[None, :, None], controls=u,
                            weights=[1.0])
        report = M.flow_lipschitz_check(eta, (1.0, 1.0))
        assert report["passed"]
        assert report["worst_ratio"] <= 1.0 + 1e-9

    def test_interpolate_out_of_range(self):
        eta = make_path_measure([[0.0]], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            eta.interpolate(2.0)

    def test_mix_grid_mismatch(self):
        eta1 = make_path_measure([[0.0]], [[1.0]], [1.0], nodes=50)
        eta2 = make_path_measure([[0.0]], [[1.0]], [1.0], nodes=60)
        with pytest.raises(ValueError):
            M.mix([eta1, eta2], [0.5, 0.5])
