import numpy as np
import pytest

from mfgcs import geometry as G
from mfgcs.errors import NotOnBoundary, OutOfChart, OutsideCollar


def test_disk_signed_distance_values(disk):
    assert G.signed_distance(disk, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    assert G.signed_distance(disk, [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert G.signed_distance(disk, [2.0, 0.0]) == pytest.approx(-1.0, abs=1e-12)


def test_distance_is_one_lipschitz_sampled(disk):
    rng = np.random.default_rng(0)
    a = rng.uniform(-1.2, 1.2, size=(500, 2))
    b = rng.uniform(-1.2, 1.2, size=(500, 2))
    lhs = np.abs(disk.signed_distance(a) - disk.signed_distance(b))
    assert np.all(lhs <= np.linalg.norm(a - b, axis=-1) + 1e-12)


def test_unit_gradient_in_collar(disk):
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, 2 * np.pi, 200)
    radii = rng.uniform(1 - disk.collar_width, 1.0, 200)
    pts = radii[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    h = 1e-5
    grad = np.stack([
        (disk.signed_distance(pts + h * e) - disk.signed_distance(pts - h * e)) / (2 * h)
        for e in np.eye(2)
    ], axis=-1)
    assert np.max(np.abs(np.linalg.norm(grad, axis=-1) - 1.0)) < 1e-6


def test_boundary_projection_examples(disk):
    assert G.boundary_projection(disk, [0.5, 0.0]) == pytest.approx([1.0, 0.0])
    assert G.boundary_projection(disk, [0.0, -0.9]) == pytest.approx([0.0, -1.0])
    with pytest.raises(OutsideCollar):
        G.boundary_projection(disk, [0.0, 0.0])


def test_projection_identities(disk):
    rng = np.random.default_rng(2)
    theta = rng.uniform(0, 2 * np.pi, 300)
    radii = rng.uniform(1 - 0.99 * disk.collar_width, 1.0, 300)
    pts = radii[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    proj = G.boundary_projection(disk, pts)
    again = G.boundary_projection(disk, proj)
    assert np.max(np.linalg.norm(again - proj, axis=-1)) < 1e-10
    n = disk.distance_gradient(proj)
    recon = proj + disk.signed_distance(pts)[:, None] * n
    assert np.max(np.linalg.norm(recon - pts, axis=-1)) < 1e-8


def test_inward_normal_examples(disk):
    assert G.inward_normal(disk, [1.0, 0.0]) == pytest.approx([-1.0, 0.0])
    assert G.inward_normal(disk, [0.0, 1.0]) == pytest.approx([0.0, -1.0])
    with pytest.raises(NotOnBoundary):
        G.inward_normal(disk, [0.5, 0.0])


def test_atlas_covering_and_size(disk, disk_atlas):
    assert len(disk_atlas.charts) >= 16
    rng = np.random.default_rng(3)
    pts = disk.boundary_samples(10_000, rng)
    centers = np.stack([c.center for c in disk_atlas.charts])
    dist = np.min(np.linalg.norm(pts[:, None] - centers[None], axis=-1), axis=1)
    assert np.max(dist) <= disk_atlas.r_hat


def test_chart_forward_example(disk_atlas):
    chart = disk_atlas.chart_for([1.0, 0.0])
    assert np.linalg.norm(chart.center - [1.0, 0.0]) < 1e-12
    y = G.chart_forward(chart, [0.9, 0.0])
    assert y == pytest.approx([0.0, 0.1], abs=1e-12)
    assert G.chart_inverse(chart, [0.0, 0.1]) == pytest.approx([0.9, 0.0])


def test_chart_center_maps_to_zero(disk_atlas):
    for chart in disk_atlas.charts:
        assert np.linalg.norm(chart.forward_raw(chart.center)) < 1e-9


def test_chart_round_trip_collar_samples(disk, disk_atlas):
    rng = np.random.default_rng(4)
    worst = 0.0
    worst_d = 0.0
    for _ in range(1000):
        chart = disk_atlas.charts[rng.integers(len(disk_atlas.charts))]
        g = disk.distance_gradient(chart.center)
        x = chart.center + rng.uniform(0, 2 * chart.r_hat) * g
        x = x + rng.uniform(-0.3, 0.3) * chart.r_hat * np.array([-g[1], g[0]])
        if np.linalg.norm(x - chart.center) > chart.domain_radius:
            continue
        y = chart.forward_raw(x)
        worst_d = max(worst_d, abs(y[-1] - float(disk.signed_distance(x))))
        worst = max(worst, float(np.linalg.norm(chart.inverse_raw(y) - x)))
    assert worst < 1e-8
    assert worst_d < 1e-8


def test_chart_jacobians_within_declared_bound(disk, disk_atlas):
    rng = np.random.default_rng(5)
    for chart in disk_atlas.charts[:6]:
        g = disk.distance_gradient(chart.center)
        for _ in range(20):
            x = chart.center + rng.uniform(0, 2 * chart.r_hat) * g
            J = chart.jacobian_raw(x)
            assert np.linalg.norm(J, 2) <= chart.deriv_bound


def test_chart_forward_out_of_range(disk_atlas):
    chart = disk_atlas.chart_for([1.0, 0.0])
    with pytest.raises(OutOfChart):
        G.chart_forward(chart, [-1.0, 0.0])


def test_build_atlas_radius_precondition(disk):
    with pytest.raises(ValueError):
        G.build_atlas(disk, disk.collar_width)


def test_snap_to_boundary(disk):
    x = np.array([[1.0 + 5e-13, 0.0]])
    snapped = G.snap_to_boundary(disk, x)
    assert disk.signed_distance(snapped)[0] >= -1e-15
    inside = np.array([[0.5, 0.0]])
    assert np.array_equal(G.snap_to_boundary(disk, inside), inside)


def test_interval_domain_and_charts(interval):
    assert G.signed_distance(interval, [[0.3]]) == pytest.approx([0.3])
    assert G.signed_distance(interval, [[0.9]]) == pytest.approx([0.1])
    atlas = G.build_atlas(interval, 0.1)
    assert len(atlas.charts) == 2
    chart = atlas.chart_for([0.05])
    y = chart.forward_raw(np.array([0.07]))
    assert y == pytest.approx([0.07])


def test_ball3d_atlas_covers(disk_atlas):
    ball = G.ball3d()
    atlas = G.build_atlas(ball, 0.2)
    rng = np.random.default_rng(6)
    pts = ball.boundary_samples(2000, rng)
    centers = np.stack([c.center for c in atlas.charts])
    dist = np.min(np.linalg.norm(pts[:, None] - centers[None], axis=-1), axis=1)
    assert np.max(dist) <= atlas.r_hat
    chart = atlas.charts[0]
    g = ball.distance_gradient(chart.center)
    x = chart.center + 0.15 * g
    y = chart.forward_raw(x)
    assert abs(y[-1] - float(ball.signed_distance(x))) < 1e-10
    assert np.linalg.norm(chart.inverse_raw(y) - x) < 1e-8


def test_rounded_box_distance_against_sampled_boundary():
    rb = G.rounded_box()
    rng = np.random.default_rng(7)
    boundary = rb.boundary_samples(200_000, rng)
    pts = rng.uniform(-1.1, 1.1, size=(50, 2))
    pts[:, 1] *= 0.7
    sd = rb.signed_distance(pts)
    brute = np.min(
        np.linalg.norm(pts[:, None, :] - boundary[None], axis=-1), axis=1
    )
    assert np.max(np.abs(np.abs(sd) - brute)) < 1e-4


def test_rounded_box_atlas_round_trip():
    rb = G.rounded_box()
    atlas = G.build_atlas(rb, rb.collar_width / 4.0)
    rng = np.random.default_rng(8)
    chart = atlas.charts[0]
    g = rb.distance_gradient(chart.center)
    for _ in range(50):
        x = chart.center + rng.uniform(0.0, 2 * chart.r_hat) * g
        y = chart.forward_raw(x)
        assert abs(y[-1] - float(rb.signed_distance(x))) < 1e-9
        assert np.linalg.norm(chart.inverse_raw(y) - x) < 1e-8
