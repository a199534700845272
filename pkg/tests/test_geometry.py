import numpy as np
import pytest
from numpy.testing import assert_allclose

from stokespec import (
    BumpVariation,
    DomainError,
    InputError,
    Surface,
    bump_tangential_gradient,
    bump_value,
    chart_at,
    chart_polar_rule,
    cutoff,
    gaussian,
    normal_inner_product,
    real_harmonic,
)
from stokespec.geometry import _harmonic_polynomial, bump_breakpoints, chart_jacobian, cutoff_derivative


def test_sphere_area(unit_sphere):
    assert unit_sphere.area == pytest.approx(4 * np.pi, rel=1e-12)


def test_sphere_normals(unit_sphere):
    nodes, normals, _ = unit_sphere.panelization
    assert_allclose(normals, nodes, atol=1e-14)
    assert np.all(unit_sphere.on_surface(nodes))


def test_star_surface():
    star = Surface.star({(2, 0): 0.2, (1, 1): 0.1})
    nodes, normals, weights = star.panelization
    assert np.all(star.on_surface(nodes))
    assert_allclose(np.linalg.norm(normals, axis=-1), 1.0, rtol=1e-14)
    # outward: positive overlap with the radial direction
    assert np.all(np.sum(normals * nodes, axis=-1) > 0)
    assert np.all(weights > 0)


def test_invalid_surfaces():
    with pytest.raises(InputError):
        Surface("torus")
    with pytest.raises(DomainError):
        Surface.sphere(-1.0)
    with pytest.raises(DomainError):
        Surface.star({(0, 0): -5.0})
    with pytest.raises(DomainError):
        Surface.flat().panelization


def test_circle():
    circle = Surface.circle(1.0, 128)
    assert circle.dimension == 2
    assert circle.area == pytest.approx(2 * np.pi)


def test_sphere_chart(unit_sphere):
    x = np.array([0.0, 0.6, 0.8])
    chart = chart_at(unit_sphere, x)
    assert_allclose(chart.point(np.zeros(2)), x)
    eta = np.array([[0.1, 0.05], [-0.2, 0.3]])
    points = chart.point(eta)
    assert np.all(unit_sphere.on_surface(points))
    back, valid = chart.project(points)
    assert np.all(valid)
    assert_allclose(back, eta, atol=1e-14)
    assert_allclose(chart.curvature, np.eye(2))


def test_star_chart_height():
    star = Surface.star({(2, 0): 0.1})
    x = star.point(np.array([1.0, 0.0, 0.0]))
    chart = chart_at(star, x)
    points = chart.point(np.array([[0.05, -0.1], [0.2, 0.1]]))
    assert np.all(star.on_surface(points))
    assert chart.height(np.zeros(2)) == pytest.approx(0.0, abs=1e-14)


def test_normal_inner_product(unit_sphere):
    chart = chart_at(unit_sphere, np.array([0.0, 0.0, 1.0]))
    assert normal_inner_product(chart, np.zeros(2)) == pytest.approx(1.0)
    eta = np.array([0.3, 0.4])
    # on the unit sphere <n_x, n_y> = sqrt(1 - |eta|^2)
    assert normal_inner_product(chart, eta) == pytest.approx(np.sqrt(0.75), rel=1e-12)
    assert chart_jacobian(chart, eta) == pytest.approx(1 / np.sqrt(0.75), rel=1e-12)
    with pytest.raises(DomainError):
        normal_inner_product(chart, np.array([0.7, 0.0]))


def test_chart_needs_a_surface_point(unit_sphere):
    with pytest.raises(DomainError):
        chart_at(unit_sphere, np.array([0.0, 0.0, 1.1]))


def test_cutoff():
    delta = 0.3
    rho = np.array([0.0, 0.4, 0.45, 0.5, 0.6, 0.7])
    values = cutoff(rho, delta)
    assert_allclose(values[:3], 1.0)
    assert np.all(values[-2:] == 0.0)
    assert 0 < values[3] < 1
    h = 1e-6
    assert cutoff_derivative(0.52, delta) == pytest.approx(
        (cutoff(0.52 + h, delta) - cutoff(0.52 - h, delta)) / (2 * h), rel=1e-5
    )


@pytest.mark.parametrize("r0bar", [0.0, 0.5, 1.0])
def test_gaussian_mass(r0bar):
    eps = 0.05
    eta0 = eps * r0bar * np.array([np.cos(1.0), np.sin(1.0)])
    eta, w = chart_polar_rule(eta0, bump_breakpoints(eps, 10 * eps), 24, 64)
    assert np.sum(w * gaussian(eta, eta0, eps)) == pytest.approx(np.pi, rel=1e-12)


def test_bump_variation(unit_sphere):
    chart = chart_at(unit_sphere, np.array([0.0, 0.0, 1.0]))
    bump = BumpVariation.from_polar(chart, 0.05, 0.5, np.pi / 3)
    assert bump.r0bar == pytest.approx(0.5)
    assert bump.theta0 == pytest.approx(np.pi / 3)
    assert_allclose(bump_value(bump, bump.peak), 1 / 0.05**2)
    # the gradient vanishes at the peak and is tangential everywhere
    assert_allclose(bump_tangential_gradient(bump, bump.peak), 0.0, atol=1e-9)
    y = chart.point(np.array([[0.04, 0.01], [-0.02, 0.03]]))
    grad = bump_tangential_gradient(bump, y)
    assert_allclose(np.sum(grad * unit_sphere.normal_at(y), axis=-1), 0.0, atol=1e-10)
    # the far side of the sphere is outside the support
    assert bump_value(bump, np.array([0.0, 0.0, -1.0])) == 0.0


def test_bump_offsets():
    chart = chart_at(Surface.flat(), np.zeros(3))
    with pytest.raises(DomainError):
        BumpVariation(chart, np.array([0.2, 0.0]), 0.1)
    with pytest.raises(DomainError):
        BumpVariation.from_polar(chart, 0.1, 1.5, 0.0)
    with pytest.raises(DomainError):
        BumpVariation(chart, np.zeros(2), 0.0)


@pytest.mark.parametrize("harmonics", [{}, {(2, 0): 0.1, (1, -1): 0.05}])
def test_chart_height_is_quadratic_to_third_order(harmonics):
    surface = Surface.star(harmonics) if harmonics else Surface.sphere(1.0)
    x = surface.point(np.array([0.48, 0.36, 0.8]))
    chart = chart_at(surface, x)
    direction = np.array([0.6, 0.8])
    sizes = np.array([0.1, 0.05, 0.025, 0.0125])
    remainders = []
    for t in sizes:
        eta = t * direction
        remainders.append(abs(chart.height(eta) - 0.5 * eta @ chart.curvature @ eta))
    slope = np.polyfit(np.log(sizes), np.log(remainders), 1)[0]
    assert slope >= 2.9


def test_real_harmonics_match_the_polynomial_tables(rng):
    w = rng.normal(size=(50, 3))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    for l in range(3):
        for m in range(-l, l + 1):
            c, a, A = _harmonic_polynomial(l, m)
            expected = c + w @ a + np.einsum("mi,ij,mj->m", w, A, w)
            assert_allclose(real_harmonic(l, m, w), expected, atol=1e-13)


def test_real_harmonics_are_orthonormal(unit_sphere):
    nodes, _, weights = unit_sphere.panelization
    keys = [(l, m) for l in (3, 4) for m in range(-l, l + 1)]
    values = np.array([real_harmonic(l, m, nodes) for l, m in keys])
    gram = np.einsum("am,bm,m->ab", values, values, weights)
    assert_allclose(gram, np.eye(len(keys)), atol=1e-12)


def test_star_surface_with_higher_harmonics(rng):
    star = Surface.star({(3, 2): 0.1, (4, -1): 0.05, (2, 0): 0.1}, resolution=(16, 32))
    nodes, normals, weights = star.panelization
    assert np.all(star.on_surface(nodes))
    assert_allclose(np.linalg.norm(normals, axis=-1), 1.0, rtol=1e-14)
    assert np.all(np.sum(normals * nodes, axis=-1) > 0)

    w = rng.normal(size=(20, 3))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    tangent = np.cross(w, np.array([0.3, -0.2, 0.9]))
    tangent /= np.linalg.norm(tangent, axis=-1, keepdims=True)
    h = 1e-4
    chord = star.point(w + h * tangent) - star.point(w - h * tangent)
    n = star.normal_at(star.point(w))
    overlap = np.sum(n * chord, axis=-1) / np.linalg.norm(chord, axis=-1)
    assert np.max(np.abs(overlap)) <= 1e-6


def test_harmonic_degree_and_order():
    with pytest.raises(InputError):
        Surface.star({(1, 3): 0.1})
    with pytest.raises(InputError):
        Surface.star({(-1, 0): 0.1})
