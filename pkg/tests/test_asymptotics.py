import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stokespec import (
    AffineField,
    ConstantField,
    FitError,
    InputError,
    Surface,
    a_terms_sweep,
    final_identity_check,
    flat_patch_sweep,
    gaussian_moment_bound,
    gaussian_principal_value,
    m_series,
    predicted_leading,
    remainder_sweep,
    second_order_quadrature,
    second_order_terms,
)

F = np.array([[0.7, 0.2], [0.2, -0.4]])
EPS = [0.1, 0.05, 0.025]


def test_predicted_leading_at_the_centre():
    assert_allclose(predicted_leading([0.0, 1.0], 0.0), [0.0, 3 * np.pi**1.5], rtol=1e-12)
    assert_allclose(predicted_leading([2.0, 0.0], 0.0, theta0=1.0), [6 * np.pi**1.5, 0.0], rtol=1e-12)


def test_predicted_leading_is_rotation_covariant():
    psi = np.array([0.3, -1.2])
    angle = 0.8
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    base = predicted_leading(psi, 0.6, 0.0)
    assert_allclose(predicted_leading(R @ psi, 0.6, angle), R @ base, rtol=1e-12)


def test_offsets_are_clipped(caplog):
    with caplog.at_level(logging.WARNING, logger="stokespec"):
        clipped = predicted_leading([0.0, 1.0], 1.5)
    assert_allclose(clipped, predicted_leading([0.0, 1.0], 1.0))
    assert "clipped" in caplog.text


@pytest.mark.slow
@pytest.mark.parametrize("r0bar", [0.0, 0.5])
def test_flat_patch_sweep(r0bar):
    sweep = flat_patch_sweep([0.0, 1.0], EPS, r0bar)
    assert np.linalg.norm(sweep.c3 - sweep.predicted) <= 0.05 * np.linalg.norm(sweep.predicted)
    assert sweep.exponent == pytest.approx(3.0, abs=0.1)
    assert sweep.stable
    assert len(sweep.rows()) == len(EPS)


def test_sweep_needs_decreasing_widths(flat):
    psi = ConstantField([0.0, 1.0, 0.0])
    with pytest.raises(InputError):
        a_terms_sweep(flat, np.zeros(3), psi, [0.1, 0.05])
    with pytest.raises(InputError):
        a_terms_sweep(flat, np.zeros(3), psi, [0.05, 0.1, 0.025])


def test_failed_fit_carries_the_sweep(flat, caplog):
    psi = ConstantField([0.0, 1.0, 0.5])
    with caplog.at_level(logging.WARNING, logger="stokespec"):
        with pytest.raises(FitError) as info:
            a_terms_sweep(flat, np.zeros(3), psi, EPS, fit_tol=-1.0)
    assert "normal component" in caplog.text
    assert len(info.value.data.measured) == len(EPS)


@pytest.mark.parametrize("r0bar, theta0", [(0.0, 0.0), (0.4, 0.3), (1.0, 2.0)])
@pytest.mark.parametrize("eps", [1.0, 0.2])
def test_second_order_closed_forms(r0bar, theta0, eps):
    psi = np.array([0.4, -0.9])
    closed = second_order_terms(F, 1.0, psi, r0bar, theta0, eps)
    quadrature = second_order_quadrature(F, psi, r0bar, theta0, eps)
    for name in ("a1", "a2", "a3"):
        exact = getattr(closed, name)
        assert_allclose(getattr(quadrature, name), exact, rtol=1e-6, atol=1e-10 * np.linalg.norm(exact))


@pytest.mark.parametrize("z", [0.0, 0.5, 1.0])
def test_constraint_is_the_normalized_tangential_response(z):
    terms = second_order_terms(F, 2.0, [0.0, 1.0], z)
    assert terms.constraint == pytest.approx(4 * np.pi * np.exp(z * z) * terms.leading[1], rel=1e-12)
    assert terms.alpha3 == pytest.approx(-m_series("M2A1", z), rel=1e-10)


def test_hessian_must_be_symmetric():
    with pytest.raises(InputError):
        second_order_terms([[1.0, 0.5], [0.0, 1.0]], 1.0, [0.0, 1.0], 0.5)
    with pytest.raises(InputError):
        second_order_quadrature(np.eye(3), [0.0, 1.0], 0.5)


def test_final_identity_without_curvature_terms():
    report = final_identity_check(np.zeros((2, 2)), 1.0)
    expected = [-0.5 * m_series("M2A1", z) for z in report.z]
    assert_allclose(report.displayed, expected, rtol=1e-10)
    assert_allclose(report.consistent, expected, rtol=1e-10)
    assert_allclose(report.remainder, expected, rtol=1e-10)
    assert report.coefficient_defect <= 1e-9
    assert report.odd_rank == 2
    assert report.forces_zero_hessian


@pytest.mark.parametrize("r0bar", [0.0, 0.5, 1.0])
def test_gaussian_principal_value(r0bar):
    value = gaussian_principal_value(0.1, r0bar, theta0=0.7)
    scale = max(np.linalg.norm(value.closed), 1.0)
    assert_allclose(value.quadrature, value.closed, atol=1e-6 * scale)


def test_gaussian_moment_is_bounded():
    values = [gaussian_moment_bound(0, eps) for eps in (0.05, 0.02, 0.01)]
    assert_allclose(values, np.pi**1.5, rtol=1e-6)
    with pytest.raises(InputError):
        gaussian_moment_bound(-1, 0.1)


@pytest.mark.slow
def test_remainder_sweep_on_the_sphere():
    sphere = Surface.sphere(1.0, (8, 16))
    rotation = AffineField(np.cross(np.eye(3), [0.0, 0.0, 1.0]).T)
    x = np.array([0.0, 0.6, 0.8])
    sweep = remainder_sweep(
        sphere, 1.0, rotation, x, [0.2, 0.15], n_s=4, n_phi=8, inner_n_s=4, inner_n_phi=16
    )
    assert sweep.projected.shape == (2, 4, 2)
    assert sweep.scaled.shape == (2, 4)
    assert np.all(np.isfinite(sweep.scaled))
