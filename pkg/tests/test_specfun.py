import numpy as np
import pytest
from numpy.testing import assert_allclose

from stokespec import (
    DomainError,
    InputError,
    combination_series,
    cross_validation,
    entire_series,
    gamma_half_integer_check,
    identity_suite,
    m_generic,
    m_quadrature,
    m_series,
    wallis,
)
from stokespec.specfun import M_TAGS, combination_from_members, wallis_quadrature

Z_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def test_anchored_values():
    assert m_series("M3A1", 0.0) == pytest.approx(np.pi**1.5, rel=1e-12)
    assert m_series("M1A1", 0.0) == pytest.approx(np.pi**1.5 / 2, rel=1e-12)
    assert m_series("M4A1", 0.0) == pytest.approx(-0.75 * np.pi**1.5, rel=1e-12)


@pytest.mark.parametrize("tag", M_TAGS)
def test_series_against_quadrature(tag):
    for z in Z_GRID:
        series = m_series(tag, z)
        assert abs(series - m_quadrature(tag, z)) <= 1e-8 * max(abs(series), 1.0)


@pytest.mark.parametrize("tag", ["C1", "C2"])
def test_combinations_against_quadrature(tag):
    for z in Z_GRID:
        series = m_series(tag, z)
        assert abs(series - m_quadrature(tag, z)) <= 1e-8 * max(abs(series), 1.0)


@pytest.mark.parametrize("tag", ["C1", "C2"])
def test_combination_coefficients_match_members(tag):
    closed = combination_series(tag).coefficients[:6]
    members = combination_from_members(tag)[:6]
    assert_allclose(closed, members, rtol=1e-9, atol=1e-12 * np.max(np.abs(members)))


@pytest.mark.parametrize("z", [0.0, 0.3, 0.7, 1.0])
def test_m5_is_m1_plus_m2(z):
    assert m_series("M5A1", z) == pytest.approx(m_series("M1A1", z) + m_series("M2A1", z), abs=1e-10)


@pytest.mark.parametrize("z", [0.0, 0.3, 0.7, 1.0])
def test_m4_relation(z):
    m1, m2, m3, m4 = (m_series(tag, z) for tag in ("M1A1", "M2A1", "M3A1", "M4A1"))
    assert z * z * m4 == pytest.approx(m1 - z * z * m3 - m2, abs=1e-10)


def test_identity_suite_passes():
    report = identity_suite()
    assert report.passed, report.failures()


def test_cross_validation_rows():
    rows = cross_validation(Z_GRID)
    assert len(rows) == len(M_TAGS) * len(Z_GRID)
    assert {row.tag for row in rows} == set(M_TAGS)


@pytest.mark.parametrize("tag", ["M9", "M10"])
def test_odd_members(tag):
    assert m_series(tag, -0.4) == pytest.approx(-m_series(tag, 0.4), rel=1e-14)
    assert m_series(tag, 0.0) == 0.0


def test_generic_member_matches_named():
    # M7 = M[2, 2], M5 = M[0, 0]
    assert m_generic(2, 2, 0.6) == pytest.approx(m_series("M7", 0.6), rel=1e-14)
    assert m_generic(0, 0, 0.6) == pytest.approx(m_series("M5A1", 0.6), rel=1e-14)


def test_generic_member_rejects_negative_powers():
    with pytest.raises(DomainError):
        m_generic(-1, 0, 0.5)


@pytest.mark.parametrize("k", range(9))
def test_wallis(k):
    assert wallis(k) == pytest.approx(wallis_quadrature(k), abs=1e-13)


def test_wallis_rejects_negative_index():
    with pytest.raises(DomainError):
        wallis(-1)


def test_gamma_half_integers():
    assert gamma_half_integer_check() <= 1e-14


def test_series_tail_is_small():
    series = entire_series("M7")
    assert series.tail_bound(1.0) < 1e-15 * abs(series(1.0))


def test_unknown_tag():
    with pytest.raises(InputError):
        m_series("M11", 0.5)
    with pytest.raises(InputError):
        combination_series("M7")
