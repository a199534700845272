"""
Entire functions of the Gaussian-bump asymptotics.

Most of them are members of one family,

    M[s, k](z) = int_0^inf e^{-r^2} r^s dr int_0^{2pi} cos^k(t) exp(2 r z cos t) dt,

whose Taylor coefficients are 2^{n+1}/n! I_{n+k} Gamma((n+s+1)/2) for n+k even
(I_k being the Wallis integral). Every function here can be evaluated twice:
by its power series and by adaptive quadrature of the defining integral.
"""

from __future__ import annotations

import functools
import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from numpy.polynomial import polynomial
from scipy.integrate import quad
from scipy.special import gamma, gammaln

from ._constants import R_CUT, SERIES_ORDER, _m_members, _odd_tags
from .exceptions import AccuracyError, DomainError, InputError

logger = logging.getLogger("stokespec")

CrossCheck = namedtuple("CrossCheck", ["tag", "z", "series", "quadrature", "abs_diff"])
IdentityCheck = namedtuple("IdentityCheck", ["name", "z", "residual", "tolerance", "passed"])

M_TAGS = ("M1A1", "M2A1", "M3A1", "M4A1", "M5A1", "M6", "M7", "M8", "M9", "M10")
COMBINATION_TAGS = ("C1", "C2")

# coefficient tags: C1 = 2M7 - M8 - M10 - M1A1,  C2 = 2M6 - 3M7 + M8 + M10 - M9 - 2M5A1 + 2M1A1
_combinations: dict[str, dict[str, int]] = {
    "C1": {"M7": 2, "M8": -1, "M10": -1, "M1A1": -1},
    "C2": {"M6": 2, "M7": -3, "M8": 1, "M10": 1, "M9": -1, "M5A1": -2, "M1A1": 2},
}


def _log_wallis(k):
    k = np.asarray(k, dtype=float)
    return 0.5 * np.log(np.pi) - np.log(2.0) + gammaln((k + 1) / 2) - gammaln(k / 2 + 1)


def wallis(k: int) -> float:
    """I_k = int_0^{pi/2} cos^k(t) dt."""
    if k < 0:
        raise DomainError(f"Wallis index must be nonnegative, got {k!r}")
    return float(np.exp(_log_wallis(k)))


def wallis_quadrature(k: int) -> float:
    if k < 0:
        raise DomainError(f"Wallis index must be nonnegative, got {k!r}")
    return quad(lambda t: np.cos(t) ** k, 0, np.pi / 2, epsabs=1e-15, epsrel=1e-14)[0]


def gamma_half_integer_check(count: int = 20) -> float:
    """Largest relative defect of Gamma(z+1) = z Gamma(z) on z = 1/2, 3/2, ..."""
    z = np.arange(count) + 0.5
    return float(np.max(np.abs(gamma(z + 1) - z * gamma(z)) / gamma(z + 1)))


def _member_coefficients(s: int, k: int, order: int) -> np.ndarray:
    n = np.arange(order + 1)
    coefficients = np.zeros(order + 1)
    even = (n + k) % 2 == 0
    ne = n[even]
    coefficients[even] = np.exp(
        (ne + 1) * np.log(2.0) - gammaln(ne + 1) + _log_wallis(ne + k) + gammaln((ne + s + 1) / 2)
    )
    return coefficients


def _m2_coefficients(order: int) -> np.ndarray:
    # sin^2 weight: I_n - I_{n+2} = I_n / (n + 2)
    n = np.arange(0, order + 1, 2)
    coefficients = np.zeros(order + 1)
    coefficients[n] = np.exp(
        (n + 1) * np.log(2.0) - gammaln(n + 1) + _log_wallis(n) - np.log(n + 2) + gammaln((n + 1) / 2)
    )
    return coefficients


def _m3_coefficients(order: int) -> np.ndarray:
    # M[-1, 1](z) / z
    return _member_coefficients(-1, 1, order + 1)[1:]


def _m4_coefficients(order: int) -> np.ndarray:
    p = np.arange(order // 2 + 1)
    coefficients = np.zeros(order + 1)
    coefficients[2 * p] = -np.exp(
        np.log(1.5 * np.pi) + np.log(p + 1) + gammaln(p + 0.5) - np.log(p + 2) - 2 * gammaln(p + 2)
    )
    return coefficients


def _combination_coefficients(tag: str, order: int) -> np.ndarray:
    n = np.arange(order + 1)
    coefficients = np.zeros(order + 1)
    p = n[0::2] // 2
    q = n[1::2] // 2
    even = (2 * p + 1) * np.log(2.0) - gammaln(2 * p + 1) + gammaln(p + 0.5)
    odd = (2 * q + 2) * np.log(2.0) - gammaln(2 * q + 2) + gammaln(q + 1.5)

    if tag == "C1":
        coefficients[0::2] = (
            np.exp(even + _log_wallis(2 * p + 2)) * (2 * p**2 + 4 * p - 1.5) / (2 * p + 4)
        )
        coefficients[1::2] = -np.exp(odd + _log_wallis(2 * q + 4))
    else:
        coefficients[0::2] = (
            np.exp(even + _log_wallis(2 * p))
            * (2 * p**2 + 4 * p - 4.5)
            / ((2 * p + 2) * (2 * p + 4))
        )
        coefficients[1::2] = -np.exp(odd + _log_wallis(2 * q + 2)) / (2 * q + 4)

    return coefficients


_coefficient_rules: dict[str, Callable[[int], np.ndarray]] = {
    **{tag: functools.partial(_member_coefficients, *sk) for tag, sk in _m_members.items()},
    "M2A1": _m2_coefficients,
    "M3A1": _m3_coefficients,
    "M4A1": _m4_coefficients,
    "C1": functools.partial(_combination_coefficients, "C1"),
    "C2": functools.partial(_combination_coefficients, "C2"),
}


@functools.lru_cache(maxsize=None)
def _coefficient_table(tag: str, order: int) -> np.ndarray:
    table = _coefficient_rules[tag](order)
    table.flags.writeable = False
    return table


def _check_tag(tag: str) -> None:
    if tag not in _coefficient_rules:
        raise InputError(f"unknown series tag {tag!r}")


def _series_order(z: float) -> int:
    return SERIES_ORDER + 2 * int(np.ceil(8 * z * z))


@dataclass(frozen=True)
class EntireSeries:
    tag: str
    coefficients: np.ndarray

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z: float | np.ndarray) -> float | np.ndarray:
        return polynomial.polyval(z, self.coefficients)

    def tail_bound(self, z: float) -> float:
        """Size of the last two retained terms, an estimate of the truncation error."""
        last = self.coefficients[-2:] * np.abs(z) ** np.arange(self.order - 1, self.order + 1)
        return float(np.sum(np.abs(last)))

    def __repr__(self) -> str:
        return f"<stokespec.EntireSeries {self.tag} order={self.order}>"


def entire_series(tag: str, order: int = SERIES_ORDER) -> EntireSeries:
    _check_tag(tag)
    return EntireSeries(tag, _coefficient_table(tag, order))


def combination_series(tag: str, order: int = SERIES_ORDER) -> EntireSeries:
    if tag not in _combinations:
        raise InputError(f"unknown combination {tag!r}, expected one of {COMBINATION_TAGS}")
    return entire_series(tag, order)


def combination_from_members(tag: str, order: int = SERIES_ORDER) -> np.ndarray:
    """Coefficients of a combination summed from its members' tables."""
    return sum(weight * _coefficient_table(member, order) for member, weight in _combinations[tag].items())


def m_series(tag: str, z: float) -> float:
    _check_tag(tag)
    series = entire_series(tag, _series_order(abs(z)))
    return float(series(z))


def m_generic(s: int, k: int, z: float) -> float:
    """M[s, k](z) for any s, k >= 0 by its power series."""
    if s < 0 or k < 0:
        raise DomainError(f"need s, k >= 0, got {(s, k)!r}")
    return float(polynomial.polyval(z, _member_coefficients(s, k, _series_order(abs(z)))))


def _checked_quad(func, a, b, tol, **kwargs) -> float:
    value, error = quad(func, a, b, epsabs=tol * 1e-3, epsrel=tol, limit=200, **kwargs)
    if error > tol * max(abs(value), 1.0):
        raise AccuracyError(
            f"quadrature did not reach {tol:g} on [{a:g}, {b:g}]", achieved=error / max(abs(value), 1.0)
        )
    return value


def _radial_limit(z: float) -> float:
    return abs(z) + 9.0


def _peak(z: float) -> list[float] | None:
    return [abs(z)] if z else None


def _angular(weight: Callable, r: float, z: float, tol: float) -> float:
    # e^{-r^2} folded into the exponent; the integrand is even in t
    return 2 * _checked_quad(
        lambda t: weight(t) * np.exp(2 * r * z * np.cos(t) - r * r), 0, np.pi, tol
    )


def _member_quadrature(s: int, k: int, z: float, tol: float) -> float:
    weight = lambda t: np.cos(t) ** k
    return _checked_quad(
        lambda r: r**s * _angular(weight, r, z, tol), 0, _radial_limit(z), tol, points=_peak(z)
    )


def _m2_quadrature(z: float, tol: float) -> float:
    weight = lambda t: np.sin(t) ** 2
    return _checked_quad(lambda r: _angular(weight, r, z, tol), 0, _radial_limit(z), tol)


def _m3_series_part(r: float, z: float) -> float:
    # (1/(r z)) int cos(t) e^{2rz cos t} dt, five terms
    q = np.arange(5)
    return 2 * np.pi * float(np.sum((r * z) ** (2 * q) / (gamma(q + 1) * gamma(q + 2))))


def _m3_quadrature(z: float, tol: float, r_cut: float = R_CUT) -> float:
    if z == 0:
        return _checked_quad(
            lambda r: np.exp(-r * r) * _m3_series_part(r, 0.0), 0, _radial_limit(z), tol
        )

    near = _checked_quad(lambda r: np.exp(-r * r) * _m3_series_part(r, z), 0, r_cut, tol)
    far = _checked_quad(
        lambda r: _angular(np.cos, r, z, tol) / (r * z), r_cut, _radial_limit(z), tol
    )
    return near + far


def _second_remainder(u, r):
    """e^{-r^2} (e^u - 1 - u) without cancellation for small u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.1
    return np.where(
        small,
        np.exp(-r * r) * (np.expm1(u) - u),
        np.exp(u - r * r) - np.exp(-r * r) * (1 + u),
    )


def _m4_quadrature(z: float, tol: float) -> float:
    # (M1 - M2 - z^2 M3) / z^2 with the first two Taylor terms of the
    # exponential removed analytically, so that z -> 0 is stable
    if z == 0:
        return _checked_quad(lambda r: np.exp(-r * r) * (np.pi * r * r - 2 * np.pi), 0, 9.0, tol)

    def radial(r):
        if r == 0:
            return -2 * np.pi
        even = 2 * _checked_quad(
            lambda t: np.cos(2 * t) * _second_remainder(2 * r * z * np.cos(t), r), 0, np.pi, tol
        )
        odd = 2 * _checked_quad(
            lambda t: np.cos(t) * _second_remainder(2 * r * z * np.cos(t), r), 0, np.pi, tol
        )
        return (even - z / r * odd) / (z * z) - 2 * np.pi * np.exp(-r * r)

    return _checked_quad(radial, 0, _radial_limit(z), tol, points=_peak(z))


def m_quadrature(tag: str, z: float, tol: float = 1e-11) -> float:
    _check_tag(tag)
    if z < 0:
        raise DomainError(f"quadrature route needs z >= 0, got {z!r}")

    if tag in _m_members:
        return _member_quadrature(*_m_members[tag], z, tol)
    if tag == "M2A1":
        return _m2_quadrature(z, tol)
    if tag == "M3A1":
        return _m3_quadrature(z, tol)
    if tag == "M4A1":
        return _m4_quadrature(z, tol)
    return sum(weight * m_quadrature(member, z, tol) for member, weight in _combinations[tag].items())


def is_odd(tag: str) -> bool:
    return tag in _odd_tags


def cross_validation(
    z_values: Iterable[float] = (0.0, 0.25, 0.5, 0.75, 1.0), tags: Iterable[str] = M_TAGS
) -> list[CrossCheck]:
    rows = []
    for tag in tags:
        for z in z_values:
            series = m_series(tag, z)
            quadrature = m_quadrature(tag, z)
            rows.append(CrossCheck(tag, float(z), series, quadrature, abs(series - quadrature)))
            logger.debug("%s(%g): series %.16g quadrature %.16g", tag, z, series, quadrature)
    return rows


class SpecfunReport(list):
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self)

    def failures(self) -> list[IdentityCheck]:
        return [check for check in self if not check.passed]

    def __repr__(self) -> str:
        return f"<stokespec.SpecfunReport {len(self)} checks, {len(self.failures())} failed>"


def _check(name: str, z, residual: float, tolerance: float) -> IdentityCheck:
    return IdentityCheck(name, z, float(residual), tolerance, bool(residual <= tolerance))


def identity_suite(z_values: Iterable[float] = (0.0, 0.3, 0.7, 1.0), terms: int = 6) -> SpecfunReport:
    """Checks the relations between the M-functions; failures are reported, not raised."""
    report = SpecfunReport()
    z_values = tuple(z_values)

    for z in z_values:
        residual = m_series("M5A1", z) - m_series("M1A1", z) - m_series("M2A1", z)
        report.append(_check("M5 = M1 + M2", z, abs(residual), 1e-12))

        m1, m2, m3, m4 = (m_series(tag, z) for tag in ("M1A1", "M2A1", "M3A1", "M4A1"))
        report.append(_check("z^2 M4 = M1 - z^2 M3 - M2", z, abs(z * z * m4 - (m1 - z * z * m3 - m2)), 1e-10))

        report.append(IdentityCheck("M4 nonzero", z, abs(m4), 0.0, m4 != 0.0))

    quadrature_sum = m_quadrature("M5A1", 0.5) - m_quadrature("M1A1", 0.5) - m_quadrature("M2A1", 0.5)
    report.append(_check("M5 = M1 + M2 (quadrature)", 0.5, abs(quadrature_sum), 1e-10))

    for tag in COMBINATION_TAGS:
        closed = _coefficient_table(tag, SERIES_ORDER)[:terms]
        members = combination_from_members(tag)[:terms]
        scale = np.maximum(np.abs(members), 1e-300)
        report.append(
            _check(f"{tag} coefficients", None, float(np.max(np.abs(closed - members) / scale)), 1e-9)
        )
        for z in z_values:
            series = m_series(tag, z)
            quadrature = m_quadrature(tag, z)
            report.append(
                _check(f"{tag} series vs quadrature", z, abs(series - quadrature) / max(abs(series), 1.0), 1e-9)
            )

    for k in range(9):
        report.append(_check("Wallis", k, abs(wallis(k) - wallis_quadrature(k)), 1e-13))

    report.append(_check("Gamma recursion", None, gamma_half_integer_check(), 1e-14))

    for check in report.failures():
        logger.warning("identity %r failed at z=%r: residual %.3e", check.name, check.z, check.residual)

    return report
