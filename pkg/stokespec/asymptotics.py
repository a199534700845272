"""
Small-width expansions of the conormal response to a Gaussian bump variation.

With the bump V_n = alpha_{eps, eta_0} centred at eta_0 = eps * r0bar (cos theta0, sin theta0)
in the chart at x, the tangential part of sum_i A_i(V_n, psi)(x) behaves like c3 / eps^3 with
c3 given by the M-functions at r0bar, while the composition terms of the conormal
representation stay O(1 / eps^2).
"""

from __future__ import annotations

import logging
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._constants import DEFAULT_DELTA, SERIES_ORDER
from .exceptions import FitError, InputError
from .geometry import (
    BumpVariation,
    Panelization,
    Surface,
    bump_breakpoints,
    chart_at,
    chart_jacobian,
    chart_polar_rule,
    gaussian,
)
from .kernels import adjoint_kernel
from .potentials import (
    BumpField,
    ConstantField,
    ProductField,
    SurfaceField,
    _a_terms,
    brinkman_correction,
    hypersingular_decomposed,
    target_rule,
)
from .specfun import _coefficient_table, combination_from_members, m_series

logger = logging.getLogger("stokespec")

WTerms = namedtuple("WTerms", ["W1", "W2", "W3", "W4"])
PrincipalValue = namedtuple("PrincipalValue", ["quadrature", "closed"])
QuadratureTerms = namedtuple("QuadratureTerms", ["a1", "a2", "a3"])


def _direction(theta0: float) -> np.ndarray:
    return np.array([np.cos(theta0), np.sin(theta0)])


def _rotation(theta0: float) -> np.ndarray:
    c, s = np.cos(theta0), np.sin(theta0)
    return np.array([[c, -s], [s, c]])


def _clip_offset(r0bar: float) -> float:
    if not 0 <= r0bar <= 1:
        logger.warning("relative offset %g clipped into [0, 1]", r0bar)
        return float(np.clip(r0bar, 0.0, 1.0))
    return float(r0bar)


def predicted_leading(psi: Sequence[float], r0bar: float, theta0: float = 0.0) -> np.ndarray:
    """
    eps^3 P_x(sum A_i) in the limit eps -> 0,

        2 e^{-r0bar^2} [(M2 + M5 - r0bar^2 M3) psi + M4 <eta0bar, psi> eta0bar],

    with eta0bar = eta_0 / eps of length r0bar.
    """
    z = _clip_offset(r0bar)
    psi = np.asarray(psi, dtype=float)
    eta0bar = z * _direction(theta0)
    m2, m3, m4, m5 = (m_series(tag, z) for tag in ("M2A1", "M3A1", "M4A1", "M5A1"))
    return 2 * np.exp(-z * z) * ((m2 + m5 - z * z * m3) * psi + m4 * np.dot(eta0bar, psi) * eta0bar)


# sweeps over the bump width


def _fit_leading(eps: np.ndarray, measured: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least squares of eps^3 m = c3 + c2 eps, per component."""
    scaled = measured * eps[:, None] ** 3
    basis = np.stack([np.ones_like(eps), eps], axis=-1)
    coefficients, *_ = np.linalg.lstsq(basis, scaled, rcond=None)
    fitted = basis @ coefficients
    size = np.linalg.norm(scaled)
    residual = float(np.linalg.norm(fitted - scaled) / size) if size > 0 else 0.0
    return coefficients[0], coefficients[1], residual


def _exponent(eps: np.ndarray, measured: np.ndarray) -> float:
    norms = np.linalg.norm(measured, axis=-1)
    if np.any(norms == 0):
        return float("nan")
    return float(np.polyfit(np.log(1 / eps), np.log(norms), 1)[0])


@dataclass(frozen=True)
class EpsilonSweep:
    eps: np.ndarray
    r0bar: float
    theta0: float
    measured: np.ndarray
    c3: np.ndarray
    c2: np.ndarray
    residual: float
    exponent: float
    predicted: np.ndarray
    c3_reduced: np.ndarray = field(repr=False)

    def __repr__(self) -> str:
        return (
            f"<stokespec.EpsilonSweep {len(self.eps)} widths r0bar={self.r0bar:g} "
            f"c3={np.round(self.c3, 6).tolist()} exponent={self.exponent:.3f}>"
        )

    @property
    def relative_error(self) -> np.ndarray:
        """Componentwise |c3 - predicted| relative to |predicted|."""
        return np.abs(self.c3 - self.predicted) / np.maximum(np.linalg.norm(self.predicted), 1e-300)

    @property
    def stable(self) -> bool:
        """c3 moves by at most 10% when the widest bump is dropped."""
        return bool(np.linalg.norm(self.c3_reduced - self.c3) <= 0.1 * np.linalg.norm(self.c3))

    def rows(self) -> list[tuple]:
        return [
            (float(e), *map(float, m), *map(float, self.c3), *map(float, self.predicted))
            for e, m in zip(self.eps, self.measured)
        ]


class _TangentialPart(SurfaceField):
    """psi minus the constant normal part it has at the base point."""

    def __init__(self, psi: SurfaceField, shift: np.ndarray) -> None:
        self.psi = psi
        self.shift = shift

    def value(self, y):
        return self.psi.value(y) - self.shift

    def gradient(self, y):
        return self.psi.gradient(y)


def _tangential(psi: SurfaceField, x: np.ndarray, normal: np.ndarray) -> SurfaceField:
    value = psi.value(x[None, :])[0]
    normal_part = float(np.dot(value, normal))
    if abs(normal_part) > 1e-10 * max(np.linalg.norm(value), 1.0):
        logger.warning("psi has a normal component %.3g at the base point, projected out", normal_part)
        return _TangentialPart(psi, normal_part * normal)
    return psi


def _bump(surface: Surface, x: np.ndarray, eps: float, r0bar: float, theta0: float, delta: float) -> BumpVariation:
    chart = chart_at(surface, x, delta)
    return BumpVariation.from_polar(chart, eps, r0bar, theta0, truncated=surface.closed)


def _bump_radii(surface: Surface, eps: float, r0bar: float, delta: float) -> list[float]:
    outer = 2 * delta if surface.closed else (r0bar + 9) * eps
    return bump_breakpoints(eps, outer)


def a_terms_sweep(
    surface: Surface,
    x: np.ndarray,
    psi: SurfaceField,
    eps: Sequence[float],
    r0bar: float = 0.0,
    theta0: float = 0.0,
    delta: float = DEFAULT_DELTA,
    n_s: int = 16,
    n_phi: int = 64,
    fit_tol: float = 0.1,
) -> EpsilonSweep:
    """P_x(sum_i A_i(V_n, psi)(x)) over a decreasing grid of widths, fitted to c3/eps^3 + c2/eps^2."""
    eps = np.asarray(eps, dtype=float)
    if len(eps) < 3 or np.any(np.diff(eps) >= 0):
        raise InputError("a width sweep needs at least three strictly decreasing widths")
    r0bar = _clip_offset(r0bar)
    x = np.asarray(x, dtype=float)
    chart = chart_at(surface, x, delta)
    psi = _tangential(psi, x, chart.normal)
    psi_at_x = psi.value(x[None, :])[0] @ chart.frame

    measured = []
    for e in eps:
        variation = _bump(surface, x, e, r0bar, theta0, delta)
        radii = _bump_radii(surface, e, r0bar, delta)
        terms = hypersingular_decomposed(surface, BumpField(variation), psi, x, radii, n_s, n_phi)
        measured.append(terms.total @ chart.frame)
        logger.debug("eps=%g: P_x sum A = %s", e, measured[-1])
    measured = np.array(measured)

    c3, c2, residual = _fit_leading(eps, measured)
    c3_reduced, _, _ = _fit_leading(eps[1:], measured[1:])
    sweep = EpsilonSweep(
        eps,
        r0bar,
        theta0,
        measured,
        c3,
        c2,
        residual,
        _exponent(eps, measured),
        predicted_leading(psi_at_x, r0bar, theta0),
        c3_reduced,
    )
    logger.debug("fit c3=%s c2=%s residual=%.3e", c3, c2, residual)
    if residual > fit_tol:
        raise FitError(f"fit residual {residual:.3g} exceeds {fit_tol:g}", data=sweep)
    return sweep


# remainder terms of the conormal representation


def _bump_rule(variation: BumpVariation, n_rho: int, n_phi: int) -> Panelization:
    chart = variation.chart
    outer = min(8 * variation.eps, chart.radius - np.linalg.norm(variation.eta0))
    eta, weights = chart_polar_rule(variation.eta0, bump_breakpoints(variation.eps, outer), n_rho, n_phi)
    return Panelization(chart.point(eta), chart.surface_normal(eta), weights * chart_jacobian(chart, eta))


def _node_radii(distance: float, eps: float, delta: float) -> list[float]:
    radii = {0.0, distance + 2 * delta}
    radii |= {c * eps for c in (0.25, 0.5, 1, 2, 4)}
    radii |= {max(distance + c * eps, 0.0) for c in (-3, -1, 1, 3)}
    return sorted(r for r in radii if r < np.pi)


def _adjoint_apply(targets, target_normals, nodes, weights, values, lam, block: int = 32) -> np.ndarray:
    """sum_k w_k K*(x_i - z_k) v_k with coincident pairs skipped."""
    out = np.zeros_like(targets)
    for start in range(0, len(targets), block):
        rows = slice(start, min(start + block, len(targets)))
        r = targets[rows, None, :] - nodes[None, :, :]
        coincident = np.linalg.norm(r, axis=-1) == 0
        r = np.where(coincident[..., None], 1.0, r)
        kernel = adjoint_kernel(r, np.broadcast_to(target_normals[rows, None, :], r.shape), lam)
        kernel[coincident] = 0.0
        out[rows] = np.einsum("k,tkij,kj->ti", weights, kernel, values)
    return out


def w_terms(
    surface: Surface,
    lam: float,
    psi: SurfaceField,
    variation: BumpVariation,
    n_s: int = 6,
    n_phi: int = 16,
    inner_n_s: int = 8,
    inner_n_phi: int = 32,
) -> WTerms:
    """
    The four terms of the conormal response at the chart base point x to the boundary
    density V_n psi, with b = -E(V_n psi), e = -E^Delta(V_n psi) and C = -2 (K^lambda)*:

        W1 = 2 b,  W2 = C W1,  W3 = 2 (1 + C) e,  W4 = 2 C^2 (b + e),

    W4 being the first term the truncated Neumann series leaves out. The compositions
    use a polar rule centred at x whose nodes carry b and e.
    """
    chart = variation.chart
    x, n_x = chart.x, chart.normal
    eps = variation.eps
    alpha = BumpField(variation)
    density = ProductField(alpha, psi)
    peak = variation.peak

    outer = target_rule(surface, x, bump_breakpoints(eps, 2 * variation.delta), n_s, n_phi)
    nodes, normals, weights = outer
    far_rule = _bump_rule(variation, inner_n_s, inner_n_phi)

    b = np.zeros_like(nodes)
    e = np.zeros_like(nodes)
    for k, (z, n_z) in enumerate(zip(nodes, normals)):
        distance = float(np.linalg.norm(z - peak))
        if distance <= 10 * eps:
            rule = target_rule(surface, z, _node_radii(distance, eps, variation.delta), inner_n_s, inner_n_phi)
        else:
            rule = far_rule
        b[k] = -_a_terms(z, n_z, rule, alpha, psi).total / (4 * np.pi)
        e[k] = -brinkman_correction(surface, density, z, lam, rule=rule)

    def compose(values):
        return -2 * _adjoint_apply(x[None, :], n_x[None, :], nodes, weights, values, lam)[0]

    at_x = target_rule(surface, x, _node_radii(float(np.linalg.norm(x - peak)), eps, variation.delta), inner_n_s, inner_n_phi)
    b_x = -_a_terms(x, n_x, at_x, alpha, psi).total / (4 * np.pi)
    e_x = -brinkman_correction(surface, density, x, lam, rule=at_x)

    W1 = 2 * b_x
    W2 = compose(2 * b)
    W3 = 2 * (e_x + compose(e))
    Cv = -2 * _adjoint_apply(nodes, normals, nodes, weights, b + e, lam)
    W4 = 2 * compose(Cv)
    logger.debug("W terms at eps=%g on %d nodes: %s", eps, len(nodes), [np.linalg.norm(w) for w in (W1, W2, W3, W4)])
    return WTerms(W1, W2, W3, W4)


@dataclass(frozen=True)
class RemainderSweep:
    eps: np.ndarray
    projected: np.ndarray  # (n_eps, 4, 2)

    def __repr__(self) -> str:
        return f"<stokespec.RemainderSweep {len(self.eps)} widths bounded={self.bounded}>"

    @property
    def scaled(self) -> np.ndarray:
        """eps^3 |P_x W1| and eps^2 |P_x W_i| for i = 2, 3, 4."""
        norms = np.linalg.norm(self.projected, axis=-1)
        powers = np.array([3, 2, 2, 2])
        return norms * self.eps[:, None] ** powers

    @property
    def bounded(self) -> bool:
        """eps^2 |P_x W_i| never exceeds twice its value at the widest bump, i = 2, 3, 4."""
        scaled = self.scaled[:, 1:]
        return bool(np.all(scaled <= 2 * scaled[0] + 1e-14))


def remainder_sweep(
    surface: Surface,
    lam: float,
    psi: SurfaceField,
    x: np.ndarray,
    eps: Sequence[float],
    r0bar: float = 0.0,
    theta0: float = 0.0,
    delta: float = DEFAULT_DELTA,
    **rule,
) -> RemainderSweep:
    eps = np.asarray(eps, dtype=float)
    x = np.asarray(x, dtype=float)
    chart = chart_at(surface, x, delta)
    projected = []
    for e in eps:
        variation = _bump(surface, x, e, _clip_offset(r0bar), theta0, delta)
        terms = w_terms(surface, lam, psi, variation, **rule)
        projected.append([w @ chart.frame for w in terms])
    return RemainderSweep(eps, np.array(projected))


# second-order quantities


@dataclass(frozen=True)
class SecondOrderTerms:
    F: np.ndarray
    rho: float
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    alpha1: float
    alpha2: float
    alpha3: float

    def __repr__(self) -> str:
        return (
            f"<stokespec.SecondOrderTerms alpha=({self.alpha1:.6g}, {self.alpha2:.6g}, {self.alpha3:.6g})>"
        )

    @property
    def leading(self) -> np.ndarray:
        """a1 + a2 + rho a3."""
        return self.a1 + self.a2 + self.rho * self.a3

    @property
    def constraint(self) -> float:
        """alpha1 + F22 alpha3, the tangential component that must vanish."""
        return self.alpha1 + self.F[1, 1] * self.alpha3


def _check_hessian(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.shape != (2, 2):
        raise InputError(f"F must be 2x2, got shape {F.shape!r}")
    if abs(F[0, 1] - F[1, 0]) > 1e-12 * max(1.0, np.max(np.abs(F))):
        raise InputError("F must be symmetric")
    return F


def _closed_terms(F: np.ndarray, psi: np.ndarray, z: float, theta0: float, eps: float):
    M1, M5, M6, M7, M8, M9, M10 = (
        m_series(tag, z) for tag in ("M1A1", "M5A1", "M6", "M7", "M8", "M9", "M10")
    )
    R = _rotation(theta0)
    e0 = _direction(theta0)
    f = R.T @ F @ R
    p1, p2 = R.T @ psi
    scale = np.exp(-z * z) / (4 * np.pi * eps)

    isotropic = (M5 - M1) * psi + (2 * M1 - M5) * np.dot(psi, e0) * e0
    a3 = -0.5 * scale * isotropic
    a2 = -scale * ((f[0, 0] * M1 + f[1, 1] * (M5 - M1)) * psi + F @ isotropic)

    first = p1 * (f[0, 0] * M8 + f[1, 1] * (M7 - M8)) + 2 * f[0, 1] * p2 * (M7 - M8)
    second = 2 * f[0, 1] * p1 * (M7 - M8) + p2 * (f[0, 0] * (M7 - M8) + f[1, 1] * (M6 - 2 * M7 + M8))
    offset = -z * (f[0, 0] * p1 * M10 + (f[1, 1] * p1 + 2 * f[0, 1] * p2) * (M9 - M10))
    along = f[0, 0] * M7 + f[1, 1] * (M6 - M7) - z * (f[0, 0] * M10 + f[1, 1] * (M9 - M10))
    a1 = scale * (R @ np.array([first + offset + along * p1, second + along * p2]))
    return a1, a2, a3, M1, M5


def second_order_terms(
    F, rho: float, psi: Sequence[float], r0bar: float, theta0: float = 0.0, eps: float = 1.0
) -> SecondOrderTerms:
    """
    Closed forms of a1, a2, a3 (the 1/eps part of the tangential response to beta V_n psi
    with beta = eta^T F eta / 2) and the coefficients alpha1 .. alpha3 of the frame where
    eta0bar = (1, 0) and psi / |psi| = (0, 1).
    """
    F = _check_hessian(F)
    z = _clip_offset(r0bar)
    psi = np.asarray(psi, dtype=float)
    a1, a2, a3, _, _ = _closed_terms(F, psi, z, theta0, eps)

    unit = np.array([0.0, 1.0])
    b1, b2, b3, M1, M5 = _closed_terms(F, unit, z, 0.0, 1.0)
    total = 4 * np.pi * np.exp(z * z) * (b1 + b2 + rho * b3)
    alpha3 = -(M5 - M1)
    rest = total - alpha3 * (F @ unit)
    alpha1 = float(rest @ unit)
    alpha2 = float(rest @ np.array([-1.0, 0.0]))
    return SecondOrderTerms(F, float(rho), a1, a2, a3, alpha1, alpha2, float(alpha3))


def _plane_rule(eps: float, r0bar: float, n_rho: int, n_phi: int):
    return chart_polar_rule(np.zeros(2), bump_breakpoints(eps, (r0bar + 9) * eps), n_rho, n_phi)


def second_order_quadrature(
    F, psi: Sequence[float], r0bar: float, theta0: float = 0.0, eps: float = 1.0, n_rho: int = 24, n_phi: int = 256
) -> QuadratureTerms:
    """a1, a2, a3 by direct quadrature of their defining plane integrals."""
    F = _check_hessian(F)
    psi = np.asarray(psi, dtype=float)
    eta0 = eps * _clip_offset(r0bar) * _direction(theta0)
    eta, w = _plane_rule(eps, r0bar, n_rho, n_phi)
    rho = np.linalg.norm(eta, axis=-1)
    alpha = gaussian(eta, eta0, eps)
    quadratic = np.einsum("mi,ij,mj->m", eta, F, eta)
    psi_eta = eta @ psi
    shifted = eta - eta0

    weight1 = w * alpha * quadratic / rho**3
    a1 = np.einsum(
        "m,mi->i", weight1, psi_eta[:, None] * shifted + np.sum(shifted * eta, axis=-1)[:, None] * psi
    ) / (4 * np.pi * eps**2)
    weight2 = w * alpha / rho**3
    a2 = -np.einsum("m,mi->i", weight2, quadratic[:, None] * psi + psi_eta[:, None] * (eta @ F)) / (4 * np.pi)
    hat = eta / rho[:, None]
    a3 = -np.einsum("m,mi->i", w * alpha * (hat @ psi) / rho, hat) / (8 * np.pi)
    return QuadratureTerms(a1, a2, a3)


# the final identity


FinalIdentityReport = namedtuple(
    "FinalIdentityReport",
    ["z", "displayed", "consistent", "coefficient_defect", "odd_rank", "forces_zero_hessian", "remainder"],
)


def final_identity_check(F, rho: float, z_values: Sequence[float] = (0.3, 0.7), terms: int = 6) -> FinalIdentityReport:
    """
    The scalar identity F11 C1(z) + F22 C2(z) + (rho/2)(M1 - M5)(z) = 0 that the leading
    tangential response must satisfy for every offset z, with

        C1 = 2 M7 - M8 - M10 - M1,   C2 = 2 M6 - 3 M7 + M8 + M10 - M9 - 2 M5 + 2 M1.

    The odd Taylor coefficients involve C1 and C2 only, and their system has full rank, so
    F11 = F22 = 0 and the identity reduces to (rho/2)(M1 - M5) = -(rho/2) M2.
    """
    F = _check_hessian(F)
    z_values = np.asarray(z_values, dtype=float)
    displayed = np.array(
        [
            F[0, 0] * m_series("C1", z) + F[1, 1] * m_series("C2", z) + 0.5 * rho * (m_series("M1A1", z) - m_series("M5A1", z))
            for z in z_values
        ]
    )
    consistent = np.array([second_order_terms(F, rho, (0.0, 1.0), z).constraint for z in z_values])

    defect = 0.0
    odd = []
    for tag in ("C1", "C2"):
        closed = _coefficient_table(tag, SERIES_ORDER)[:terms]
        members = combination_from_members(tag)[:terms]
        defect = max(defect, float(np.max(np.abs(closed - members)) / np.max(np.abs(members))))
        odd.append(_coefficient_table(tag, SERIES_ORDER)[1 : 2 * terms : 2])
    system = np.stack(odd, axis=-1)
    system = system / np.linalg.norm(system, axis=-1, keepdims=True)
    rank = int(np.linalg.matrix_rank(system, tol=1e-10))

    remainder = np.array([0.5 * rho * (m_series("M1A1", z) - m_series("M5A1", z)) for z in z_values])
    return FinalIdentityReport(z_values, displayed, consistent, defect, rank, rank == 2, remainder)


# Gaussian moments


def gaussian_moment_bound(m: int, eps: float, r0bar: float = 0.0, theta0: float = 0.0, delta: float = DEFAULT_DELTA) -> float:
    """eps^{1-m} int_{|eta| < delta} alpha / |eta|^{1-m}, bounded independently of eps."""
    if m < 0:
        raise InputError(f"moment order must be nonnegative, got {m!r}")
    eta0 = eps * _clip_offset(r0bar) * _direction(theta0)
    eta, w = chart_polar_rule(np.zeros(2), bump_breakpoints(eps, delta), 24, 128)
    rho = np.linalg.norm(eta, axis=-1)
    return float(eps ** (1 - m) * np.sum(w * gaussian(eta, eta0, eps) * rho ** (m - 1)))


def gaussian_principal_value(eps: float, r0bar: float, theta0: float = 0.0, n_rho: int = 24, n_phi: int = 256) -> PrincipalValue:
    """p.v. int alpha eta / |eta|^3 against e^{-r0bar^2} M3(r0bar) eta0bar / eps^2."""
    z = _clip_offset(r0bar)
    eta0 = eps * z * _direction(theta0)
    eta, w = _plane_rule(eps, z, n_rho, n_phi)
    rho = np.linalg.norm(eta, axis=-1)
    quadrature = np.einsum("m,mi->i", w * gaussian(eta, eta0, eps) / rho**3, eta)
    closed = np.exp(-z * z) / eps**2 * m_series("M3A1", z) * z * _direction(theta0)
    return PrincipalValue(quadrature, closed)


def flat_patch_sweep(
    psi: Sequence[float], eps: Sequence[float], r0bar: float = 0.0, theta0: float = 0.0, **options
) -> EpsilonSweep:
    """a_terms_sweep on the plane z = 0 at the origin with a constant tangential psi."""
    psi = np.asarray(psi, dtype=float)
    field = ConstantField(np.array([psi[0], psi[1], 0.0]))
    return a_terms_sweep(Surface.flat(), np.zeros(3), field, eps, r0bar, theta0, **options)
