"""
Fundamental tensors of the Stokes (lambda = 0) and Brinkman-type (lambda > 0) systems

    -(Delta + lambda) G + grad F = delta I,    div G = 0,

written as G = -(1/4pi) [I h + Hess q] with h = e^{ik rho}/rho, q = (e^{ik rho} - 1)/(lambda rho),
k = sqrt(lambda). Every tensor needed by the layer potentials is assembled from the radial
profiles (rho^{-1} d/drho)^m of h and q.
"""

from __future__ import annotations

import logging
from collections import namedtuple
from math import comb, factorial

import numpy as np

from ._constants import SERIES_SWITCH
from ._utils import real_part
from .exceptions import DomainError, InputError, SingularityError

logger = logging.getLogger("stokespec")

KernelValue = namedtuple("KernelValue", ["G", "F", "lam"])
KernelDerivatives = namedtuple("KernelDerivatives", ["dG", "d2G", "dF"])
SecondConormal = namedtuple("SecondConormal", ["stokes", "correction", "leading"])

SERIES_TERMS = 14

_I = np.eye(3)


class ConormalData(namedtuple("ConormalData", ["point", "normal", "pressure"])):
    def __new__(cls, point, normal, pressure=None) -> ConormalData:
        point = np.asarray(point, dtype=float)
        normal = np.asarray(normal, dtype=float)
        if abs(np.linalg.norm(normal) - 1) > 1e-12:
            raise InputError(f"conormal data needs a unit normal, got {normal!r}")
        return super(ConormalData, cls).__new__(cls, point, normal, pressure)

    def __repr__(self) -> str:
        return f"<stokespec.ConormalData at {self.point.tolist()}>"


def _radius(x, allow_origin: bool = False) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    if not allow_origin and np.any(rho == 0):
        raise SingularityError("fundamental tensor evaluated at coincident points")
    return x, rho


def _check_lambda(lam: float) -> None:
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam!r}")


def _to_profiles(f, rho):
    """(rho^{-1} d/drho)^m f for m = 1..4 from plain derivatives f', ..., f''''."""
    f1, f2, f3, f4 = f
    return (
        f1 / rho,
        (f2 - f1 / rho) / rho**2,
        (f3 - 3 * f2 / rho + 3 * f1 / rho**2) / rho**3,
        (f4 - 6 * f3 / rho + 15 * f2 / rho**2 - 15 * f1 / rho**3) / rho**4,
    )


def _closed_profiles(rho, k):
    ik = 1j * k
    e = np.exp(ik * rho)
    inverse = [(-1) ** q * factorial(q) / rho ** (q + 1) for q in range(5)]

    def oscillating(m, first):
        return sum(comb(m, j) * ik**j * e * inverse[m - j] for j in range(first, m + 1))

    h = [oscillating(m, 0) for m in range(5)]
    g = [np.expm1(ik * rho) * inverse[m] + oscillating(m, 1) for m in range(5)]
    H = (h[0], *_to_profiles(h[1:], rho)[:2])
    Q = _to_profiles([gm / k**2 for gm in g[1:]], rho)
    return H, Q


def _falling(p: int, m: int) -> int:
    # (rho^{-1} d/drho)^m rho^p = p (p-2) ... (p-2m+2) rho^{p-2m}
    result = 1
    for i in range(m):
        result *= p - 2 * i
    return result


def _series_profiles(rho, k, correction_only: bool):
    ik = 1j * k
    first_h = 1 if correction_only else 0
    first_q = 3 if correction_only else 2

    def profile(m, first, sign, shift):
        return sum(
            sign * ik ** (n - shift) / factorial(n) * _falling(n - 1, m) * rho ** (n - 1 - 2 * m)
            for n in range(first, SERIES_TERMS)
        )

    H = tuple(profile(m, first_h, 1, 0) for m in range(3))
    Q = tuple(profile(m, first_q, -1, 2) for m in range(1, 5))
    return H, Q


def _stokes_profiles(rho):
    H = (1 / rho, -1 / rho**3, 3 / rho**5)
    Q = (-1 / (2 * rho), 1 / (2 * rho**3), -3 / (2 * rho**5), 15 / (2 * rho**7))
    return H, Q


def _profiles(rho, lam: float, correction_only: bool = False):
    """Radial profiles (H0, H1, H2), (Q1, .., Q4), complex, either of G^lambda or of G^lambda - G^0."""
    rho = np.atleast_1d(rho)
    H = np.zeros((3,) + rho.shape, dtype=complex)
    Q = np.zeros((4,) + rho.shape, dtype=complex)
    k = np.sqrt(lam)
    series = lam * rho**2 < SERIES_SWITCH

    if np.any(series):
        H_s, Q_s = _series_profiles(rho[series], k, correction_only)
        H[:, series] = H_s
        Q[:, series] = Q_s

    if np.any(~series):
        H_c, Q_c = _closed_profiles(rho[~series], k)
        if correction_only:
            H_0, Q_0 = _stokes_profiles(rho[~series])
            H_c = [a - b for a, b in zip(H_c, H_0)]
            Q_c = [a - b for a, b in zip(Q_c, Q_0)]
        H[:, ~series] = H_c
        Q[:, ~series] = Q_c

    return H, Q


def _outer(x):
    return np.einsum("...i,...j->...ij", x, x)


def _tensor(x, H, Q):
    return -(_I * (H[0] + Q[0])[..., None, None] + _outer(x) * Q[1][..., None, None]) / (4 * np.pi)


def _pressure(x, rho):
    return -x / (4 * np.pi * rho[..., None] ** 3)


def gamma0(x) -> KernelValue:
    x, rho = _radius(x)
    r = rho[..., None, None]
    G = -(_I / r + _outer(x) / r**3) / (8 * np.pi)
    return KernelValue(G, _pressure(x, rho), 0.0)


@real_part
def gamma_lambda(x, lam: float) -> KernelValue:
    _check_lambda(lam)
    if lam == 0:
        return gamma0(x)

    x, rho = _radius(x)
    H, Q = _profiles(rho.ravel(), lam)
    H = H.reshape((3,) + rho.shape)
    Q = Q.reshape((4,) + rho.shape)
    return KernelValue(_tensor(x, H, Q), _pressure(x, rho), lam)


def _delta_complex(x, lam: float) -> np.ndarray:
    x, rho = _radius(x, allow_origin=True)
    G = np.zeros(rho.shape + (3, 3), dtype=complex)
    if lam == 0:
        return G

    origin = rho == 0
    G[origin] = -1j * np.sqrt(lam) / (6 * np.pi) * _I
    if np.any(~origin):
        H, Q = _profiles(rho[~origin], lam, correction_only=True)
        G[~origin] = _tensor(x[~origin], H, Q)
    return G


def delta_lambda(x, lam: float) -> KernelValue:
    """G^lambda - G^0, regular at the origin."""
    _check_lambda(lam)
    G = np.real(_delta_complex(x, lam))
    return KernelValue(G, np.zeros(G.shape[:-1]), lam)


def delta_lambda_at_origin(lam: float) -> np.ndarray:
    """The complex limit -i sqrt(lambda) I / (6 pi); its real part vanishes."""
    _check_lambda(lam)
    return -1j * np.sqrt(lam) / (6 * np.pi) * _I


def delta_lambda_expansion(x, lam: float) -> np.ndarray:
    """Real part of G^lambda - G^0 up to O(|x|^3)."""
    x, rho = _radius(x)
    r = rho[..., None, None]
    return lam / (32 * np.pi) * (3 * _I * r - _outer(x) / r)


def _derivative_tensors(x, H, Q, second: bool = True):
    xx = _outer(x)
    H1 = H[1][..., None, None, None]
    Q2, Q3 = Q[1][..., None, None, None], Q[2][..., None, None, None]

    # dG[..., i, j, a] = d_a G_ij
    sym3 = (
        np.einsum("ij,...a->...ija", _I, x)
        + np.einsum("ia,...j->...ija", _I, x)
        + np.einsum("ja,...i->...ija", _I, x)
    )
    dG = -(np.einsum("ij,...a->...ija", _I, x) * H1 + sym3 * Q2 + np.einsum("...ij,...a->...ija", xx, x) * Q3)
    if not second:
        return dG / (4 * np.pi), None

    Q2, Q3, Q4 = (q[..., None, None, None, None] for q in Q[1:])
    H1, H2 = H[1][..., None, None, None, None], H[2][..., None, None, None, None]
    deltas = (
        np.einsum("ij,ab->ijab", _I, _I) + np.einsum("ia,jb->ijab", _I, _I) + np.einsum("ib,ja->ijab", _I, _I)
    )
    mixed = (
        np.einsum("ij,...ab->...ijab", _I, xx)
        + np.einsum("ia,...jb->...ijab", _I, xx)
        + np.einsum("ib,...ja->...ijab", _I, xx)
        + np.einsum("ja,...ib->...ijab", _I, xx)
        + np.einsum("jb,...ia->...ijab", _I, xx)
        + np.einsum("ab,...ij->...ijab", _I, xx)
    )
    d2G = -(
        np.einsum("ij,ab->ijab", _I, _I) * H1
        + np.einsum("ij,...ab->...ijab", _I, xx) * H2
        + deltas * Q2
        + mixed * Q3
        + np.einsum("...ij,...ab->...ijab", xx, xx) * Q4
    )
    return dG / (4 * np.pi), d2G / (4 * np.pi)


def _pressure_gradient(x, rho):
    r = rho[..., None, None]
    return (-_I / r**3 + 3 * _outer(x) / r**5) / (4 * np.pi)


def _derivatives(x, lam: float, correction_only: bool = False, second: bool = True) -> KernelDerivatives:
    x, rho = _radius(x)
    H, Q = _profiles(rho.ravel(), lam, correction_only)
    H = H.reshape((3,) + rho.shape)
    Q = Q.reshape((4,) + rho.shape)
    dG, d2G = _derivative_tensors(x, H, Q, second)
    dF = np.zeros(rho.shape + (3, 3)) if correction_only else _pressure_gradient(x, rho)
    return KernelDerivatives(dG, d2G, dF)


@real_part
def stokeslet_derivatives(x, lam: float = 0.0) -> KernelDerivatives:
    """First and second derivatives of G^lambda and the gradient of F."""
    _check_lambda(lam)
    return _derivatives(x, lam)


@real_part
def double_layer_kernel(r, n_y, lam: float = 0.0) -> np.ndarray:
    """Kernel D_ij(x, y) of the double layer, r = x - y, normal taken at the source y."""
    _check_lambda(lam)
    r, rho = _radius(r)
    dG = _derivatives(r, lam, second=False).dG
    n_y = np.broadcast_to(n_y, r.shape)
    return -(np.einsum("...ijl,...l->...ij", dG, n_y) + np.einsum("...ilj,...l->...ij", dG, n_y)) + np.einsum(
        "...i,...j->...ij", _pressure(r, rho), n_y
    )


@real_part
def adjoint_kernel(r, n_x, lam: float = 0.0) -> np.ndarray:
    """Kernel of (K^lambda)*: conormal derivative at x of the single layer, r = x - y."""
    _check_lambda(lam)
    r, rho = _radius(r)
    dG = _derivatives(r, lam, second=False).dG
    n_x = np.broadcast_to(n_x, r.shape)
    return np.einsum("...ijl,...l->...ij", dG, n_x) + np.einsum("...jli,...l->...ij", dG, n_x) - np.einsum(
        "...j,...i->...ij", _pressure(r, rho), n_x
    )


def pressure_double_layer_kernel(r, n_y, lam: float = 0.0) -> np.ndarray:
    """Pressure row Pi_j(x, y) paired with double_layer_kernel."""
    _check_lambda(lam)
    r, rho = _radius(r)
    n_y = np.broadcast_to(n_y, r.shape)
    dF = _pressure_gradient(r, rho)
    return -2 * np.einsum("...jl,...l->...j", dF, n_y) + lam * n_y / (4 * np.pi * rho[..., None])


def _second_conormal(r, n_x, n_y, lam, correction_only):
    r, rho = _radius(r)
    d2G = _derivatives(r, lam, correction_only).d2G
    # d2G[..., i, j, a, b] = d_a d_b G_ij
    result = -(
        np.einsum("...sjml,...m,...l->...sj", d2G, n_x, n_y)
        + np.einsum("...slmj,...m,...l->...sj", d2G, n_x, n_y)
        + np.einsum("...mjsl,...m,...l->...sj", d2G, n_x, n_y)
        + np.einsum("...mlsj,...m,...l->...sj", d2G, n_x, n_y)
    )
    lam_term = -lam * np.einsum("...s,...j->...sj", n_x, n_y) / (4 * np.pi * rho[..., None, None])
    if correction_only:
        return result + lam_term

    dF = _pressure_gradient(r, rho)
    return (
        result
        + np.einsum("...sm,...m,...j->...sj", dF, n_x, n_y) * 2
        + 2 * np.einsum("...jl,...l,...s->...sj", dF, n_y, n_x)
        + lam_term
    )


def leading_correction_kernel(r, n_x, n_y, lam: float) -> np.ndarray:
    """
    -(lambda/8pi) [<n_x, n_y> I + n_y n_x^T + n_x n_y^T] / |r|, the 1/|r| part of the
    correction kernel on a smooth surface. The first two terms come from the velocity
    correction lambda/32pi (3 I |r| - r r^T / |r|), the last from the pressure.
    """
    r, rho = _radius(r)
    s = np.einsum("...i,...i->...", n_x, n_y)[..., None, None]
    cross = np.einsum("...i,...j->...ij", n_y, n_x)
    return -lam / (8 * np.pi) * (s * _I + cross + np.swapaxes(cross, -1, -2)) / rho[..., None, None]


def conormal_second_kernel(x: ConormalData, y: ConormalData, lam: float) -> SecondConormal:
    """
    Second conormal derivative d^2 G^lambda(x - y) / dN(x) dN(y) split into the
    Stokes part, the exact lambda-correction and its displayed leading form.
    """
    _check_lambda(lam)
    r = x.point - y.point
    if np.linalg.norm(r) == 0:
        raise SingularityError("second conormal kernel evaluated at coincident points")

    stokes = np.real(_second_conormal(r, x.normal, y.normal, 0.0, correction_only=False))
    if lam == 0:
        zero = np.zeros((3, 3))
        return SecondConormal(stokes, zero, zero)

    correction = np.real(_second_conormal(r, x.normal, y.normal, lam, correction_only=True))
    return SecondConormal(stokes, correction, leading_correction_kernel(r, x.normal, y.normal, lam))


def laplacian_fd(func, x, step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    center = func(x)
    result = -6 * center
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = step
        result = result + func(x + shift) + func(x - shift)
    return result / step**2


def gradient_fd(func, x, step: float = 1e-5) -> np.ndarray:
    """Central differences; the last axis of the result is the derivative direction."""
    x = np.asarray(x, dtype=float)
    columns = []
    for axis in range(3):
        shift = np.zeros(3)
        shift[axis] = step
        columns.append((func(x + shift) - func(x - shift)) / (2 * step))
    return np.stack(columns, axis=-1)


def pde_residual(x, lam: float, step: float = 1e-4) -> float:
    """max |(Delta + lambda) G - grad F| at x by central differences."""
    x = np.asarray(x, dtype=float)
    value = gamma_lambda(x, lam)
    laplacian = laplacian_fd(lambda p: gamma_lambda(p, lam).G, x, step)
    # d_j F_i, symmetric
    pressure_gradient = _pressure_gradient(x, np.linalg.norm(x))
    return float(np.max(np.abs(laplacian + lam * value.G - pressure_gradient)))


def divergence_residual(x, lam: float, step: float = 1e-5) -> float:
    """max_j |sum_i d_i G_ij| at x by central differences."""
    gradient = gradient_fd(lambda p: gamma_lambda(p, lam).G, x, step)
    return float(np.max(np.abs(np.einsum("iji->j", gradient))))
