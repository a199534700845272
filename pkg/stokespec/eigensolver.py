"""
Stokes Dirichlet eigenpairs on model domains.

In two dimensions the velocity is the rotated gradient of a stream function solving the
clamped-plate problem, Delta^2 psi = -lambda Delta psi, psi = d_n psi = 0. Its solutions are
combinations of J_m(alpha r) e^{i m theta} and harmonic polynomials z^a, on which the
ladder operators d_x +/- i d_y act termwise, so every derivative is exact.

In three dimensions the ball carries the toroidal family j_l(k r) r^{-l} (x cross grad P)
with P a harmonic polynomial of degree l and constant pressure.
"""

from __future__ import annotations

import itertools
import logging
from collections import namedtuple
from dataclasses import dataclass, field
from math import prod
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space, qr, svd
from scipy.optimize import brentq, minimize_scalar
from scipy.special import jn_zeros, jv, spherical_jn

from ._constants import CLUSTER_RTOL_ANALYTIC, CLUSTER_RTOL_PERTURBED
from ._utils import gauss_rule, periodic_rule
from .exceptions import ConvergenceError, DomainError, InputError
from .geometry import Surface

logger = logging.getLogger("stokespec")

VolumeRule = namedtuple("VolumeRule", ["points", "weights"])
GreenResidual = namedtuple("GreenResidual", ["first", "second"])


def cluster_eigenvalues(values: Sequence[float], rtol: float) -> list[int]:
    """Cluster ids of sorted values; neighbours closer than rtol (relative) share a cluster."""
    ids = []
    current = -1
    for i, value in enumerate(values):
        if i == 0 or abs(value - values[i - 1]) > rtol * max(abs(value), abs(values[i - 1])):
            current += 1
        ids.append(current)
    return ids


# two dimensions


class _Expansion:
    """sum_m c_m J_m(alpha r) e^{i m theta} + sum_a d_a z^a, complex valued."""

    def __init__(self, alpha: float, bessel: dict | None = None, poly: dict | None = None) -> None:
        self.alpha = alpha
        self.bessel = {m: c for m, c in (bessel or {}).items() if c != 0}
        self.poly = {a: d for a, d in (poly or {}).items() if d != 0}

    def __add__(self, other: _Expansion) -> _Expansion:
        bessel, poly = dict(self.bessel), dict(self.poly)
        for m, c in other.bessel.items():
            bessel[m] = bessel.get(m, 0) + c
        for a, d in other.poly.items():
            poly[a] = poly.get(a, 0) + d
        return _Expansion(self.alpha, bessel, poly)

    def __mul__(self, scalar: complex) -> _Expansion:
        return _Expansion(
            self.alpha,
            {m: c * scalar for m, c in self.bessel.items()},
            {a: d * scalar for a, d in self.poly.items()},
        )

    __rmul__ = __mul__

    def dplus(self) -> _Expansion:
        return _Expansion(self.alpha, {m + 1: -self.alpha * c for m, c in self.bessel.items()})

    def dminus(self) -> _Expansion:
        return _Expansion(
            self.alpha,
            {m - 1: self.alpha * c for m, c in self.bessel.items()},
            {a - 1: 2 * a * d for a, d in self.poly.items() if a > 0},
        )

    def dx(self) -> _Expansion:
        return (self.dplus() + self.dminus()) * 0.5

    def dy(self) -> _Expansion:
        return (self.dplus() + self.dminus() * -1) * (-0.5j)

    def laplacian(self) -> _Expansion:
        return self.dminus().dplus()

    def harmonic_part(self) -> _Expansion:
        return _Expansion(self.alpha, poly=self.poly)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x[..., 0] + 1j * x[..., 1]
        r = np.abs(z)
        phase = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)
        result = np.zeros(z.shape, dtype=complex)
        for m, c in self.bessel.items():
            result += c * jv(m, self.alpha * r) * phase**m
        for a, d in self.poly.items():
            result += d * z**a
        return result


class StreamMode:
    """Velocity (d_y psi, -d_x psi) of the stream function psi = Re E."""

    dimension = 2

    def __init__(self, expansion: _Expansion, label: str = "") -> None:
        self.expansion = expansion
        self.alpha = expansion.alpha
        self.label = label
        E = expansion
        self._first = (E.dx(), E.dy())
        self._second = (E.dx().dx(), E.dx().dy(), E.dy().dy())
        lap = E.laplacian()
        self._laplacian = (lap.dx(), lap.dy())
        # -Delta psi - lambda psi is harmonic; the pressure is its conjugate
        self._harmonic = E.harmonic_part() * -(self.alpha**2)

    def __repr__(self) -> str:
        return f"<stokespec.StreamMode {self.label} lambda={self.eigenvalue:.10g}>"

    @property
    def eigenvalue(self) -> float:
        return self.alpha**2

    def scaled(self, factor: float) -> StreamMode:
        return StreamMode(self.expansion * factor, self.label)

    def stream(self, x: np.ndarray) -> np.ndarray:
        return np.real(self.expansion(x))

    def velocity(self, x: np.ndarray) -> np.ndarray:
        dx, dy = self._first
        return np.stack([np.real(dy(x)), -np.real(dx(x))], axis=-1)

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        """[..., i, j] = d_j phi_i."""
        xx, xy, yy = (np.real(e(x)) for e in self._second)
        return np.stack([np.stack([xy, yy], axis=-1), np.stack([-xx, -xy], axis=-1)], axis=-2)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        dx, dy = self._laplacian
        return np.stack([np.real(dy(x)), -np.real(dx(x))], axis=-1)

    def pressure(self, x: np.ndarray) -> np.ndarray:
        return np.imag(self._harmonic(x))

    def pressure_gradient(self, x: np.ndarray) -> np.ndarray:
        h = self._harmonic
        return np.stack([np.imag(h.dx()(x)), np.imag(h.dy()(x))], axis=-1)

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return np.trace(self.velocity_gradient(x), axis1=-2, axis2=-1)


def star_rule(radius: Callable[[np.ndarray], np.ndarray], n_r: int = 40, n_theta: int = 128) -> VolumeRule:
    """Polar rule on the star domain rho < radius(theta)."""
    s, w_s = gauss_rule(n_r, 0.0, 1.0)
    theta, w_theta = periodic_rule(n_theta)
    R = radius(theta)
    rho = s[:, None] * R[None, :]
    points = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1).reshape(-1, 2)
    weights = (w_s[:, None] * s[:, None] * R[None, :] ** 2 * w_theta[None, :]).ravel()
    return VolumeRule(points, weights)


def _unit_disk(theta: np.ndarray) -> np.ndarray:
    return np.ones_like(theta)


def _normalized(mode: StreamMode, rule: VolumeRule) -> StreamMode:
    norm = np.sqrt(np.sum(rule.weights * np.sum(mode.velocity(rule.points) ** 2, axis=-1)))
    return mode.scaled(1 / norm)


def disk_mode(n: int, k: int, parity: str = "cos") -> StreamMode:
    """Clamped mode [J_n(alpha r) - J_n(alpha) r^n] (cos | sin)(n theta), alpha = j_{n+1,k}."""
    if n < 0 or k < 1:
        raise InputError(f"disk modes need n >= 0 and k >= 1, got {(n, k)!r}")
    if n == 0 and parity == "sin":
        raise InputError("the axisymmetric disk mode has no sine partner")
    alpha = float(jn_zeros(n + 1, k)[-1])
    weight = 1.0 if parity == "cos" else -1j
    expansion = _Expansion(alpha, {n: weight}, {n: -weight * jv(n, alpha)})
    return _normalized(StreamMode(expansion, f"disk n={n} k={k} {parity}"), star_rule(_unit_disk))


# three dimensions


class HarmonicPolynomial:
    """Homogeneous polynomial sum c_e x^e with exponent triples e."""

    def __init__(self, exponents: Sequence[tuple[int, int, int]], coefficients: np.ndarray) -> None:
        self.exponents = np.asarray(exponents, dtype=int)
        self.coefficients = np.asarray(coefficients, dtype=float)

    @property
    def degree(self) -> int:
        return int(self.exponents[0].sum())

    def _derivative(self, axes: tuple[int, ...]):
        exponents = self.exponents.copy()
        factor = np.ones(len(exponents))
        for axis in axes:
            factor *= exponents[:, axis]
            exponents[:, axis] = np.maximum(exponents[:, axis] - 1, 0)
        return exponents, factor * self.coefficients

    def evaluate(self, x: np.ndarray, axes: tuple[int, ...] = ()) -> np.ndarray:
        exponents, coefficients = self._derivative(axes)
        x = np.asarray(x, dtype=float)
        monomials = np.prod(x[..., None, :] ** exponents, axis=-1)
        return monomials @ coefficients

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.stack([self.evaluate(x, (a,)) for a in range(3)], axis=-1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.stack([self.evaluate(x, (a, b)) for b in range(3)], axis=-1) for a in range(3)], axis=-2
        )


def _monomials(degree: int) -> list[tuple[int, int, int]]:
    return [(a, b, degree - a - b) for a in range(degree, -1, -1) for b in range(degree - a, -1, -1)]


def harmonic_basis(degree: int) -> list[HarmonicPolynomial]:
    """A basis of the 2 degree + 1 harmonic homogeneous polynomials of the given degree."""
    source = _monomials(degree)
    if degree < 2:
        return [HarmonicPolynomial(source, row) for row in np.eye(len(source))]
    target = {e: i for i, e in enumerate(_monomials(degree - 2))}
    laplacian = np.zeros((len(target), len(source)))
    for j, e in enumerate(source):
        for axis in range(3):
            if e[axis] >= 2:
                reduced = list(e)
                reduced[axis] -= 2
                laplacian[target[tuple(reduced)], j] += e[axis] * (e[axis] - 1)
    kernel = null_space(laplacian)
    return [HarmonicPolynomial(source, column) for column in kernel.T]


_epsilon = np.zeros((3, 3, 3))
for _i, _j, _k in itertools.permutations(range(3)):
    _epsilon[_i, _j, _k] = np.linalg.det(np.eye(3)[[_i, _j, _k]])


def _double_factorial(n: int) -> int:
    return prod(range(n, 0, -2)) if n > 0 else 1


class ToroidalMode:
    """phi = j_l(k r) r^{-l} (x cross grad P), divergence free with zero pressure."""

    dimension = 3

    def __init__(self, k: float, polynomial: HarmonicPolynomial, scale: float = 1.0, label: str = "") -> None:
        if k <= 0:
            raise DomainError(f"toroidal modes need a positive wavenumber, got {k!r}")
        self.k = float(k)
        self.l = polynomial.degree
        self.polynomial = polynomial
        self.scale = scale
        self.label = label

    def __repr__(self) -> str:
        return f"<stokespec.ToroidalMode {self.label} l={self.l} k={self.k:.10g}>"

    @property
    def eigenvalue(self) -> float:
        return self.k**2

    def scaled(self, factor: float) -> ToroidalMode:
        return ToroidalMode(self.k, self.polynomial, self.scale * factor, self.label)

    def _radial(self, r: np.ndarray):
        """g, g', g'' of g(r) = j_l(k r) r^{-l}."""
        l, k = self.l, self.k
        r = np.where(r > 0, r, 1e-12)
        u = k * r
        j = spherical_jn(l, u)
        jp = spherical_jn(l, u, derivative=True)
        jpp = -2 / u * jp - (1 - l * (l + 1) / u**2) * j
        g = j * r**-l
        g1 = k * jp * r**-l - l * j * r ** (-l - 1)
        g2 = k * k * jpp * r**-l - 2 * l * k * jp * r ** (-l - 1) + l * (l + 1) * j * r ** (-l - 2)
        return g, g1, g2

    def _q(self, x: np.ndarray) -> np.ndarray:
        return np.cross(x, self.polynomial.gradient(x))

    def _q_gradient(self, x: np.ndarray) -> np.ndarray:
        grad_p = self.polynomial.gradient(x)
        hess_p = self.polynomial.hessian(x)
        return np.einsum("iak,...k->...ia", _epsilon, grad_p) + np.einsum("ijk,...j,...ak->...ia", _epsilon, x, hess_p)

    def velocity(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g, _, _ = self._radial(np.linalg.norm(x, axis=-1))
        return self.scale * g[..., None] * self._q(x)

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        """[..., i, a] = d_a phi_i."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        g, g1, _ = self._radial(r)
        dq = self._q_gradient(x)
        radial = np.where(r > 0, g1 / np.where(r > 0, r, 1.0), 0.0)
        return self.scale * (
            np.einsum("...,...i,...a->...ia", radial, self._q(x), x) + g[..., None, None] * dq
        )

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        g, g1, g2 = self._radial(r)
        factor = g2 + (2 * self.l + 2) * g1 / np.where(r > 0, r, 1e-12)
        return self.scale * factor[..., None] * self._q(x)

    def pressure(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1])

    def pressure_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x))

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return np.trace(self.velocity_gradient(x), axis1=-2, axis2=-1)

    def conormal_trace(self, x: np.ndarray) -> np.ndarray:
        """(k j_l'(k) - j_l(k)) Q on the unit sphere, the exact conormal derivative."""
        k, l = self.k, self.l
        factor = k * spherical_jn(l, k, derivative=True) - spherical_jn(l, k)
        return self.scale * factor * self._q(np.asarray(x, dtype=float))

    def neumann_field(self) -> NeumannTrace:
        """d phi/dn = k j_l'(k) Q on the unit sphere, extended off it as a homogeneous field."""
        factor = self.scale * self.k * spherical_jn(self.l, self.k, derivative=True)
        return NeumannTrace(self, factor)


class NeumannTrace:
    """factor * Q(x) with its exact gradient."""

    dimension = 3

    def __init__(self, mode: ToroidalMode, factor: float) -> None:
        self.mode = mode
        self.factor = factor

    def __repr__(self) -> str:
        return f"<stokespec.NeumannTrace of {self.mode!r}>"

    def velocity(self, x: np.ndarray) -> np.ndarray:
        return self.factor * self.mode._q(np.asarray(x, dtype=float))

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.factor * self.mode._q_gradient(np.asarray(x, dtype=float))


def ball_rule(n_r: int = 24, n_theta: int = 16, n_phi: int = 32) -> VolumeRule:
    r, w_r = gauss_rule(n_r, 0.0, 1.0)
    surface = Surface.sphere(1.0, (n_theta, n_phi))
    nodes, _, w_s = surface.panelization
    points = (r[:, None, None] * nodes[None, :, :]).reshape(-1, 3)
    weights = (w_r[:, None] * r[:, None] ** 2 * w_s[None, :]).ravel()
    return VolumeRule(points, weights)


def _orthonormal_toroidal(k: float, degree: int, label: str) -> list[ToroidalMode]:
    """Toroidal modes of one degree, L2-orthonormal on the ball in a fixed polynomial order."""
    basis = harmonic_basis(degree)
    sphere = Surface.sphere(1.0, (degree + 8, 2 * degree + 16))
    nodes, _, w = sphere.panelization
    Q = np.stack([np.cross(nodes, P.gradient(nodes)) for P in basis])
    gram = np.einsum("m,ami,bmi->ab", w, Q, Q)
    r, w_r = gauss_rule(40, 0.0, 1.0)
    mode = ToroidalMode(k, basis[0])
    g, _, _ = mode._radial(r)
    radial = np.sum(w_r * g**2 * r ** (2 * degree + 2))
    transform = np.linalg.inv(np.linalg.cholesky(gram)).T
    modes = []
    for index, column in enumerate(transform.T):
        coefficients = sum(c * P.coefficients for c, P in zip(column, basis))
        polynomial = HarmonicPolynomial(basis[0].exponents, coefficients)
        modes.append(ToroidalMode(k, polynomial, 1 / np.sqrt(radial), f"{label} m={index}"))
    return modes


def spherical_bessel_zeros(l: int, count: int) -> np.ndarray:
    zeros = []
    step = 0.05
    a = l + 0.5
    while len(zeros) < count:
        b = a + step
        if spherical_jn(l, a) * spherical_jn(l, b) < 0:
            zeros.append(brentq(lambda u: spherical_jn(l, u), a, b, xtol=1e-15))
        a = b
    return np.array(zeros)


def toroidal_data(l: int, lam: float, index: int = 0) -> ToroidalMode:
    """A Brinkman solution j_l(sqrt(lam) r) r^{-l} Q with nonzero Dirichlet data on the unit sphere."""
    if lam <= 0:
        raise DomainError(f"toroidal data need lambda > 0, got {lam!r}")
    basis = harmonic_basis(l)
    return ToroidalMode(np.sqrt(lam), basis[index % len(basis)], label=f"data l={l}")


# spectra


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    mode: StreamMode | ToroidalMode
    cluster: int
    label: str = ""

    def __repr__(self) -> str:
        return f"<stokespec.EigenPair {self.label} lambda={self.eigenvalue:.10g} cluster={self.cluster}>"

    @property
    def dimension(self) -> int:
        return self.mode.dimension

    def velocity(self, x: np.ndarray) -> np.ndarray:
        return self.mode.velocity(x)

    def pressure(self, x: np.ndarray) -> np.ndarray:
        return self.mode.pressure(x)


@dataclass(frozen=True)
class Spectrum:
    pairs: tuple[EigenPair, ...]
    rtol: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        values = self.eigenvalues
        if np.any(np.diff(values) < 0):
            raise InputError("spectrum must be nondecreasing")

    def __repr__(self) -> str:
        return f"<stokespec.Spectrum {len(self.pairs)} eigenvalues in {len(self.clusters)} clusters>"

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> EigenPair:
        return self.pairs[index]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([pair.eigenvalue for pair in self.pairs])

    @property
    def clusters(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for index, pair in enumerate(self.pairs):
            groups.setdefault(pair.cluster, []).append(index)
        return list(groups.values())

    def multiplicities(self) -> list[int]:
        return [len(group) for group in self.clusters]

    def cluster(self, index: int) -> list[EigenPair]:
        """All pairs in the cluster that contains pair number index."""
        target = self.pairs[index].cluster
        return [pair for pair in self.pairs if pair.cluster == target]

    def to_json(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "clusters": [
                {"eigenvalue": float(self.pairs[g[0]].eigenvalue), "multiplicity": len(g), "members": g}
                for g in self.clusters
            ],
            "rtol": self.rtol,
            "labels": [pair.label for pair in self.pairs],
        }


def _build_spectrum(entries: list[tuple[float, object, str]], rtol: float, **diagnostics) -> Spectrum:
    entries = sorted(entries, key=lambda entry: entry[0])
    ids = cluster_eigenvalues([entry[0] for entry in entries], rtol)
    pairs = tuple(EigenPair(value, mode, cid, label) for (value, mode, label), cid in zip(entries, ids))
    logger.info("spectrum with %d eigenvalues in %d clusters", len(pairs), len(set(ids)))
    return Spectrum(pairs, rtol, diagnostics)


def disk_spectrum_2d(n_max: int, k_max: int, rtol: float = CLUSTER_RTOL_ANALYTIC) -> Spectrum:
    """lambda = j_{n+1,k}^2, double for n >= 1."""
    if n_max < 0 or k_max < 1:
        raise InputError(f"need n_max >= 0 and k_max >= 1, got {(n_max, k_max)!r}")
    entries = []
    for n in range(n_max + 1):
        for k in range(1, k_max + 1):
            for parity in ("cos", "sin") if n else ("cos",):
                mode = disk_mode(n, k, parity)
                entries.append((mode.eigenvalue, mode, mode.label))
    return _build_spectrum(entries, rtol)


def ball_toroidal_spectrum_3d(l_max: int, k_max: int, rtol: float = CLUSTER_RTOL_ANALYTIC) -> Spectrum:
    """lambda = alpha_{l,k}^2 with alpha the zeros of j_l, multiplicity 2l + 1."""
    if l_max < 1 or k_max < 1:
        raise InputError(f"need l_max >= 1 and k_max >= 1, got {(l_max, k_max)!r}")
    entries = []
    for l in range(1, l_max + 1):
        for k, alpha in enumerate(spherical_bessel_zeros(l, k_max), start=1):
            for mode in _orthonormal_toroidal(alpha, l, f"toroidal l={l} k={k}"):
                entries.append((mode.eigenvalue, mode, mode.label))
    return _build_spectrum(entries, rtol)


# perturbed disk by particular solutions


@dataclass(frozen=True)
class StarDomain:
    """rho < 1 + t g(theta)."""

    g: Callable[[np.ndarray], np.ndarray]
    t: float

    def radius(self, theta: np.ndarray) -> np.ndarray:
        return 1 + self.t * self.g(np.asarray(theta, dtype=float))

    def radius_derivative(self, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
        return (self.radius(theta + h) - self.radius(theta - h)) / (2 * h)

    def check(self, samples: int = 2048) -> None:
        theta, _ = periodic_rule(samples)
        if np.min(self.radius(theta)) <= 0:
            raise DomainError("radial perturbation is not a diffeomorphism of the disk")

    def boundary(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Boundary points and outward unit normals."""
        r = self.radius(theta)
        dr = self.radius_derivative(theta)
        c, s = np.cos(theta), np.sin(theta)
        points = np.stack([r * c, r * s], axis=-1)
        tangent = np.stack([dr * c - r * s, dr * s + r * c], axis=-1)
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1)
        return points, normal / np.linalg.norm(normal, axis=-1, keepdims=True)

    def rule(self, n_r: int = 40, n_theta: int = 128) -> VolumeRule:
        return star_rule(self.radius, n_r, n_theta)


def _basis(alpha: float, terms: int) -> list[_Expansion]:
    basis = []
    for n in range(terms + 1):
        for weight in (1.0, -1j) if n else (1.0,):
            basis.append(_Expansion(alpha, {n: weight}))
            basis.append(_Expansion(alpha, poly={n: weight}))
    return basis


class _ParticularSolutions:
    def __init__(self, domain: StarDomain, terms: int) -> None:
        self.domain = domain
        self.terms = terms
        p = 2 * (2 * terms + 1)
        theta, _ = periodic_rule(p + 16)
        self.points, self.normals = domain.boundary(theta)
        ring, _ = periodic_rule(24)
        interior = [s * domain.radius(ring)[:, None] * np.stack([np.cos(ring), np.sin(ring)], -1) for s in (0.3, 0.6)]
        self.interior = np.concatenate(interior)

    def _matrix(self, alpha: float):
        basis = _basis(alpha, self.terms)
        columns_b, columns_i = [], []
        for E in basis:
            value = np.real(E(self.points))
            normal = np.real(E.dx()(self.points)) * self.normals[:, 0] + np.real(E.dy()(self.points)) * self.normals[:, 1]
            columns_b.append(np.concatenate([value, normal / alpha]))
            columns_i.append(np.real(E(self.interior)))
        return basis, np.array(columns_b).T, np.array(columns_i).T

    def singular_values(self, alpha: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
        basis, B, I = self._matrix(alpha)
        Q, R = qr(np.vstack([B, I]), mode="economic")
        _, s, vt = svd(Q[: len(B)])
        return s[::-1], vt[::-1], R, basis

    def mode(self, alpha: float, vector: np.ndarray, R: np.ndarray, basis: list, label: str) -> StreamMode:
        coefficients = np.linalg.solve(R, vector)
        expansion = sum((E * c for c, E in zip(coefficients[1:], basis[1:])), basis[0] * coefficients[0])
        return _normalized(StreamMode(expansion, label), self.domain.rule())


def _local_minima(values: np.ndarray) -> list[int]:
    return [i for i in range(1, len(values) - 1) if values[i] <= values[i - 1] and values[i] <= values[i + 1]]


def perturbed_disk_spectrum(
    g: Callable[[np.ndarray], np.ndarray],
    t: float,
    n_eigs: int = 6,
    terms: int = 20,
    scan: int = 60,
    rtol: float = CLUSTER_RTOL_PERTURBED,
    accept: float = 1e-6,
) -> Spectrum:
    """
    Stokes eigenvalues of the domain rho < 1 + t g(theta) by particular solutions:
    minima of the smallest boundary singular value of the basis, orthogonalized against
    interior samples, searched in windows around the disk eigenvalues.
    """
    domain = StarDomain(g, t)
    domain.check()
    theta, _ = periodic_rule(512)
    amplitude = float(np.max(np.abs(g(theta))))
    width = 2 * abs(t) * amplitude + 1e-4

    reference = disk_spectrum_2d(4, 3)
    solver = _ParticularSolutions(domain, terms)
    entries = []
    for group in reference.clusters:
        if len(entries) >= n_eigs:
            break
        alpha0 = np.sqrt(reference.pairs[group[0]].eigenvalue)
        grid = np.linspace(alpha0 * (1 - width), alpha0 * (1 + width), scan)
        sigma = np.array([solver.singular_values(a)[0][0] for a in grid])
        found = []
        for i in sorted(_local_minima(sigma), key=lambda i: sigma[i]):
            result = minimize_scalar(
                lambda a: solver.singular_values(a)[0][0] ** 2,
                bounds=(grid[i - 1], grid[i + 1]),
                method="bounded",
                options={"xatol": 1e-14 * alpha0, "maxiter": 500},
            )
            s, vt, R, basis = solver.singular_values(result.x)
            if s[0] > accept:
                continue
            small = [j for j in range(len(group)) if s[j] <= max(accept, 1e3 * s[0])]
            found.extend((result.x, vt[j], R, basis) for j in small)
            if len(found) >= len(group):
                break
        if len(found) < len(group):
            raise ConvergenceError(
                f"found {len(found)} of {len(group)} eigenvalues near {alpha0**2:.6g}",
                {"window": (grid[0], grid[-1]), "sigma": sigma.tolist()},
            )
        for index, (alpha, vector, R, basis) in enumerate(found[: len(group)]):
            mode = solver.mode(alpha, vector, R, basis, f"star t={t:g} near {alpha0**2:.6g} #{index}")
            entries.append((alpha**2, mode, mode.label))
        logger.debug("cluster near %.8g resolved into %s", alpha0**2, [f"{a**2:.10g}" for a, *_ in found])

    return _build_spectrum(entries[:n_eigs], rtol, t=t, terms=terms)


def spectrum_refinement(g, t: float, n_eigs: int = 6, terms: Sequence[int] = (16, 24)) -> float:
    """Largest relative eigenvalue change between two basis sizes."""
    coarse, fine = (perturbed_disk_spectrum(g, t, n_eigs, n).eigenvalues for n in terms)
    return float(np.max(np.abs(fine - coarse) / fine))


# traces and identities


def neumann_trace(pair: EigenPair | StreamMode | ToroidalMode, surface: Surface) -> np.ndarray:
    """d phi / dn at the surface nodes; the full boundary gradient is (d phi/dn) n^T."""
    mode = pair.mode if isinstance(pair, EigenPair) else pair
    nodes, normals, _ = surface.panelization
    if nodes.shape[-1] != mode.dimension:
        raise InputError(f"a {mode.dimension}D field cannot be traced on a {surface.kind}")
    return np.einsum("mij,mj->mi", mode.velocity_gradient(nodes), normals)


def align_sign(mode, reference, rule: VolumeRule):
    """Flip mode so that its overlap with reference is nonnegative."""
    overlap = np.sum(rule.weights * np.sum(mode.velocity(rule.points) * reference.velocity(rule.points), axis=-1))
    return mode if overlap >= 0 else mode.scaled(-1.0)


def dirichlet_energy(mode, rule: VolumeRule) -> float:
    """int |grad phi|^2, equal to lambda for a normalized eigenfield."""
    grad = mode.velocity_gradient(rule.points)
    return float(np.sum(rule.weights * np.sum(grad**2, axis=(-2, -1))))


def l2_norm(mode, rule: VolumeRule) -> float:
    return float(np.sqrt(np.sum(rule.weights * np.sum(mode.velocity(rule.points) ** 2, axis=-1))))


def gram_matrix(modes: Sequence, rule: VolumeRule) -> np.ndarray:
    values = np.stack([mode.velocity(rule.points) for mode in modes])
    return np.einsum("m,ami,bmi->ab", rule.weights, values, values)


def stokes_residual(mode, x: np.ndarray) -> float:
    """max |-(Delta + lambda) phi + grad p|."""
    residual = -mode.laplacian(x) - mode.eigenvalue * mode.velocity(x) + mode.pressure_gradient(x)
    return float(np.max(np.abs(residual)))


def _strain(grad: np.ndarray) -> np.ndarray:
    return grad + np.swapaxes(grad, -1, -2)


def green_identity_residual(a, b, eta: float = 1.0, volume: VolumeRule | None = None, boundary: Surface | None = None) -> GreenResidual:
    """
    Residuals of the two Green formulas on the unit ball (or disk),

        int a . db/dnu = int grad a : grad b + int a . (Delta b - grad q),
        int a . db/dnu - int b . da/dnu = int a . ((Delta + eta) b - grad q) - int b . ((Delta + eta) a - grad p),

    with grad a : grad b = (1/2) (grad a + grad a^T) . (grad b + grad b^T).
    """
    three = a.dimension == 3
    volume = volume or (ball_rule() if three else star_rule(_unit_disk))
    boundary = boundary or (Surface.sphere(1.0, (24, 48)) if three else Surface.circle(1.0, 256))
    nodes, normals, w = boundary.panelization
    x, v = volume

    def conormal(mode):
        return np.einsum("mij,mj->mi", _strain(mode.velocity_gradient(nodes)), normals) - mode.pressure(nodes)[:, None] * normals

    def bulk(mode):
        return mode.laplacian(x) + eta * mode.velocity(x) - mode.pressure_gradient(x)

    a_n, b_n = conormal(a), conormal(b)
    boundary_ab = np.sum(w * np.sum(a.velocity(nodes) * b_n, axis=-1))
    boundary_ba = np.sum(w * np.sum(b.velocity(nodes) * a_n, axis=-1))
    strain = 0.5 * np.sum(_strain(a.velocity_gradient(x)) * _strain(b.velocity_gradient(x)), axis=(-2, -1))
    div_term = np.sum(a.velocity(x) * (b.laplacian(x) - b.pressure_gradient(x)), axis=-1)
    first = boundary_ab - np.sum(v * strain) - np.sum(v * div_term)
    second = (boundary_ab - boundary_ba) - (
        np.sum(v * np.sum(a.velocity(x) * bulk(b), axis=-1)) - np.sum(v * np.sum(b.velocity(x) * bulk(a), axis=-1))
    )
    return GreenResidual(float(first), float(second))
