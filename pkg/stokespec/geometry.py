from __future__ import annotations

import functools
import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, lpmv

from ._constants import DEFAULT_DELTA, ON_SURFACE_TOL, SurfaceKind
from ._utils import composite_gauss_rule, gauss_rule, periodic_rule, tangent_frame, unit
from .exceptions import DomainError, InputError

logger = logging.getLogger("stokespec")

Panelization = namedtuple("Panelization", ["nodes", "normals", "weights"])

NEWTON_STEPS = 50
HARMONIC_STEP = 1e-6

_Y00 = 0.5 / np.sqrt(np.pi)
_Y1 = np.sqrt(3 / (4 * np.pi))
_Y2 = 0.5 * np.sqrt(15 / np.pi)


def _harmonic_polynomial(l: int, m: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Real orthonormal Y_lm, l <= 2, as c + a.w + w^T A w on the unit sphere."""
    c, a, A = 0.0, np.zeros(3), np.zeros((3, 3))
    if (l, m) == (0, 0):
        c = _Y00
    elif l == 1:
        a[{-1: 1, 0: 2, 1: 0}[m]] = _Y1
    elif (l, m) == (2, -2):
        A[0, 1] = A[1, 0] = _Y2 / 2
    elif (l, m) == (2, -1):
        A[1, 2] = A[2, 1] = _Y2 / 2
    elif (l, m) == (2, 0):
        A[:] = np.diag([-1.0, -1.0, 2.0]) * 0.25 * np.sqrt(5 / np.pi)
    elif (l, m) == (2, 1):
        A[0, 2] = A[2, 0] = _Y2 / 2
    else:
        A[:] = np.diag([1.0, -1.0, 0.0]) * _Y2 / 2
    return c, a, A


def real_harmonic(l: int, m: int, w: np.ndarray) -> np.ndarray:
    """
    Real orthonormal Y_lm at the directions w, cos(m phi) for m > 0 and sin(|m| phi) for
    m < 0, with the Condon-Shortley phase removed so that Y_11 = sqrt(3/4pi) w_x.
    """
    w = unit(np.asarray(w, dtype=float))
    order = abs(m)
    norm = np.sqrt((2 * l + 1) / (4 * np.pi) * np.exp(gammaln(l - order + 1) - gammaln(l + order + 1)))
    legendre = (-1) ** order * lpmv(order, l, np.clip(w[..., 2], -1.0, 1.0))
    if m == 0:
        return norm * legendre
    phi = np.arctan2(w[..., 1], w[..., 0])
    trig = np.cos(order * phi) if m > 0 else np.sin(order * phi)
    return np.sqrt(2) * norm * legendre * trig


def _check_harmonic(l: int, m: int) -> None:
    if l < 0 or abs(m) > l:
        raise InputError(f"no spherical harmonic with (l, m) = {(l, m)!r}")


class Surface:
    """
    Closed analytic surfaces (sphere, star-shaped perturbations of it), the unit circle
    for the planar problems and an unbounded flat plane used as an exact local model.
    """

    def __init__(
        self,
        kind: SurfaceKind,
        radius: float = 1.0,
        harmonics: Mapping[tuple[int, int], float] | None = None,
        resolution: tuple[int, int] = (24, 48),
    ) -> None:
        if kind not in {"sphere", "flat", "star", "circle"}:
            raise InputError(f"unknown surface kind {kind!r}")
        if radius <= 0:
            raise DomainError(f"radius must be positive, got {radius!r}")

        self.kind = kind
        self.radius = float(radius)
        self.harmonics = dict(harmonics or {})
        self.resolution = tuple(resolution)

        self._c, self._a, self._A = 0.0, np.zeros(3), np.zeros((3, 3))
        self._higher = []
        for (l, m), weight in self.harmonics.items():
            _check_harmonic(l, m)
            if l > 2:
                self._higher.append((l, m, weight))
                continue
            c, a, A = _harmonic_polynomial(l, m)
            self._c += weight * c
            self._a = self._a + weight * a
            self._A = self._A + weight * A

        if kind == "star" and not self._star_is_valid():
            raise DomainError("star surface radius is not positive everywhere")

    @classmethod
    def sphere(cls, radius: float = 1.0, resolution: tuple[int, int] = (24, 48)) -> Surface:
        return cls("sphere", radius, resolution=resolution)

    @classmethod
    def star(
        cls,
        harmonics: Mapping[tuple[int, int], float],
        radius: float = 1.0,
        resolution: tuple[int, int] = (24, 48),
    ) -> Surface:
        """
        r(w) = R (1 + sum c_lm Y_lm(w)) for real orthonormal harmonics keyed by (l, m).
        Degrees up to 2 are evaluated as exact polynomials, higher degrees through the
        associated Legendre functions with finite-difference tangential gradients.
        """
        return cls("star", radius, harmonics, resolution)

    @classmethod
    def flat(cls) -> Surface:
        return cls("flat")

    @classmethod
    def circle(cls, radius: float = 1.0, nodes: int = 256) -> Surface:
        return cls("circle", radius, resolution=(nodes, 1))

    def __repr__(self) -> str:
        return f"<stokespec.Surface {self.kind} R={self.radius:g} resolution={self.resolution}>"

    def with_resolution(self, resolution: tuple[int, int]) -> Surface:
        return Surface(self.kind, self.radius, self.harmonics, resolution)

    @property
    def closed(self) -> bool:
        return self.kind != "flat"

    @property
    def dimension(self) -> int:
        return 2 if self.kind == "circle" else 3

    def _star_is_valid(self) -> bool:
        cos_t, _ = gauss_rule(16)
        phi, _ = periodic_rule(32)
        w = _sphere_points(cos_t, phi)
        return bool(np.all(self.radial_function(w) > 0))

    # radial description, w = unit direction
    def radial_function(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.kind in {"sphere", "circle"}:
            return np.full(w.shape[:-1], self.radius)
        if self.kind == "flat":
            raise DomainError("the flat plane has no radial description")
        polynomial = self._c + w @ self._a + np.einsum("...i,ij,...j->...", w, self._A, w)
        return self.radius * (1 + polynomial + self._higher_part(w))

    def _higher_part(self, w: np.ndarray) -> np.ndarray:
        total = np.zeros(np.shape(w)[:-1])
        for l, m, weight in self._higher:
            total = total + weight * real_harmonic(l, m, w)
        return total

    def radial_gradient(self, w: np.ndarray) -> np.ndarray:
        """Tangential gradient of the radius function on the unit sphere."""
        w = np.asarray(w, dtype=float)
        if self.kind != "star":
            return np.zeros_like(w)
        ambient = self.radius * (self._a + 2 * w @ self._A)
        if self._higher:
            # the degree-0 extension of the higher harmonics has a tangential gradient
            steps = HARMONIC_STEP * np.eye(3)
            ambient = ambient + self.radius * np.stack(
                [(self._higher_part(w + e) - self._higher_part(w - e)) / (2 * HARMONIC_STEP) for e in steps],
                axis=-1,
            )
        return ambient - np.einsum("...i,...i->...", ambient, w)[..., None] * w

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Signed radial distance, zero on the surface."""
        x = np.asarray(x, dtype=float)
        if self.kind == "flat":
            return x[..., 2]
        rho = np.linalg.norm(x, axis=-1)
        return rho - self.radial_function(x / rho[..., None])

    def on_surface(self, x: np.ndarray, tol: float = ON_SURFACE_TOL) -> np.ndarray:
        return np.abs(self.distance(x)) <= tol * max(self.radius, 1.0)

    def normal_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "flat":
            return np.broadcast_to(np.array([0.0, 0.0, 1.0]), x.shape).copy()
        w = unit(x)
        return unit(self.radial_function(w)[..., None] * w - self.radial_gradient(w))

    def point(self, w: np.ndarray) -> np.ndarray:
        w = unit(np.asarray(w, dtype=float))
        return self.radial_function(w)[..., None] * w

    def area_element(self, w: np.ndarray) -> np.ndarray:
        """d sigma / d omega."""
        r = self.radial_function(w)
        grad = self.radial_gradient(w)
        return r * np.sqrt(r**2 + np.einsum("...i,...i->...", grad, grad))

    @functools.cached_property
    def panelization(self) -> Panelization:
        """Gauss-Legendre in cos(theta) times trapezoid in phi; trapezoid on the circle."""
        if self.kind == "flat":
            raise DomainError("the flat plane cannot be panelized")

        if self.kind == "circle":
            angles, weights = periodic_rule(self.resolution[0])
            nodes = self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
            return Panelization(nodes, nodes / self.radius, weights * self.radius)

        n_theta, n_phi = self.resolution
        cos_t, w_t = gauss_rule(n_theta)
        phi, w_phi = periodic_rule(n_phi)
        w = _sphere_points(cos_t, phi)
        weights = (w_t[:, None] * w_phi[None, :]).ravel() * self.area_element(w)
        return Panelization(self.point(w), self.normal_at(self.point(w)), weights)

    @property
    def area(self) -> float:
        return float(np.sum(self.panelization.weights))

    @property
    def size(self) -> int:
        return len(self.panelization.weights)

    def polar_rule(
        self, x: np.ndarray, n_phi: int = 64, breakpoints: Sequence[float] | None = None, n_s: int = 16
    ) -> Panelization:
        """
        Rule centred at the surface point x: spherical coordinates whose pole is x/|x|,
        composite Gauss-Legendre in the polar angle s, symmetric trapezoid in phi.
        The weight sin(s) cancels a 1/|x - y| singularity and the symmetric phi rule
        turns odd 1/|x - y|^2 terms into principal values.
        """
        if self.kind not in {"sphere", "star"}:
            raise DomainError(f"polar rules need a closed surface, got {self.kind!r}")
        if n_phi % 2:
            raise InputError(f"polar rule needs an even angular count, got {n_phi!r}")

        pole = unit(np.asarray(x, dtype=float))
        t1, t2 = tangent_frame(pole)
        s, w_s = composite_gauss_rule(breakpoints or [0.0, np.pi], n_s)
        phi, w_phi = periodic_rule(n_phi, offset=np.pi / n_phi)
        S, P = np.meshgrid(s, phi, indexing="ij")
        w = (
            np.cos(S)[..., None] * pole
            + np.sin(S)[..., None] * (np.cos(P)[..., None] * t1 + np.sin(P)[..., None] * t2)
        ).reshape(-1, 3)
        weights = (w_s[:, None] * np.sin(s)[:, None] * w_phi[None, :]).ravel() * self.area_element(w)
        nodes = self.point(w)
        return Panelization(nodes, self.normal_at(nodes), weights)


def _sphere_points(cos_t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    sin_t = np.sqrt(1 - cos_t**2)
    return np.stack(
        [
            (sin_t[:, None] * np.cos(phi)[None, :]).ravel(),
            (sin_t[:, None] * np.sin(phi)[None, :]).ravel(),
            np.repeat(cos_t, len(phi)),
        ],
        axis=-1,
    )


class SurfaceChart:
    """Graph chart h_x(eta) = x + eta_1 t_1 + eta_2 t_2 - nu_x(eta) n_x around a base point."""

    def __init__(self, surface: Surface, x: np.ndarray, delta: float = DEFAULT_DELTA) -> None:
        self.surface = surface
        self.x = np.asarray(x, dtype=float)
        self.delta = float(delta)
        self.normal = surface.normal_at(self.x)
        self.t1, self.t2 = tangent_frame(self.normal)
        self.frame = np.stack([self.t1, self.t2], axis=-1)
        self.curvature = self._curvature()

    def __repr__(self) -> str:
        return f"<stokespec.SurfaceChart at {np.round(self.x, 6).tolist()} on {self.surface.kind}>"

    @property
    def radius(self) -> float:
        return 2 * self.delta

    def _check(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if self.surface.kind != "flat" and np.any(np.linalg.norm(eta, axis=-1) > self.radius * (1 + 1e-12)):
            raise DomainError(f"point outside the chart disk of radius {self.radius:g}")
        return eta

    def height(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        kind = self.surface.kind
        if kind == "flat":
            return np.zeros(eta.shape[:-1])
        if kind == "sphere":
            R = self.surface.radius
            return R - np.sqrt(R**2 - np.einsum("...i,...i->...", eta, eta))
        return self._newton_height(eta)

    def _newton_height(self, eta: np.ndarray) -> np.ndarray:
        base = self.x + eta @ self.frame.T
        nu = np.zeros(eta.shape[:-1])
        for _ in range(NEWTON_STEPS):
            p = base - nu[..., None] * self.normal
            rho = np.linalg.norm(p, axis=-1)
            w = p / rho[..., None]
            value = rho - self.surface.radial_function(w)
            grad = w - self.surface.radial_gradient(w) / rho[..., None]
            step = value / -(grad @ self.normal)
            nu = nu - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        return nu

    def point(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return self.x + eta @ self.frame.T - self.height(eta)[..., None] * self.normal

    def surface_normal(self, eta: np.ndarray) -> np.ndarray:
        return self.surface.normal_at(self.point(eta))

    def height_gradient(self, eta: np.ndarray) -> np.ndarray:
        """nu_x'(eta) embedded in the tangent plane: n_y / <n_x, n_y> - n_x."""
        n_y = self.surface_normal(eta)
        return n_y / (n_y @ self.normal)[..., None] - self.normal

    def _curvature(self) -> np.ndarray:
        kind = self.surface.kind
        if kind == "flat":
            return np.zeros((2, 2))
        if kind == "sphere":
            return np.eye(2) / self.surface.radius
        return _hessian(self.height, 0.05)

    def project(self, y: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
        """h_x^{-1}(y) and a mask of the points that really lie on the chart sheet."""
        y = np.asarray(y, dtype=float)
        eta = (y - self.x) @ self.frame
        if self.surface.kind == "flat":
            return eta, np.abs((y - self.x) @ self.normal) <= tol
        inside = np.linalg.norm(eta, axis=-1) <= self.radius
        safe = np.where(inside[..., None], eta, 0.0)
        back = self.point(safe)
        valid = inside & (np.linalg.norm(back - y, axis=-1) <= tol * max(self.surface.radius, 1.0))
        return eta, valid


def _hessian(func, h: float) -> np.ndarray:
    """Hessian at 0 by central differences with one Richardson step."""

    def central(step):
        H = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                e_i, e_j = np.eye(2)[i] * step, np.eye(2)[j] * step
                H[i, j] = (
                    func(e_i + e_j) - func(e_i - e_j) - func(e_j - e_i) + func(-e_i - e_j)
                ) / (4 * step * step)
        return H

    H = (4 * central(h / 2) - central(h)) / 3
    return (H + H.T) / 2


def chart_at(surface: Surface, x: np.ndarray, delta: float = DEFAULT_DELTA) -> SurfaceChart:
    x = np.asarray(x, dtype=float)
    if surface.kind == "circle":
        raise DomainError("charts are defined on surfaces in three dimensions")
    if not surface.on_surface(x):
        raise DomainError(f"point {x.tolist()!r} is not on the surface")
    return SurfaceChart(surface, x, delta)


def normal_inner_product(chart: SurfaceChart, eta: np.ndarray) -> np.ndarray:
    eta = chart._check(eta)
    grad = chart.height_gradient(eta)
    return 1 / np.sqrt(1 + np.einsum("...i,...i->...", grad, grad))


def chart_jacobian(chart: SurfaceChart, eta: np.ndarray) -> np.ndarray:
    return 1 / normal_inner_product(chart, eta)


def cutoff(rho: np.ndarray, delta: float) -> np.ndarray:
    """1 on [0, 3 delta/2], 0 beyond 2 delta, exp(1 - 1/(1 - s^2)) in between."""
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - 1.5 * delta) / (0.5 * delta), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        inner = np.exp(1 - 1 / (1 - s**2))
    return np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, inner))


def cutoff_derivative(rho: np.ndarray, delta: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - 1.5 * delta) / (0.5 * delta), 0.0, 1.0)
    inside = (s > 0) & (s < 1)
    safe = np.where(inside, s, 0.5)
    value = cutoff(rho, delta) * (-2 * safe / (1 - safe**2) ** 2) * (2 / delta)
    return np.where(inside, value, 0.0)


def gaussian(eta: np.ndarray, eta0: np.ndarray, eps: float) -> np.ndarray:
    d = np.asarray(eta, dtype=float) - eta0
    return np.exp(-np.einsum("...i,...i->...", d, d) / eps**2) / eps**2


@dataclass(frozen=True)
class BumpVariation:
    chart: SurfaceChart
    eta0: np.ndarray
    eps: float
    truncated: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta0", np.asarray(self.eta0, dtype=float))
        if self.eps <= 0:
            raise DomainError(f"bump width must be positive, got {self.eps!r}")
        if np.linalg.norm(self.eta0) > self.eps * (1 + 1e-12):
            raise DomainError(f"bump offset {self.eta0.tolist()!r} exceeds its width {self.eps!r}")

    @classmethod
    def from_polar(
        cls, chart: SurfaceChart, eps: float, r0bar: float, theta0: float, truncated: bool = True
    ) -> BumpVariation:
        if not 0 <= r0bar <= 1:
            raise DomainError(f"relative offset must lie in [0, 1], got {r0bar!r}")
        eta0 = eps * r0bar * np.array([np.cos(theta0), np.sin(theta0)])
        return cls(chart, eta0, eps, truncated)

    def __repr__(self) -> str:
        return f"<stokespec.BumpVariation eps={self.eps:g} r0bar={self.r0bar:g} theta0={self.theta0:g}>"

    @property
    def delta(self) -> float:
        return self.chart.delta

    @property
    def r0bar(self) -> float:
        return float(np.linalg.norm(self.eta0) / self.eps)

    @property
    def theta0(self) -> float:
        return float(np.arctan2(self.eta0[1], self.eta0[0]))

    @property
    def eta0bar(self) -> np.ndarray:
        return self.eta0 / self.eps

    @property
    def peak(self) -> np.ndarray:
        return self.chart.point(self.eta0)

    def chart_value(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        value = gaussian(eta, self.eta0, self.eps)
        if self.truncated:
            value = value * cutoff(np.linalg.norm(eta, axis=-1), self.delta)
        return value

    def chart_gradient(self, eta: np.ndarray) -> np.ndarray:
        """Gradient of alpha * beta in chart coordinates."""
        eta = np.asarray(eta, dtype=float)
        alpha = gaussian(eta, self.eta0, self.eps)
        grad = -2 * (eta - self.eta0) / self.eps**2 * alpha[..., None]
        if not self.truncated:
            return grad
        rho = np.linalg.norm(eta, axis=-1)
        beta = cutoff(rho, self.delta)
        radial = np.where(rho[..., None] > 0, eta / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
        return grad * beta[..., None] + (alpha * cutoff_derivative(rho, self.delta))[..., None] * radial

    def surface_gradient(self, eta: np.ndarray) -> np.ndarray:
        """Tangential gradient of V_n at h_x(eta)."""
        eta = np.asarray(eta, dtype=float)
        g = self.chart_gradient(eta) @ self.chart.frame.T
        nu = self.chart.height_gradient(eta)
        scale = 1 + np.einsum("...i,...i->...", nu, nu)
        W = g - (np.einsum("...i,...i->...", g, nu) / scale)[..., None] * nu
        return W - np.einsum("...i,...i->...", W, nu)[..., None] * self.chart.normal

    def _support(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta, valid = self.chart.project(y)
        if self.truncated:
            valid = valid & (np.linalg.norm(eta, axis=-1) < 2 * self.delta)
        return eta, valid


def bump_value(v: BumpVariation, y: np.ndarray) -> np.ndarray:
    eta, valid = v._support(y)
    safe = np.where(valid[..., None], eta, 0.0)
    return np.where(valid, v.chart_value(safe), 0.0)


def bump_tangential_gradient(v: BumpVariation, y: np.ndarray) -> np.ndarray:
    eta, valid = v._support(y)
    safe = np.where(valid[..., None], eta, 0.0)
    return np.where(valid[..., None], v.surface_gradient(safe), 0.0)


def chart_polar_rule(
    center: np.ndarray, breakpoints: Sequence[float], n_rho: int = 20, n_phi: int = 128
) -> tuple[np.ndarray, np.ndarray]:
    """Polar rule in a chart plane around center: points (N, 2) and planar weights rho drho dphi."""
    rho, w_rho = composite_gauss_rule(breakpoints, n_rho)
    phi, w_phi = periodic_rule(n_phi, offset=np.pi / n_phi)
    R, P = np.meshgrid(rho, phi, indexing="ij")
    points = np.asarray(center, dtype=float) + np.stack([R * np.cos(P), R * np.sin(P)], axis=-1).reshape(-1, 2)
    weights = (w_rho * rho)[:, None] * w_phi[None, :]
    return points, weights.ravel()


def bump_breakpoints(eps: float, outer: float) -> list[float]:
    """Radial breakpoints resolving a Gaussian of width eps inside a disk of radius outer."""
    points = [0.0] + [c * eps for c in (0.5, 1, 2, 3, 5, 8) if c * eps < outer] + [outer]
    return points
