"""
Layer potentials of the Stokes and Brinkman systems on closed surfaces.

Two quadrature routes are used throughout:

- target-centred polar rules (``Surface.polar_rule``) for a single evaluation point,
  where the sin(s) weight absorbs 1/|x - y| and the symmetric angular rule turns the
  odd 1/|x - y|^2 parts of the hypersingular integrands into principal values;
- Nystrom sums over the global panelization for nodal densities and dense assemblies,
  with closed-surface singularity subtraction: the density value at the target is
  taken out of the sum and multiplied back by the polar-rule integral of the kernel.
"""

from __future__ import annotations

import json
import logging
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve as solve_linear

from ._constants import FD_STEP, KernelTag, _kernel_names
from .exceptions import ConvergenceError, DomainError, InputError
from .geometry import BumpVariation, Panelization, Surface, chart_polar_rule
from .kernels import (
    _second_conormal,
    adjoint_kernel,
    delta_lambda,
    double_layer_kernel,
    gamma_lambda,
    pressure_double_layer_kernel,
)

logger = logging.getLogger("stokespec")

LayerValue = namedtuple("LayerValue", ["velocity", "pressure"])
ConormalResult = namedtuple("ConormalResult", ["field", "defect", "term_norms"])


class HypersingularTerms(namedtuple("HypersingularTerms", ["A1", "A2", "A3", "A4", "A5"])):
    @property
    def total(self) -> np.ndarray:
        """4 pi E(alpha psi)(x)."""
        return np.sum(self, axis=0)

    def __repr__(self) -> str:
        return f"<stokespec.HypersingularTerms total={np.round(self.total, 8).tolist()}>"


# fields on a surface


class SurfaceField:
    """A scalar or vector field given by an ambient extension near the surface."""

    vector = True

    def value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, y: np.ndarray) -> np.ndarray:
        """Ambient gradient, [..., k, j] = d_j u_k for vector fields."""
        raise NotImplementedError

    def tangential_gradient(self, y: np.ndarray, normals: np.ndarray) -> np.ndarray:
        projector = np.eye(3) - np.einsum("...i,...j->...ij", normals, normals)
        grad = self.gradient(y)
        if self.vector:
            return grad @ projector
        return np.einsum("...j,...ji->...i", grad, projector)

    def __mul__(self, other: SurfaceField) -> ProductField:
        return ProductField(self, other)


class ConstantField(SurfaceField):
    def __init__(self, value) -> None:
        self.constant = np.asarray(value, dtype=float)
        self.vector = self.constant.ndim == 1

    def __repr__(self) -> str:
        return f"<stokespec.ConstantField {self.constant.tolist()}>"

    def value(self, y: np.ndarray) -> np.ndarray:
        shape = np.shape(y)[:-1] + self.constant.shape
        return np.broadcast_to(self.constant, shape).copy()

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(y)[:-1] + self.constant.shape + (3,))


class AffineField(SurfaceField):
    """u(y) = A y + b (vector) or a . y + b (scalar)."""

    def __init__(self, linear, offset=0.0) -> None:
        self.linear = np.asarray(linear, dtype=float)
        self.vector = self.linear.ndim == 2
        self.offset = np.broadcast_to(np.asarray(offset, dtype=float), self.linear.shape[:-1]).copy()

    def __repr__(self) -> str:
        return f"<stokespec.AffineField {'vector' if self.vector else 'scalar'}>"

    def value(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.linear.T + self.offset

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.linear, np.shape(y)[:-1] + self.linear.shape).copy()


class BumpField(SurfaceField):
    """
    Scalar field V_n of a bump variation, extended off the surface as a function of the
    tangential chart coordinates eta = T^T (y - x). Points farther than 2 delta below the
    tangent plane belong to the opposite sheet and see zero.
    """

    vector = False

    def __init__(self, variation: BumpVariation) -> None:
        self.variation = variation
        self.chart = variation.chart

    def __repr__(self) -> str:
        return f"<stokespec.BumpField {self.variation!r}>"

    def _coordinates(self, y):
        y = np.asarray(y, dtype=float)
        offset = y - self.chart.x
        eta = offset @ self.chart.frame
        inside = -(offset @ self.chart.normal) < self.chart.radius
        if self.variation.truncated:
            inside &= np.linalg.norm(eta, axis=-1) < self.chart.radius
        return np.where(inside[..., None], eta, 0.0), inside

    def value(self, y: np.ndarray) -> np.ndarray:
        eta, inside = self._coordinates(y)
        return np.where(inside, self.variation.chart_value(eta), 0.0)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        eta, inside = self._coordinates(y)
        grad = self.variation.chart_gradient(eta) @ self.chart.frame.T
        return np.where(inside[..., None], grad, 0.0)


class ProductField(SurfaceField):
    """alpha * psi for a scalar alpha and a vector psi."""

    def __init__(self, alpha: SurfaceField, psi: SurfaceField) -> None:
        if alpha.vector:
            alpha, psi = psi, alpha
        if alpha.vector or not psi.vector:
            raise InputError("a product field needs one scalar and one vector factor")
        self.alpha = alpha
        self.psi = psi

    def __repr__(self) -> str:
        return f"<stokespec.ProductField {self.alpha!r} * {self.psi!r}>"

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.alpha.value(y)[..., None] * self.psi.value(y)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.alpha.value(y)[..., None, None] * self.psi.gradient(y) + np.einsum(
            "...k,...j->...kj", self.psi.value(y), self.alpha.gradient(y)
        )


class ToroidalTraceField(SurfaceField):
    """Boundary values of an ambient vector field with velocity(x) and velocity_gradient(x)."""

    def __init__(self, mode, scale: float = 1.0) -> None:
        self.mode = mode
        self.scale = scale

    def __repr__(self) -> str:
        return f"<stokespec.ToroidalTraceField {self.mode!r}>"

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.scale * self.mode.velocity(y)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.scale * self.mode.velocity_gradient(y)


@dataclass(frozen=True)
class BoundaryField:
    """Per-node vectors on the global panelization of a surface."""

    surface: Surface
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.surface.size, 3):
            raise InputError(
                f"boundary field has shape {values.shape!r}, surface has {self.surface.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise InputError("boundary field has non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, surface: Surface, field: SurfaceField) -> BoundaryField:
        return cls(surface, field.value(surface.panelization.nodes))

    @classmethod
    def zeros(cls, surface: Surface) -> BoundaryField:
        return cls(surface, np.zeros((surface.size, 3)))

    def __repr__(self) -> str:
        return f"<stokespec.BoundaryField on {self.surface!r} norm={self.norm():.6g}>"

    @property
    def weights(self) -> np.ndarray:
        return self.surface.panelization.weights

    def norm(self) -> float:
        """L2 norm over the surface."""
        return float(np.sqrt(np.sum(self.weights * np.sum(self.values**2, axis=-1))))

    def __sub__(self, other: BoundaryField) -> BoundaryField:
        return BoundaryField(self.surface, self.values - other.values)


def integrate(surface: Surface, values: np.ndarray) -> np.ndarray:
    weights = surface.panelization.weights
    return np.tensordot(weights, values, axes=(0, 0))


# quadrature rules


def _batch_frames(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = np.zeros_like(normals)
    np.put_along_axis(axis, np.argmin(np.abs(normals), axis=-1)[..., None], 1.0, axis=-1)
    t1 = axis - np.sum(axis * normals, axis=-1, keepdims=True) * normals
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    return t1, np.cross(normals, t1)


def target_rule(
    surface: Surface,
    x: np.ndarray,
    radii: Sequence[float] | None = None,
    n_s: int = 16,
    n_phi: int = 64,
) -> Panelization:
    """
    Polar rule centred at the surface point x. radii are ascending distances from x,
    starting at 0, where the radial rule is split; closed surfaces are completed to the
    antipode, the flat plane is cut at the last radius.
    """
    x = np.asarray(x, dtype=float)
    if surface.kind == "flat":
        if not radii or len(radii) < 2:
            raise InputError("a rule on the flat plane needs finite radii")
        eta, weights = chart_polar_rule(x[:2], radii, n_s, n_phi)
        nodes = np.concatenate([eta, np.full((len(eta), 1), x[2])], axis=-1)
        normals = np.broadcast_to([0.0, 0.0, 1.0], nodes.shape).copy()
        return Panelization(nodes, normals, weights)

    scale = float(np.linalg.norm(x))
    angles = sorted({min(r / scale, np.pi) for r in (radii or [0.0])} | {0.0, np.pi})
    return surface.polar_rule(x, n_phi=n_phi, breakpoints=angles, n_s=n_s)


def _near_radii(distance: float, scale: float) -> list[float]:
    """Geometric radial split resolving a target at the given distance from the surface."""
    radii = [0.0]
    r = max(distance, 1e-12)
    while r < np.pi * scale:
        radii.append(r)
        r *= 3
    return radii


def _check_on_surface(surface: Surface, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not surface.on_surface(x):
        raise DomainError(f"point {x.tolist()!r} is not on the surface")
    return x


def _rule_for(surface: Surface, x: np.ndarray, n_s: int, n_phi: int) -> tuple[Panelization, bool]:
    """Rule for a point on or off the surface; second value tells whether x is on it."""
    distance = float(abs(surface.distance(x)))
    on = bool(surface.on_surface(x))
    if surface.kind == "flat":
        raise DomainError("layer potentials need a closed surface")
    pole = surface.point(x) if not on else x
    radii = None if on else _near_radii(distance, surface.radius)
    return target_rule(surface, pole, radii, n_s, n_phi), on


def _subtracted_sum(
    surface: Surface, x: np.ndarray, values: np.ndarray, kernel, n_s: int, n_phi: int
) -> list:
    """
    sum_j w_j k(x, y_j) phi_j for nodal values phi_j. kernel(r, n_x, n_y) returns arrays
    shaped (m, ..., 3) contracted with phi. At a surface point the sum becomes
    sum_j w_j k (phi_j - phi(x)) + int k(x, y) dsigma_y phi(x), phi(x) the nearest node value.
    """
    nodes, normals, weights = surface.panelization
    if not surface.on_surface(x):
        terms = kernel(x - nodes, None, normals)
        return [np.einsum("m,m...j,mj->...", weights, k, values) for k in terms]

    n_x = surface.normal_at(x)
    offsets = np.linalg.norm(nodes - x, axis=-1)
    pivot = values[np.argmin(offsets)]
    keep = offsets > 1e-12
    far = kernel(x - nodes[keep], n_x, normals[keep])
    rule_nodes, rule_normals, rule_weights = target_rule(surface, x, None, n_s, n_phi)
    near = kernel(x - rule_nodes, n_x, rule_normals)
    return [
        np.einsum("m,m...j,mj->...", weights[keep], k, values[keep] - pivot)
        + np.einsum("m,m...j,j->...", rule_weights, k_near, pivot)
        for k, k_near in zip(far, near)
    ]


def _k0_kernel(r, n_x, n_y):
    rho = np.linalg.norm(r, axis=-1)
    scalar = np.sum(r * n_y, axis=-1) / rho**5
    return (-3 / (4 * np.pi) * scalar[:, None, None] * np.einsum("mi,mj->mij", r, r),)


# single and double layers


def single_layer(
    surface: Surface,
    density: SurfaceField | BoundaryField,
    lam: float,
    x: np.ndarray,
    n_s: int = 16,
    n_phi: int = 64,
) -> LayerValue:
    """S^lambda[phi](x) and its pressure F[phi](x)."""
    x = np.asarray(x, dtype=float)
    if isinstance(density, BoundaryField):
        velocity, pressure = _subtracted_sum(
            surface, x, density.values, lambda r, n_x, n_y: gamma_lambda(r, lam)[:2], n_s, n_phi
        )
        return LayerValue(velocity, float(pressure))

    (nodes, _, weights), _ = _rule_for(surface, x, n_s, n_phi)
    values = density.value(nodes)
    kernel = gamma_lambda(x - nodes, lam)
    velocity = np.einsum("m,mij,mj->i", weights, kernel.G, values)
    pressure = np.einsum("m,mj,mj->", weights, kernel.F, values)
    return LayerValue(velocity, float(pressure))


def double_layer(
    surface: Surface,
    density: SurfaceField,
    lam: float,
    x: np.ndarray,
    n_s: int = 16,
    n_phi: int = 64,
) -> LayerValue:
    """D^lambda[phi](x) and its pressure for x off the surface."""
    x = np.asarray(x, dtype=float)
    (nodes, normals, weights), on = _rule_for(surface, x, n_s, n_phi)
    if on:
        raise DomainError("the double layer is discontinuous across the surface, use its trace")
    values = density.value(nodes)
    r = x - nodes
    velocity = np.einsum("m,mij,mj->i", weights, double_layer_kernel(r, normals, lam), values)
    pressure = np.einsum("m,mj,mj->", weights, pressure_double_layer_kernel(r, normals, lam), values)
    return LayerValue(velocity, float(pressure))


def pressure_double_layer(surface: Surface, density: SurfaceField, lam: float, x: np.ndarray, **rule) -> float:
    """Pressure of D^lambda[phi] at x off the surface; rule takes n_s and n_phi."""
    return double_layer(surface, density, lam, x, **rule).pressure


def interior_limit(
    surface: Surface, density: SurfaceField, x: np.ndarray, offset: float = 1e-3, lam: float = 0.0, **rule
) -> np.ndarray:
    """D^lambda[phi] at x - offset n_x, the interior approach to the surface point x."""
    x = _check_on_surface(surface, x)
    return double_layer(surface, density, lam, x - offset * surface.normal_at(x), **rule).velocity


def k0_apply(
    surface: Surface, density: SurfaceField | BoundaryField, x: np.ndarray, n_s: int = 16, n_phi: int = 64
) -> np.ndarray:
    """K^0[phi](x) = -(3/4pi) int r <r, n_y> <r, phi> / |r|^5, r = x - y."""
    x = _check_on_surface(surface, x)
    if isinstance(density, BoundaryField):
        return _subtracted_sum(surface, x, density.values, _k0_kernel, n_s, n_phi)[0]
    nodes, normals, weights = target_rule(surface, x, None, n_s, n_phi)
    (kernel,) = _k0_kernel(x - nodes, None, normals)
    return np.einsum("m,mij,mj->i", weights, kernel, density.value(nodes))


def sphere_identity_residual(surface: Surface, sample: int = 200) -> float:
    """max |<x - y, n_y> + |x - y|^2 / 2R| over node pairs of a sphere."""
    if surface.kind != "sphere":
        raise DomainError(f"the identity holds on spheres only, got {surface.kind!r}")
    nodes, normals, _ = surface.panelization
    targets = nodes[:: max(1, len(nodes) // sample)]
    r = targets[:, None, :] - nodes[None, :, :]
    lhs = np.einsum("tmi,mi->tm", r, normals)
    rhs = -np.sum(r**2, axis=-1) / (2 * surface.radius)
    return float(np.max(np.abs(lhs - rhs)))


# dense assembly


@dataclass(frozen=True)
class OperatorAssembly:
    surface: Surface
    tag: KernelTag
    lam: float
    matrix: np.ndarray

    def __repr__(self) -> str:
        n = self.matrix.shape[0]
        return f"<stokespec.OperatorAssembly {_kernel_names[self.tag]} lambda={self.lam:g} {n}x{n}>"

    def apply(self, density: BoundaryField | np.ndarray) -> BoundaryField:
        values = density.values if isinstance(density, BoundaryField) else np.asarray(density)
        if values.size != self.matrix.shape[1]:
            raise InputError(f"density of size {values.size} does not match {self.matrix.shape!r}")
        return BoundaryField(self.surface, (self.matrix @ values.ravel()).reshape(-1, 3))

    def symmetry_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.T) / np.linalg.norm(self.matrix))

    def row_sums(self) -> np.ndarray:
        return np.abs(self.matrix).sum(axis=1)

    def export(self, path: Path | str) -> tuple[Path, Path]:
        """Flat .npy array next to a JSON header with shape and metadata."""
        path = Path(path)
        array_path = path.with_suffix(".npy")
        header_path = path.with_suffix(".json")
        np.save(array_path, np.ascontiguousarray(self.matrix).ravel())
        header = {
            "shape": list(self.matrix.shape),
            "dtype": str(self.matrix.dtype),
            "tag": self.tag,
            "lambda": self.lam,
            "surface": self.surface.kind,
            "resolution": list(self.surface.resolution),
        }
        header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return array_path, header_path


_BLOCK = 32


def _kernel_block(tag: str, r, n_x, n_y, lam):
    if tag == "S":
        return gamma_lambda(r, lam).G
    if tag in {"D", "K"}:
        return double_layer_kernel(r, n_y, lam)
    if tag == "K*":
        return adjoint_kernel(r, np.broadcast_to(n_x, r.shape), lam)
    if tag == "delta":
        return delta_lambda(r, lam).G
    raise InputError(
        f"tag {tag!r} cannot be assembled on nodal densities, use hypersingular_decomposed"
    )


_SUBTRACTED = frozenset({"S", "D", "K", "K*"})


def _self_integrals(surface: Surface, tag: str, lam: float, n_s: int, n_phi: int) -> np.ndarray:
    """int k(x_i, y) dsigma_y at every node x_i by the polar rule centred there."""
    nodes, normals, _ = surface.panelization
    integrals = np.zeros((len(nodes), 3, 3))
    for i, x in enumerate(nodes):
        rule_nodes, rule_normals, rule_weights = target_rule(surface, x, None, n_s, n_phi)
        r = x - rule_nodes
        block = _kernel_block(tag, r, np.broadcast_to(normals[i], r.shape), rule_normals, lam)
        integrals[i] = np.einsum("m,mij->ij", rule_weights, block)
    return integrals


def assemble(
    surface: Surface, tag: KernelTag, lam: float = 0.0, n_s: int = 12, n_phi: int = 32
) -> OperatorAssembly:
    """
    Dense 3N x 3N Nystrom matrix of a boundary operator. For S, D, K and K* the diagonal
    block is int k(x_i, y) dsigma_y minus the off-diagonal row sum, so a row applied to
    phi gives sum_j w_j k_ij (phi_j - phi_i) + phi_i int k(x_i, y) dsigma_y.
    """
    if tag not in _kernel_names:
        raise InputError(f"unknown kernel tag {tag!r}")
    nodes, normals, weights = surface.panelization
    n = len(nodes)
    matrix = np.zeros((n, 3, n, 3))
    logger.debug("assembling %s on %d nodes", tag, n)

    for start in range(0, n, _BLOCK):
        rows = slice(start, min(start + _BLOCK, n))
        r = nodes[rows, None, :] - nodes[None, :, :]
        diagonal = np.linalg.norm(r, axis=-1) == 0
        r = np.where(diagonal[..., None], 1.0, r)
        n_x = np.broadcast_to(normals[rows, None, :], r.shape)
        n_y = np.broadcast_to(normals[None, :, :], r.shape)
        block = _kernel_block(tag, r, n_x, n_y, lam) * weights[None, :, None, None]
        block[diagonal] = 0.0
        matrix[rows] = block.transpose(0, 2, 1, 3)

    if tag in _SUBTRACTED and surface.kind != "flat":
        index = np.arange(n)
        matrix[index, :, index, :] = _self_integrals(surface, tag, lam, n_s, n_phi) - matrix.sum(axis=2)
    return OperatorAssembly(surface, tag, lam, matrix.reshape(3 * n, 3 * n))


def double_layer_trace(
    surface: Surface, density: BoundaryField | SurfaceField, lam: float = 0.0
) -> BoundaryField:
    """(1/2 I + K^lambda)[phi], the interior trace of D^lambda[phi]."""
    if not isinstance(density, BoundaryField):
        density = BoundaryField.sample(surface, density)
    K = assemble(surface, "K", lam)
    return BoundaryField(surface, 0.5 * density.values + K.apply(density).values)


# hypersingular operator


def _field_data(alpha: SurfaceField, psi: SurfaceField, nodes, normals):
    a = alpha.value(nodes)
    grad_a = alpha.tangential_gradient(nodes, normals)
    p = psi.value(nodes)
    grad_p = psi.tangential_gradient(nodes, normals)
    return a, grad_a, p, grad_p


def _hsiao_parts(r, rho, n_x, normals, weights, grad_u):
    """EE3 and EE4 of a field with tangential gradient grad_u at the nodes."""
    r_ny = np.sum(r * normals, axis=-1) / rho**3
    sym = grad_u + np.swapaxes(grad_u, -1, -2)
    ee3 = np.einsum("m,m,mij,j->i", weights, r_ny, sym, n_x)
    trace = np.trace(grad_u, axis1=-2, axis2=-1)
    gunter = np.einsum("mji,mj->mi", grad_u, normals) - normals * trace[:, None]
    projector = np.eye(3) - 3 * np.einsum("mi,mj->mij", r, r) / rho[:, None, None] ** 2
    # weighted by <n_x, x - y>, not <x - y, n_y> as in EE3
    r_nx = (r @ n_x) / rho**3
    ee4 = -2 * np.einsum("m,m,mij,mj->i", weights, r_nx, projector, gunter)
    return ee3, ee4


def _a_terms(x, n_x, rule: Panelization, alpha: SurfaceField, psi: SurfaceField) -> HypersingularTerms:
    nodes, normals, weights = rule
    r = x - nodes
    rho = np.linalg.norm(r, axis=-1)
    a, grad_a, p, grad_p = _field_data(alpha, psi, nodes, normals)

    c = (normals @ n_x) / rho**3
    psi_r = np.sum(p * r, axis=-1)
    grad_a_r = np.sum(grad_a * r, axis=-1)
    grad_p_r = np.einsum("mkj,mj->mk", grad_p, r)
    grad_pt_r = np.einsum("mjk,mj->mk", grad_p, r)

    A1 = np.einsum("m,m,mi->i", weights, c, psi_r[:, None] * grad_a + grad_a_r[:, None] * p)
    A2 = np.einsum("m,m,mi->i", weights, c * a, grad_p_r + grad_pt_r)
    bracket = ((p @ n_x) * grad_a_r - psi_r * (grad_a @ n_x)) / rho**3
    A3 = np.einsum("m,m,mi->i", weights, bracket, normals)
    skew = a * ((grad_p_r - grad_pt_r) @ n_x) / rho**3
    A4 = np.einsum("m,m,mi->i", weights, skew, normals)

    grad_u = a[:, None, None] * grad_p + np.einsum("mk,mj->mkj", p, grad_a)
    ee3, ee4 = _hsiao_parts(r, rho, n_x, normals, weights, grad_u)
    return HypersingularTerms(A1, A2, A3, A4, ee4 - ee3)


def hypersingular_decomposed(
    surface: Surface,
    alpha: SurfaceField,
    psi: SurfaceField,
    x: np.ndarray,
    radii: Sequence[float] | None = None,
    n_s: int = 16,
    n_phi: int = 64,
    rule: Panelization | None = None,
) -> HypersingularTerms:
    """The five terms A_1 .. A_5 whose sum is 4 pi E(alpha psi)(x)."""
    x = _check_on_surface(surface, x)
    if rule is None:
        rule = target_rule(surface, x, radii, n_s, n_phi)
    return _a_terms(x, surface.normal_at(x), rule, alpha, psi)


def _fd_tangential_gradient(u: SurfaceField, nodes, normals, step: float) -> np.ndarray:
    t1, t2 = _batch_frames(normals)
    grad = np.zeros(nodes.shape + (3,))
    for t in (t1, t2):
        derivative = (u.value(nodes + step * t) - u.value(nodes - step * t)) / (2 * step)
        grad += np.einsum("mk,mj->mkj", derivative, t)
    return grad


def hypersingular_hsiao(
    surface: Surface,
    u: SurfaceField,
    x: np.ndarray,
    radii: Sequence[float] | None = None,
    n_s: int = 16,
    n_phi: int = 64,
    step: float = FD_STEP,
    rule: Panelization | None = None,
) -> np.ndarray:
    """4 pi E u(x) = EE1 + EE2 - EE3 + EE4 with finite-difference tangential gradients."""
    x = _check_on_surface(surface, x)
    n_x = surface.normal_at(x)
    nodes, normals, weights = rule if rule is not None else target_rule(surface, x, radii, n_s, n_phi)
    r = x - nodes
    rho = np.linalg.norm(r, axis=-1)
    grad_u = _fd_tangential_gradient(u, nodes, normals, step)

    c = (normals @ n_x) / rho**3
    ee1 = np.einsum("m,m,mij,mj->i", weights, c, grad_u + np.swapaxes(grad_u, -1, -2), r)
    skew = np.einsum("i,mij,mj->m", n_x, grad_u - np.swapaxes(grad_u, -1, -2), r) / rho**3
    ee2 = np.einsum("m,m,mi->i", weights, skew, normals)
    ee3, ee4 = _hsiao_parts(r, rho, n_x, normals, weights, grad_u)
    return ee1 + ee2 - ee3 + ee4


def brinkman_correction(
    surface: Surface,
    density: SurfaceField,
    x: np.ndarray,
    lam: float,
    radii: Sequence[float] | None = None,
    n_s: int = 16,
    n_phi: int = 64,
    rule: Panelization | None = None,
) -> np.ndarray:
    """e(x) = int d^2 Delta^lambda(x - y) / dN(x) dN(y) phi(y), weakly singular."""
    x = _check_on_surface(surface, x)
    if lam == 0:
        return np.zeros(3)
    n_x = surface.normal_at(x)
    nodes, normals, weights = rule if rule is not None else target_rule(surface, x, radii, n_s, n_phi)
    kernel = np.real(_second_conormal(x - nodes, np.broadcast_to(n_x, nodes.shape), normals, lam, True))
    return np.einsum("m,mij,mj->i", weights, kernel, density.value(nodes))


def flux(surface: Surface, field: SurfaceField) -> float:
    nodes, normals, weights = surface.panelization
    return float(np.sum(weights * np.sum(field.value(nodes) * normals, axis=-1)))


def conormal_representation(
    surface: Surface,
    lam: float,
    dirichlet_data: SurfaceField,
    n_trunc: int = 1,
    n_s: int = 12,
    n_phi: int = 32,
    compatibility_tol: float = 1e-8,
    solve: bool = True,
) -> ConormalResult:
    """
    Conormal derivative of the solution with the given Dirichlet data. With C = -2 (K^lambda)*,
    b = E[phi] the hypersingular image and e the Brinkman correction it solves

        (I - C) d phi / d nu = 2 (b + e)

    bordered by the normal field, which spans the kernel of 1/2 I + (K^lambda)* and carries the
    free pressure constant. The returned field is the representative orthogonal to n.

    term_norms are the norms of the Neumann terms 2 C^k (b + e), k = 0 .. n_trunc. With
    solve=False the truncated sum is returned and defect is the norm of the first omitted
    term; otherwise defect is the distance of the truncated sum from the solve.
    """
    if n_trunc < 0:
        raise InputError(f"truncation order must be nonnegative, got {n_trunc!r}")
    defect = abs(flux(surface, dirichlet_data))
    if defect > compatibility_tol * max(surface.area, 1.0):
        raise InputError(f"Dirichlet data carry a net flux {defect:.3g}")

    nodes, normals, node_weights = surface.panelization
    one = ConstantField(1.0)
    b = np.zeros_like(nodes)
    e = np.zeros_like(nodes)
    for i, x in enumerate(nodes):
        rule = target_rule(surface, x, None, n_s, n_phi)
        b[i] = _a_terms(x, normals[i], rule, one, dirichlet_data).total / (4 * np.pi)
        e[i] = brinkman_correction(surface, dirichlet_data, x, lam, rule=rule)

    C = -2 * assemble(surface, "K*", lam, n_s, n_phi).matrix
    weights = np.repeat(node_weights, 3)
    normal = normals.ravel()

    def norm(vector):
        return float(np.sqrt(np.sum(weights * vector**2)))

    def deflate(vector):
        return vector - normal * np.sum(weights * normal * vector) / np.sum(weights * normal**2)

    rhs = 2 * (b + e).ravel()
    term = rhs
    total = rhs.copy()
    term_norms = [norm(term)]
    for k in range(1, n_trunc + 1):
        term = C @ term
        total = total + term
        term_norms.append(norm(term))
        if not solve and k >= 2 and term_norms[-1] > 1.05 * term_norms[-2] > 1.05**2 * term_norms[-3]:
            raise ConvergenceError("Neumann series terms are growing", {"term_norms": term_norms})
    logger.debug("conormal representation term norms %s", term_norms)

    if not solve:
        return ConormalResult(BoundaryField(surface, deflate(total).reshape(-1, 3)), norm(C @ term), term_norms)

    size = len(rhs)
    bordered = np.zeros((size + 1, size + 1))
    bordered[:size, :size] = np.eye(size) - C
    bordered[:size, size] = normal
    bordered[size, :size] = weights * normal
    solution = deflate(solve_linear(bordered, np.append(rhs, 0.0))[:size])
    return ConormalResult(
        BoundaryField(surface, solution.reshape(-1, 3)), norm(deflate(total) - solution), term_norms
    )
