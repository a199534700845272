"""
First-order shape calculus of Stokes eigenvalues.

Along a boundary variation with normal speed V_n = u.n, an eigenvalue cluster of
multiplicity m with orthonormal eigenfields phi_1 .. phi_m splits into the eigenvalues of
-M, where M_ij = int V_n <d phi_i/dn, d phi_j/dn>.
"""

from __future__ import annotations

import itertools
import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial.transform import Rotation

from ._constants import FD_STEP, MAX_RESONANCE_COMPLEXITY
from .eigensolver import (
    EigenPair,
    StreamMode,
    VolumeRule,
    align_sign,
    neumann_trace,
    perturbed_disk_spectrum,
    star_rule,
)
from .exceptions import InputError, ResourceError
from .geometry import BumpVariation, Surface, bump_tangential_gradient

logger = logging.getLogger("stokespec")

OZReport = namedtuple("OZReport", ["c1", "c2", "c3", "rotation", "holds"])
ShapeResidual = namedtuple("ShapeResidual", ["interior", "divergence", "boundary", "eigenvalue"])
FiniteDifference = namedtuple("FiniteDifference", ["value", "error", "coarse", "fine"])
RellichCheck = namedtuple("RellichCheck", ["boundary", "expected"])


def _mode(item):
    return item.mode if isinstance(item, EigenPair) else item


def _normal_speed(surface: Surface, u_normal) -> np.ndarray:
    nodes = surface.panelization.nodes
    if callable(u_normal):
        values = np.asarray(u_normal(nodes), dtype=float)
    else:
        values = np.asarray(u_normal, dtype=float)
        if values.ndim == 0:
            values = np.full(len(nodes), float(values))
    if values.shape != (len(nodes),):
        raise InputError(f"normal speed has shape {values.shape!r}, surface has {len(nodes)} nodes")
    return values


@dataclass(frozen=True)
class HadamardMatrix:
    matrix: np.ndarray

    def __repr__(self) -> str:
        return f"<stokespec.HadamardMatrix {len(self.matrix)}x{len(self.matrix)}>"

    @property
    def size(self) -> int:
        return len(self.matrix)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T), initial=0.0))

    def congruence(self, S: np.ndarray) -> HadamardMatrix:
        """S^T M S, the matrix of the rotated basis phi S."""
        return HadamardMatrix(S.T @ self.matrix @ S)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def derivatives(self) -> np.ndarray:
        """Eigenvalue derivatives of the cluster, ascending."""
        return np.linalg.eigvalsh(-0.5 * (self.matrix + self.matrix.T))


def hadamard_matrix(cluster: Sequence, u_normal, surface: Surface) -> HadamardMatrix:
    """M_ij = int_{boundary} V_n <d phi_i/dn, d phi_j/dn> by the surface rule."""
    if not cluster:
        raise InputError("empty eigenvalue cluster")
    speed = _normal_speed(surface, u_normal)
    weights = surface.panelization.weights
    traces = np.stack([neumann_trace(_mode(item), surface) for item in cluster])
    matrix = np.einsum("m,m,ami,bmi->ab", weights, speed, traces, traces)
    return HadamardMatrix(0.5 * (matrix + matrix.T))


def eigenvalue_derivative(cluster: Sequence, u_normal, surface: Surface) -> np.ndarray:
    return hadamard_matrix(cluster, u_normal, surface).derivatives()


def rotate_cluster(cluster: Sequence, S: np.ndarray) -> list:
    """Basis phi S of the cluster span."""
    modes = [_mode(item) for item in cluster]
    return [_RotatedMode(modes, S[:, j]) for j in range(len(modes))]


class _RotatedMode:
    def __init__(self, modes, coefficients) -> None:
        self.modes = modes
        self.coefficients = coefficients
        self.dimension = modes[0].dimension

    def velocity(self, x):
        return sum(c * mode.velocity(x) for c, mode in zip(self.coefficients, self.modes))

    def velocity_gradient(self, x):
        return sum(c * mode.velocity_gradient(x) for c, mode in zip(self.coefficients, self.modes))


# conditions on the Neumann traces of a multiple eigenvalue


def _pair_defects(traces: np.ndarray) -> tuple[float, float]:
    c2 = c3 = 0.0
    norms = np.linalg.norm(traces, axis=-1)
    for i, j in itertools.combinations(range(len(traces)), 2):
        c2 = max(c2, float(np.max(np.abs(np.sum(traces[i] * traces[j], axis=-1)))))
        c3 = max(c3, float(np.max(np.abs(norms[i] - norms[j]))))
    return c2, c3


def _rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def oz_condition_check(cluster: Sequence, surface: Surface, tol: float = 1e-8, seed: int = 0, restarts: int = 50) -> OZReport:
    """
    Pointwise defects of the conditions a multiple eigenvalue would force on its Neumann
    traces: <d phi_i/dn, n> = 0, <d phi_1/dn, d phi_2/dn> = 0 and |d phi_1/dn| = |d phi_2/dn|.
    The last two are minimized over orthonormal bases of the cluster.
    """
    m = len(cluster)
    if m not in (2, 3):
        raise InputError(f"the conditions apply to clusters of multiplicity 2 or 3, got {m}")
    normals = surface.panelization.normals
    traces = np.stack([neumann_trace(_mode(item), surface) for item in cluster])
    c1 = float(np.max(np.abs(np.sum(traces * normals, axis=-1))))

    def objective(S):
        return max(_pair_defects(np.einsum("am,aki->mki", S, traces)))

    if m == 2:
        grid = np.deg2rad(np.arange(0.0, 90.0, 1.0))
        values = [objective(_rotation_2d(a)) for a in grid]
        best = grid[int(np.argmin(values))]
        step = np.deg2rad(1.0)
        result = minimize_scalar(
            lambda a: objective(_rotation_2d(a)), bounds=(best - step, best + step), method="bounded"
        )
        S = _rotation_2d(result.x if result.fun <= min(values) else best)
    else:
        rng = np.random.default_rng(seed)
        best_value, S = np.inf, np.eye(3)
        for _ in range(restarts):
            start = rng.uniform(-np.pi, np.pi, size=3)
            result = minimize(
                lambda v: objective(Rotation.from_rotvec(v).as_matrix()), start, method="Nelder-Mead"
            )
            if result.fun < best_value:
                best_value, S = result.fun, Rotation.from_rotvec(result.x).as_matrix()

    c2, c3 = _pair_defects(np.einsum("am,aki->mki", S, traces))
    logger.debug("oz defects c1=%.3e c2=%.3e c3=%.3e", c1, c2, c3)
    return OZReport(c1, c2, c3, S, bool(max(c1, c2, c3) <= tol))


# shape derivative of an eigenfield


class ModeDifference:
    """(a - b) / t as a field: velocity, Laplacian, pressure gradient and divergence."""

    def __init__(self, a, b, t: float) -> None:
        self.a, self.b, self.t = a, b, t
        self.dimension = a.dimension

    def __repr__(self) -> str:
        return f"<stokespec.ModeDifference t={self.t:g}>"

    def _apply(self, name: str, x: np.ndarray) -> np.ndarray:
        return (getattr(self.a, name)(x) - getattr(self.b, name)(x)) / self.t

    def velocity(self, x):
        return self._apply("velocity", x)

    def velocity_gradient(self, x):
        return self._apply("velocity_gradient", x)

    def laplacian(self, x):
        return self._apply("laplacian", x)

    def pressure(self, x):
        return self._apply("pressure", x)

    def pressure_gradient(self, x):
        return self._apply("pressure_gradient", x)

    def divergence(self, x):
        return self._apply("divergence", x)


def _circle_speed(u_normal, theta: np.ndarray) -> np.ndarray:
    if callable(u_normal):
        return np.asarray(u_normal(theta), dtype=float)
    values = np.asarray(u_normal, dtype=float)
    if values.shape != theta.shape:
        raise InputError(f"normal speed has shape {values.shape!r}, boundary grid has {theta.shape!r}")
    return values


def shape_derivative_candidates(g: Callable, t: float, index: int = 0, terms: int = 20):
    """
    Finite-difference shape derivative of a simple disk eigenpair along rho = 1 + t g(theta):
    the unperturbed pair, (phi_t - phi)/t with its pressure, and (lambda_t - lambda)/t.
    """
    base = perturbed_disk_spectrum(g, 0.0, index + 1, terms)[index]
    moved = perturbed_disk_spectrum(g, t, index + 1, terms)[index]
    inner = star_rule(lambda theta: np.full_like(theta, 0.9))
    mode = align_sign(moved.mode, base.mode, inner)
    return base, ModeDifference(mode, base.mode, t), (moved.eigenvalue - base.eigenvalue) / t


def shape_system_residual(
    pair: EigenPair | StreamMode,
    u_normal,
    derivative,
    lam_prime: float,
    interior: VolumeRule | None = None,
    boundary_nodes: int = 256,
    surface: Surface | None = None,
) -> ShapeResidual:
    """
    Residuals of the system satisfied by the shape derivative (phi', p') of an eigenpair
    on the unit disk,

        -(Delta + lambda) phi' + grad p' = lambda' phi,  div phi' = 0,  phi' = -V_n d phi/dn,

    and of lambda' against the Hadamard formula.
    """
    mode = _mode(pair)
    lam = mode.eigenvalue
    rule = interior or star_rule(lambda theta: np.full_like(theta, 0.9), 16, 64)
    x = rule.points
    bulk = -derivative.laplacian(x) - lam * derivative.velocity(x) + derivative.pressure_gradient(x) - lam_prime * mode.velocity(x)
    divergence = derivative.divergence(x)

    circle = surface or Surface.circle(1.0, boundary_nodes)
    nodes, normals, weights = circle.panelization
    theta = np.arctan2(nodes[:, 1], nodes[:, 0])
    speed = _circle_speed(u_normal, theta)
    trace = np.einsum("mij,mj->mi", mode.velocity_gradient(nodes), normals)
    boundary = derivative.velocity(nodes) + speed[:, None] * trace
    predicted = float(-np.sum(weights * speed * np.sum(trace**2, axis=-1)))

    return ShapeResidual(
        float(np.max(np.abs(bulk))),
        float(np.max(np.abs(divergence))),
        float(np.max(np.abs(boundary))),
        abs(lam_prime - predicted) / max(abs(predicted), lam * 1e-12),
    )


def normal_derivative_of_normal(variation: BumpVariation, y: np.ndarray) -> np.ndarray:
    """n' = -grad_boundary V_n."""
    return -bump_tangential_gradient(variation, y)


def rellich_identity(pair: EigenPair | StreamMode, surface: Surface) -> RellichCheck:
    """int (x.n) |d phi/dn|^2 against 2 lambda, the dilation law lambda' = -2 lambda."""
    mode = _mode(pair)
    nodes, normals, weights = surface.panelization
    trace = neumann_trace(mode, surface)
    boundary = float(np.sum(weights * np.sum(nodes * normals, axis=-1) * np.sum(trace**2, axis=-1)))
    return RellichCheck(boundary, 2 * mode.eigenvalue)


def finite_difference_derivative(f: Callable[[float], float], t: float = 0.0, h: float = FD_STEP) -> FiniteDifference:
    """Central differences at h and h/2 combined by one Richardson step."""
    coarse = (f(t + h) - f(t - h)) / (2 * h)
    fine = (f(t + h / 2) - f(t - h / 2)) / h
    value = (4 * fine - coarse) / 3
    return FiniteDifference(value, abs(value - fine), coarse, fine)


# resonances


class ResonanceRelation(namedtuple("ResonanceRelation", ["k", "coefficients", "defect"])):
    """lambda_k = sum_j m_j lambda_j over j < k, indices counted from 1."""

    @property
    def order(self) -> int:
        return int(sum(self.coefficients))

    @property
    def complexity(self) -> int:
        return self.k + self.order

    def __repr__(self) -> str:
        terms = " + ".join(f"{m}*lambda_{j}" for j, m in enumerate(self.coefficients, start=1) if m)
        return f"<stokespec.ResonanceRelation lambda_{self.k} = {terms} defect={self.defect:.3g}>"

    def to_json(self) -> dict:
        return {"k": self.k, "coefficients": list(self.coefficients), "defect": self.defect}


def resonance_scan(
    eigenvalues: Sequence[float],
    complexity: int,
    tol: float = 1e-9,
    max_complexity: int = MAX_RESONANCE_COMPLEXITY,
) -> list[ResonanceRelation]:
    """
    All relations lambda_k = sum_{j<k} m_j lambda_j with sum m_j >= 2 and complexity
    k + sum m_j <= N, accepted when the defect is at most tol * lambda_k.
    """
    if complexity > max_complexity:
        raise ResourceError(f"complexity bound {complexity} exceeds the guard {max_complexity}")
    values = np.asarray(eigenvalues, dtype=float)
    if np.any(values <= 0) or np.any(np.diff(values) < 0):
        raise InputError("resonance scan needs a positive nondecreasing spectrum")

    relations = []
    for k in range(2, min(len(values), complexity - 2) + 1):
        target = values[k - 1]
        for order in range(2, complexity - k + 1):
            if order * values[0] > target * (1 + tol):
                break
            for members in itertools.combinations_with_replacement(range(k - 1), order):
                defect = abs(target - values[list(members)].sum())
                if defect <= tol * target:
                    coefficients = tuple(members.count(j) for j in range(k - 1))
                    relations.append(ResonanceRelation(k, coefficients, float(defect)))
    logger.debug("resonance scan with N=%d found %d relations", complexity, len(relations))
    return relations
