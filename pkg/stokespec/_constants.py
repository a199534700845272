from __future__ import annotations

from typing import Literal

SurfaceKind = Literal["sphere", "flat", "star", "circle"]

KernelTag = Literal["S", "D", "K", "K*", "E", "delta"]

MTag = Literal[
    "M1A1", "M2A1", "M3A1", "M4A1", "M5A1", "M6", "M7", "M8", "M9", "M10"
]

Subcommand = Literal[
    "specfun", "kernels-check", "eigs", "shape-derivative", "resonance", "asymptotics",
    "config-template",
]

DEFAULT_DELTA = 0.3
DEFAULT_RADIUS = 1.0

# lambda*|x|^2 below this switches Gamma^lambda to its Taylor branch
SERIES_SWITCH = 1e-4

R_CUT = 1e-3
SERIES_ORDER = 40
SERIES_TAIL_TOL = 1e-15

ON_SURFACE_TOL = 1e-8
CLUSTER_RTOL_ANALYTIC = 1e-6
CLUSTER_RTOL_PERTURBED = 1e-3

MAX_RESONANCE_COMPLEXITY = 30
FD_STEP = 1e-3
TANGENT_FD_STEP = 1e-5

CSV_SCHEMA_VERSION = 1

# (power of r, power of cos) of the generic integral
#     int_0^inf e^{-r^2} r^s dr int_0^{2pi} cos^k(t) e^{2rz cos t} dt
# M2A1 (sin^2) and M3A1/M4A1 (principal value, 1/z) are not of this form
_m_members: dict[str, tuple[int, int]] = {
    "M1A1": (0, 2),
    "M5A1": (0, 0),
    "M6": (2, 0),
    "M7": (2, 2),
    "M8": (2, 4),
    "M9": (1, 1),
    "M10": (1, 3),
}

# functions whose series carry odd powers of z only
_odd_tags: set[str] = {"M9", "M10"}

_kernel_names: dict[str, str] = {
    "S": "single layer",
    "D": "double layer",
    "K": "double layer trace",
    "K*": "adjoint double layer",
    "E": "hypersingular",
    "delta": "Brinkman correction",
}
