from __future__ import annotations

import collections.abc
import functools
import itertools
import numbers
from pathlib import Path
from typing import Any, Callable

import numpy as np
from numpy.polynomial.legendre import leggauss


def real_part(func: Callable) -> Callable:
    """Kernels are built in complex arithmetic; callers only ever see the real part."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        result = func(*args, **kwargs)
        if hasattr(result, "_fields"):
            return type(result)(*(np.real(item) for item in result))
        if isinstance(result, tuple):
            return tuple(np.real(item) for item in result)
        return np.real(result)

    return wrapper


_flatten = itertools.chain.from_iterable


def gauss_rule(n: int, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    nodes, weights = leggauss(n)
    return 0.5 * (b - a) * nodes + 0.5 * (a + b), 0.5 * (b - a) * weights


def composite_gauss_rule(breakpoints, n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = zip(*(gauss_rule(n, a, b) for a, b in zip(breakpoints[:-1], breakpoints[1:])))
    return np.concatenate(nodes), np.concatenate(weights)


def periodic_rule(n: int, offset: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid rule on the circle."""
    angles = offset + 2 * np.pi * np.arange(n) / n
    return angles, np.full(n, 2 * np.pi / n)


def unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector, axis=-1, keepdims=True)


def tangent_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent pair, Gram-Schmidt against the axis where n is smallest."""
    axis = np.zeros(3)
    axis[np.argmin(np.abs(normal))] = 1.0
    t1 = unit(axis - np.dot(axis, normal) * normal)
    return t1, np.cross(normal, t1)


def from_text(type_spec, value: str) -> Any:
    """Convert a config-file string according to type_spec."""
    if type_spec is None:
        return None

    value = value.strip()

    if type_spec is str:
        return value

    if type_spec is bool:
        if not value:
            return None
        return value.lower() in {"1", "true", "yes", "on"}

    if type_spec is int:
        if value == "":
            return None
        return int(value)

    if isinstance(type_spec, type) and issubclass(type_spec, numbers.Real):
        if not value:
            return None
        return type_spec(value)

    if isinstance(type_spec, list):
        # [float] -> [0.1, 0.05]
        (item_spec,) = type_spec
        return [from_text(item_spec, item) for item in value.split(",") if item.strip()]

    if isinstance(type_spec, tuple):
        items = [item for item in value.split(",") if item.strip()]
        if len(type_spec) != len(items):
            type_spec *= len(items)
        return tuple(map(from_text, type_spec, items))

    if type_spec is Path:
        return Path(value)

    return value


def to_text(value: Any) -> str:
    """Inverse of from_text, also used for CSV cells."""
    if isinstance(value, str):
        return value

    if value is None:
        return ""

    if isinstance(value, bool):
        return "1" if value else "0"

    if isinstance(value, numbers.Integral):
        return str(int(value))

    if isinstance(value, numbers.Real):
        return repr(float(value))

    if isinstance(value, Path):
        return str(value)

    if isinstance(value, collections.abc.Mapping):
        return ",".join(map(to_text, _flatten(value.items())))

    return ",".join(map(to_text, value))
