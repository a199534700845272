"""Command line driver: stokespec <subcommand> [--config PATH] [--out DIR] [--seed N] [--dry-run]."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import namedtuple
from pathlib import Path
from typing import Callable, Iterable, Sequence, get_args

import numpy as np
from scipy.special import jn_zeros

from ._config import ExperimentConfig, config_template, load_config
from ._constants import CSV_SCHEMA_VERSION, FD_STEP, Subcommand
from .asymptotics import a_terms_sweep, final_identity_check, flat_patch_sweep
from .eigensolver import (
    ball_toroidal_spectrum_3d,
    disk_spectrum_2d,
    perturbed_disk_spectrum,
    spherical_bessel_zeros,
)
from .exceptions import FitError, InputError, StokespecError
from .geometry import Surface
from .kernels import divergence_residual, pde_residual
from .potentials import ToroidalTraceField, sphere_identity_residual
from .shapecalc import eigenvalue_derivative, finite_difference_derivative, rellich_identity, resonance_scan
from .specfun import cross_validation, identity_suite, m_series

logger = logging.getLogger("stokespec")

Check = namedtuple("Check", ["name", "value", "tolerance", "passed"])


def _check(name: str, value: float, tolerance: float) -> Check:
    return Check(name, float(value), tolerance, bool(value <= tolerance))


def _number(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """UTF-8, comma separated, LF endings; the first header cell names the schema version."""
    with path.open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow([f"schema_v{CSV_SCHEMA_VERSION}", *columns])
        for row in rows:
            writer.writerow([CSV_SCHEMA_VERSION, *(_number(v) if isinstance(v, (float, np.floating)) else v for v in row)])


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _checks_json(checks: Sequence[Check]) -> list[dict]:
    return [check._asdict() for check in checks]


# subcommands


def run_specfun(config: ExperimentConfig, out: Path) -> list[Check]:
    rows = cross_validation(config.specfun.z)
    write_csv(out / "specfun.csv", ["tag", "z", "series", "quadrature", "abs_diff"], rows)

    tol = config.tolerances.specfun
    checks = [
        _check(f"{row.tag}({row.z:g}) series vs quadrature", row.abs_diff / max(abs(row.series), 1.0), tol)
        for row in rows
    ]
    anchors = {"M3A1": np.pi**1.5, "M1A1": np.pi**1.5 / 2, "M4A1": -0.75 * np.pi**1.5}
    checks += [_check(f"{tag}(0) anchor", abs(m_series(tag, 0.0) - value), 1e-12) for tag, value in anchors.items()]
    report = identity_suite()
    checks += [Check(c.name, c.residual, c.tolerance, c.passed) for c in report]
    write_json(out / "specfun.json", {"checks": _checks_json(checks)})
    return checks


def run_kernels_check(config: ExperimentConfig, out: Path) -> list[Check]:
    rng = np.random.default_rng(config.seed)
    directions = rng.normal(size=(20, 3))
    points = directions / np.linalg.norm(directions, axis=-1, keepdims=True) * rng.uniform(0.2, 2.0, (20, 1))
    rows = []
    checks = []
    tol = config.tolerances.kernels
    for lam in (0.0, 1.0, 10.0):
        pde = [pde_residual(x, lam) for x in points]
        div = [divergence_residual(x, lam) for x in points]
        rows += [(lam, *x, p, d) for x, p, d in zip(points, pde, div)]
        checks.append(_check(f"(Delta + lambda) G - grad F, lambda={lam:g}", max(pde), tol))
        checks.append(_check(f"div G, lambda={lam:g}", max(div), tol))
    write_csv(out / "kernels.csv", ["lambda", "x", "y", "z", "pde_residual", "divergence_residual"], rows)

    sphere = Surface.sphere(config.surface.radius, config.surface.resolution)
    checks.append(_check("sphere identity", sphere_identity_residual(sphere), 1e-10))
    write_json(out / "kernels.json", {"seed": config.seed, "checks": _checks_json(checks)})
    return checks


def _variation(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    mode = config.eigs.mode
    return lambda theta: 1 + 0.5 * np.cos(mode * theta)


def _spectrum(config: ExperimentConfig):
    eigs = config.eigs
    kind = config.surface.kind
    if kind == "circle" and eigs.t == 0:
        return disk_spectrum_2d(eigs.n_max, eigs.k_max, config.tolerances.cluster_analytic)
    if kind == "circle":
        return perturbed_disk_spectrum(_variation(config), eigs.t, rtol=config.tolerances.cluster_perturbed)
    if kind == "sphere":
        return ball_toroidal_spectrum_3d(eigs.l_max, eigs.k_max, config.tolerances.cluster_analytic)
    raise InputError(f"no eigensolver for surface kind {kind!r}")


def run_eigs(config: ExperimentConfig, out: Path) -> list[Check]:
    spectrum = _spectrum(config)
    data = spectrum.to_json()
    checks = [_check("nonpositive eigenvalues", int(np.sum(spectrum.eigenvalues <= 0)), 0)]
    if config.surface.kind == "circle" and config.eigs.t == 0:
        exact = jn_zeros(1, 1)[0] ** 2
        checks.append(_check("lambda_1 against j_{1,1}^2", abs(spectrum.eigenvalues[0] - exact) / exact, 1e-6))
    elif config.surface.kind == "sphere":
        exact = spherical_bessel_zeros(1, 1)[0] ** 2
        checks.append(_check("lambda_1 against the first zero of j_1", abs(spectrum.eigenvalues[0] - exact) / exact, 1e-12))
    data["checks"] = _checks_json(checks)
    write_json(out / "eigs.json", data)
    return checks


def run_shape_derivative(config: ExperimentConfig, out: Path) -> list[Check]:
    g = _variation(config)
    circle = Surface.circle(1.0, 512)

    def speed(nodes: np.ndarray) -> np.ndarray:
        return g(np.arctan2(nodes[:, 1], nodes[:, 0]))

    disk = disk_spectrum_2d(config.eigs.n_max, config.eigs.k_max)
    first = disk[0]
    hadamard = float(eigenvalue_derivative([first], speed, circle)[0])
    fd = finite_difference_derivative(lambda t: perturbed_disk_spectrum(g, t, 1)[0].eigenvalue, h=FD_STEP)
    rellich = rellich_identity(first, circle)
    split = eigenvalue_derivative(disk.cluster(1), speed, circle)

    checks = [
        _check("Hadamard against finite differences", abs(hadamard - fd.value) / abs(fd.value), 1e-3),
        _check("Rellich identity", abs(rellich.boundary - rellich.expected) / rellich.expected, 1e-4),
    ]
    write_json(
        out / "shape_derivative.json",
        {
            "eigenvalue": first.eigenvalue,
            "hadamard": hadamard,
            "finite_difference": fd.value,
            "finite_difference_error": fd.error,
            "rellich": rellich._asdict(),
            "second_cluster_derivatives": split.tolist(),
            "checks": _checks_json(checks),
        },
    )
    return checks


def _resonance_spectrum(config: ExperimentConfig) -> list[float]:
    if config.resonance.spectrum:
        return list(config.resonance.spectrum)
    disk = disk_spectrum_2d(config.eigs.n_max, config.eigs.k_max)
    distinct = [float(disk[group[0]].eigenvalue) for group in disk.clusters]
    return distinct[: config.resonance.disk_terms]


def run_resonance(config: ExperimentConfig, out: Path) -> list[Check]:
    spectrum = _resonance_spectrum(config)
    relations = resonance_scan(
        spectrum, config.resonance.complexity, config.tolerances.resonance, config.max_complexity
    )
    write_json(
        out / "resonance.json",
        {
            "spectrum": spectrum,
            "complexity": config.resonance.complexity,
            "tolerance": config.tolerances.resonance,
            "relations": [relation.to_json() for relation in relations],
        },
    )
    return []


def _sweep(config: ExperimentConfig):
    sweep = config.sweep
    if sweep.flat:
        return flat_patch_sweep(sweep.psi, sweep.eps, sweep.r0bar, sweep.theta0, delta=sweep.delta)
    surface = Surface.sphere(1.0, config.surface.resolution)
    pair = ball_toroidal_spectrum_3d(1, 1)[0]
    psi = ToroidalTraceField(pair.mode.neumann_field())
    nodes = surface.panelization.nodes
    x = nodes[np.argmax(np.linalg.norm(psi.value(nodes), axis=-1))]
    return a_terms_sweep(surface, x, psi, sweep.eps, sweep.r0bar, sweep.theta0, delta=sweep.delta)


def run_asymptotics(config: ExperimentConfig, out: Path) -> list[Check]:
    try:
        result = _sweep(config)
    except FitError as error:
        if error.data is not None:
            write_csv(out / "asymptotics.csv", _sweep_columns, error.data.rows())
        return [Check(f"epsilon sweep fit: {error}", float("nan"), 0.0, False)]
    write_csv(out / "asymptotics.csv", _sweep_columns, result.rows())

    identity = final_identity_check(np.zeros((2, 2)), 1.0)
    tol = config.tolerances.leading if config.sweep.flat else 3 * config.tolerances.leading
    checks = [
        _check("fitted c3 against prediction", float(np.max(result.relative_error)), tol),
        _check("dominant exponent", abs(result.exponent - 3), 0.1 if config.sweep.flat else 0.2),
    ]
    write_json(
        out / "asymptotics.json",
        {
            "c3": result.c3.tolist(),
            "c2": result.c2.tolist(),
            "predicted": result.predicted.tolist(),
            "exponent": result.exponent,
            "fit_residual": result.residual,
            "stable": result.stable,
            "final_identity": {
                "z": identity.z.tolist(),
                "displayed": identity.displayed.tolist(),
                "minus_half_m2": [-0.5 * m_series("M2A1", z) for z in identity.z],
            },
            "checks": _checks_json(checks),
        },
    )
    return checks


_sweep_columns = ["eps", "measured_1", "measured_2", "c3_1", "c3_2", "predicted_1", "predicted_2"]

_runners: dict[str, Callable[[ExperimentConfig, Path], list[Check]]] = {
    "specfun": run_specfun,
    "kernels-check": run_kernels_check,
    "eigs": run_eigs,
    "shape-derivative": run_shape_derivative,
    "resonance": run_resonance,
    "asymptotics": run_asymptotics,
}


# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment configuration file")
    common.add_argument("--out", type=Path, default=None, help="directory for CSV and JSON artifacts")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the configuration)")
    common.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help="logging threshold on stderr (default: WARNING)",
    )

    parser = argparse.ArgumentParser(prog="stokespec", description="Stokes eigenvalue shape-calculus experiments.")
    subparsers = parser.add_subparsers(dest="command", metavar="subcommand")
    for name in get_args(Subcommand):
        subparsers.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config is not None else ExperimentConfig()
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["out"] = args.out
    return config.model_copy(update=update)


def _output_directory(config: ExperimentConfig) -> Path:
    out = config.out or Path(".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise InputError(f"cannot create output directory {str(out)!r}: {error.strerror}") from None
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return 0 if stop.code == 0 else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = resolve_config(args)
        if args.command == "config-template":
            sys.stdout.write(config_template(config))
            return 0
        if args.dry_run:
            plan = {"subcommand": args.command, "config": config.model_dump(mode="json")}
            sys.stdout.write(json.dumps(plan, indent=2, sort_keys=True) + "\n")
            return 0
        out = _output_directory(config)
        checks = _runners[args.command](config, out)
    except InputError as error:
        parser.print_usage(sys.stderr)
        print(f"[error] {error}", file=sys.stderr)
        return 2
    except (StokespecError, OSError) as error:
        print(f"[error] {args.command}: {error}", file=sys.stderr)
        return 1

    failures = [check for check in checks if not check.passed]
    if failures:
        print(f"[{args.command}] FAIL ({len(failures)} of {len(checks)} checks)", file=sys.stderr)
        for check in failures:
            print(f"  - {check.name}: {check.value:.3e} > {check.tolerance:.1e}", file=sys.stderr)
        return 1
    print(f"[{args.command}] OK ({len(checks)} checks)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
