import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import jn_zeros

from stokespec import (
    DomainError,
    EigenPair,
    InputError,
    Spectrum,
    StarDomain,
    Surface,
    cluster_eigenvalues,
    dirichlet_energy,
    disk_mode,
    disk_spectrum_2d,
    green_identity_residual,
    neumann_trace,
    perturbed_disk_spectrum,
    toroidal_data,
)
from stokespec.eigensolver import ball_rule, gram_matrix, star_rule, stokes_residual


def _disk_points(rng, count=30):
    r = np.sqrt(rng.uniform(0, 0.95, count))
    theta = rng.uniform(0, 2 * np.pi, count)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def _ball_points(rng, count=30):
    x = rng.normal(size=(count, 3))
    return x / np.linalg.norm(x, axis=-1, keepdims=True) * rng.uniform(0.05, 0.95, (count, 1))


def test_disk_eigenvalues(disk_spectrum):
    assert disk_spectrum[0].eigenvalue == pytest.approx(jn_zeros(1, 1)[0] ** 2, rel=1e-12)
    assert disk_spectrum.multiplicities()[:3] == [1, 2, 2]
    assert disk_spectrum[1].eigenvalue == pytest.approx(jn_zeros(2, 1)[0] ** 2, rel=1e-12)


def test_disk_modes_solve_the_problem(disk_spectrum, rng):
    x = _disk_points(rng)
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    boundary = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    for pair in disk_spectrum.pairs[:5]:
        assert stokes_residual(pair.mode, x) <= 1e-8 * pair.eigenvalue
        assert_allclose(pair.mode.divergence(x), 0.0, atol=1e-10)
        assert_allclose(pair.velocity(boundary), 0.0, atol=1e-10)


def test_disk_modes_are_normalized(disk_spectrum):
    rule = star_rule(lambda theta: np.ones_like(theta))
    modes = [pair.mode for pair in disk_spectrum.pairs[:5]]
    assert_allclose(gram_matrix(modes, rule), np.eye(5), atol=1e-8)
    for mode in modes:
        assert dirichlet_energy(mode, rule) == pytest.approx(mode.eigenvalue, rel=1e-8)


def test_ball_clusters(ball_spectrum, l1_cluster, l2_cluster):
    assert ball_spectrum.multiplicities() == [3, 5]
    assert len(l1_cluster) == 3 and len(l2_cluster) == 5
    # first zeros of j_1 and j_2
    assert l1_cluster[0].eigenvalue == pytest.approx(4.493409457909064**2, rel=1e-12)
    assert l2_cluster[0].eigenvalue == pytest.approx(5.763459196894550**2, rel=1e-12)


def test_toroidal_modes_solve_the_problem(ball_spectrum, rng):
    x = _ball_points(rng)
    nodes = Surface.sphere(1.0, (8, 16)).panelization.nodes
    for pair in ball_spectrum.pairs:
        assert stokes_residual(pair.mode, x) <= 1e-8 * pair.eigenvalue
        assert_allclose(pair.mode.divergence(x), 0.0, atol=1e-10)
        assert_allclose(pair.velocity(nodes), 0.0, atol=1e-12)
        assert np.all(pair.pressure(x) == 0)


def test_toroidal_modes_are_orthonormal(l2_cluster):
    rule = ball_rule()
    modes = [pair.mode for pair in l2_cluster]
    assert_allclose(gram_matrix(modes, rule), np.eye(5), atol=1e-8)
    assert dirichlet_energy(modes[0], rule) == pytest.approx(modes[0].eigenvalue, rel=1e-8)


def test_neumann_trace_on_the_sphere(l1_cluster):
    sphere = Surface.sphere(1.0, (8, 16))
    nodes = sphere.panelization.nodes
    for pair in l1_cluster:
        assert_allclose(neumann_trace(pair, sphere), pair.mode.neumann_field().velocity(nodes), atol=1e-12)


def test_neumann_trace_needs_matching_dimension(disk_spectrum):
    with pytest.raises(InputError):
        neumann_trace(disk_spectrum[0], Surface.sphere(1.0, (4, 8)))


@pytest.mark.parametrize("dimension", [2, 3])
def test_green_identities(dimension, disk_spectrum, ball_spectrum):
    spectrum = disk_spectrum if dimension == 2 else ball_spectrum
    a, b = spectrum[0].mode, spectrum[1].mode
    residual = green_identity_residual(a, b, eta=a.eigenvalue)
    scale = max(a.eigenvalue, b.eigenvalue)
    assert abs(residual.first) <= 1e-6 * scale
    assert abs(residual.second) <= 1e-6 * scale


def test_cluster_eigenvalues():
    assert cluster_eigenvalues([1.0, 1.0 + 1e-12, 2.0, 2.5, 2.5], 1e-9) == [0, 0, 1, 2, 2]
    assert cluster_eigenvalues([], 1e-9) == []


def test_spectrum_must_be_sorted(disk_spectrum):
    mode = disk_spectrum[0].mode
    with pytest.raises(InputError):
        Spectrum((EigenPair(2.0, mode, 0), EigenPair(1.0, mode, 1)), 1e-9)


def test_spectrum_json(disk_spectrum):
    data = disk_spectrum.to_json()
    assert len(data["eigenvalues"]) == len(disk_spectrum)
    assert [c["multiplicity"] for c in data["clusters"]] == disk_spectrum.multiplicities()


def test_invalid_modes():
    with pytest.raises(InputError):
        disk_mode(0, 1, "sin")
    with pytest.raises(InputError):
        disk_spectrum_2d(-1, 1)
    with pytest.raises(DomainError):
        toroidal_data(1, 0.0)
    with pytest.raises(DomainError):
        StarDomain(np.cos, -2.0).check()


@pytest.mark.slow
def test_unperturbed_particular_solutions(disk_spectrum):
    spectrum = perturbed_disk_spectrum(lambda theta: np.cos(2 * theta), 0.0, n_eigs=3)
    assert_allclose(spectrum.eigenvalues, disk_spectrum.eigenvalues[:3], rtol=1e-6)
    assert spectrum.multiplicities() == [1, 2]
