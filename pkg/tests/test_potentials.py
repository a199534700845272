import numpy as np
import pytest
from numpy.testing import assert_allclose

from stokespec import (
    AffineField,
    BoundaryField,
    BumpField,
    BumpVariation,
    ConstantField,
    ConvergenceError,
    DomainError,
    InputError,
    ProductField,
    Surface,
    ToroidalTraceField,
    assemble,
    brinkman_correction,
    chart_at,
    conormal_representation,
    double_layer,
    double_layer_trace,
    hypersingular_decomposed,
    hypersingular_hsiao,
    interior_limit,
    k0_apply,
    pressure_double_layer,
    single_layer,
    toroidal_data,
)
from stokespec.geometry import bump_breakpoints
from stokespec.potentials import SurfaceField, flux, integrate, sphere_identity_residual, target_rule

INSIDE = np.array([0.1, 0.2, -0.3])
ON = np.array([0.0, 0.6, 0.8])


class QuadraticToroidal(SurfaceField):
    """x cross grad(x y), a degree-2 toroidal field with zero pressure."""

    def value(self, y):
        y = np.asarray(y, dtype=float)
        x1, x2, x3 = y[..., 0], y[..., 1], y[..., 2]
        return np.stack([-x1 * x3, x2 * x3, x1**2 - x2**2], axis=-1)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        x1, x2, x3 = y[..., 0], y[..., 1], y[..., 2]
        zero = np.zeros_like(x1)
        rows = [[-x3, zero, -x1], [zero, x3, x2], [2 * x1, -2 * x2, zero]]
        return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_single_layer_of_the_normal_vanishes(unit_sphere, lam):
    normal = AffineField(np.eye(3))
    value = single_layer(unit_sphere, normal, lam, INSIDE)
    assert_allclose(value.velocity, 0.0, atol=1e-6)


def test_double_layer_reproduces_constants(unit_sphere):
    c = np.array([1.0, -2.0, 0.5])
    value = double_layer(unit_sphere, ConstantField(c), 0.0, INSIDE)
    assert_allclose(value.velocity, c, atol=1e-6)
    assert pressure_double_layer(unit_sphere, ConstantField(c), 0.0, INSIDE) == pytest.approx(0.0, abs=1e-6)


def test_double_layer_is_not_evaluated_on_the_surface(unit_sphere):
    with pytest.raises(DomainError):
        double_layer(unit_sphere, ConstantField([1.0, 0.0, 0.0]), 0.0, ON)


def test_adjoint_double_layer_of_constants(unit_sphere):
    # on the unit sphere K^0[c] = c / 2
    c = np.array([0.3, 0.0, -1.0])
    assert_allclose(k0_apply(unit_sphere, ConstantField(c), ON), c / 2, atol=1e-6)


def test_sphere_identity(unit_sphere):
    assert sphere_identity_residual(unit_sphere) <= 1e-12


def test_hypersingular_routes_agree(unit_sphere):
    alpha = AffineField(np.array([0.2, -0.1, 0.4]), 1.0)
    psi = AffineField(np.array([[0.0, 1.0, 0.2], [-1.0, 0.0, 0.3], [0.1, 0.0, 0.5]]))
    decomposed = hypersingular_decomposed(unit_sphere, alpha, psi, ON)
    hsiao = hypersingular_hsiao(unit_sphere, ProductField(alpha, psi), ON)
    scale = max(np.linalg.norm(term) for term in decomposed)
    assert_allclose(decomposed.total, hsiao, atol=1e-8 * scale)


def test_rigid_rotation_has_no_traction(unit_sphere):
    omega = np.array([0.3, -0.5, 1.0])
    skew = np.cross(np.eye(3), omega).T
    terms = hypersingular_decomposed(unit_sphere, ConstantField(1.0), AffineField(skew), ON)
    scale = max(np.linalg.norm(term) for term in terms)
    assert np.linalg.norm(terms.total) <= 1e-4 * scale


def test_brinkman_correction_vanishes_for_stokes(unit_sphere):
    density = ConstantField([1.0, 0.0, 0.0])
    assert np.all(brinkman_correction(unit_sphere, density, ON, 0.0) == 0)
    assert np.linalg.norm(brinkman_correction(unit_sphere, density, ON, 4.0)) > 0


def test_target_rule_integrates_the_area(unit_sphere):
    nodes, normals, weights = target_rule(unit_sphere, ON, [0.0, 0.1, 0.5])
    assert np.sum(weights) == pytest.approx(4 * np.pi, rel=1e-10)
    with pytest.raises(InputError):
        target_rule(Surface.flat(), np.zeros(3))


def test_adjoint_assembly_is_the_weighted_transpose():
    sphere = Surface.sphere(1.0, (6, 12))
    n = sphere.size
    w = sphere.panelization.weights
    K = assemble(sphere, "K").matrix.reshape(n, 3, n, 3)
    K_star = assemble(sphere, "K*").matrix.reshape(n, 3, n, 3)
    # diagonal blocks carry the subtracted self-integrals and are not transposes
    off = ~np.eye(n, dtype=bool)[:, None, :, None]
    lhs = np.einsum("iajb,i->iajb", K_star, w)
    rhs = np.einsum("jbia,j->iajb", K, w)
    assert_allclose(np.where(off, lhs, 0.0), np.where(off, rhs, 0.0), rtol=1e-12, atol=1e-14)


def test_assembly_apply_and_export(tmp_path):
    sphere = Surface.sphere(1.0, (4, 8))
    assembly = assemble(sphere, "S", 1.0)
    density = BoundaryField.sample(sphere, ConstantField([0.0, 0.0, 1.0]))
    assert assembly.apply(density).values.shape == (sphere.size, 3)
    with pytest.raises(InputError):
        assembly.apply(np.ones(5))

    array_path, header_path = assembly.export(tmp_path / "single")
    restored = np.load(array_path).reshape(assembly.matrix.shape)
    assert_allclose(restored, assembly.matrix)
    assert '"tag": "S"' in header_path.read_text(encoding="utf-8")


def test_hypersingular_is_not_assembled():
    with pytest.raises(InputError):
        assemble(Surface.sphere(1.0, (4, 8)), "E")


def test_boundary_field_validation():
    sphere = Surface.sphere(1.0, (4, 8))
    with pytest.raises(InputError):
        BoundaryField(sphere, np.zeros((3, 3)))
    values = np.zeros((sphere.size, 3))
    values[0, 0] = np.nan
    with pytest.raises(InputError):
        BoundaryField(sphere, values)


def test_product_field_needs_a_scalar():
    with pytest.raises(InputError):
        ProductField(ConstantField([1.0, 0.0, 0.0]), ConstantField([0.0, 1.0, 0.0]))


def test_flux(unit_sphere):
    assert flux(unit_sphere, AffineField(np.eye(3))) == pytest.approx(4 * np.pi, rel=1e-12)
    assert flux(unit_sphere, ConstantField([1.0, 2.0, 3.0])) == pytest.approx(0.0, abs=1e-12)


def test_conormal_representation_rejects_incompatible_data():
    sphere = Surface.sphere(1.0, (6, 12))
    with pytest.raises(InputError):
        conormal_representation(sphere, 1.0, AffineField(np.eye(3)))
    with pytest.raises(InputError):
        conormal_representation(sphere, 1.0, ConstantField([1.0, 0.0, 0.0]), n_trunc=-1)


@pytest.mark.slow
def test_conormal_representation_terms():
    sphere = Surface.sphere(1.0, (6, 12))
    data = ToroidalTraceField(toroidal_data(1, 2.0))
    result = conormal_representation(sphere, 2.0, data, n_trunc=1)
    assert result.field.values.shape == (sphere.size, 3)
    assert len(result.term_norms) == 2
    assert np.isfinite(result.defect) and result.defect >= 0


@pytest.mark.slow
def test_jump_relation_on_constants():
    sphere = Surface.sphere(1.0, (24, 48))
    c = np.array([0.5, 1.0, -1.0])
    trace = double_layer_trace(sphere, ConstantField(c)).values
    error = np.sqrt(integrate(sphere, np.sum((trace - c) ** 2, axis=-1)))
    assert error <= 0.02 * np.linalg.norm(c) * np.sqrt(sphere.area)
    assert_allclose(interior_limit(sphere, ConstantField(c), ON), c, atol=1e-2)


def test_hypersingular_of_toroidal_and_normal_fields(unit_sphere):
    # on the unit sphere E[T_l] = (l - 1)(l + 2) / (2l + 1) T_l and E[n] = 4 n
    toroidal = QuadraticToroidal()
    expected = 4 * np.pi * 0.8 * toroidal.value(ON)
    decomposed = hypersingular_decomposed(unit_sphere, ConstantField(1.0), toroidal, ON)
    assert_allclose(decomposed.total, expected, atol=1e-3 * np.linalg.norm(expected))
    hsiao = hypersingular_hsiao(unit_sphere, toroidal, ON)
    assert_allclose(hsiao, expected, atol=1e-3 * np.linalg.norm(expected))

    normal = hypersingular_decomposed(unit_sphere, ConstantField(1.0), AffineField(np.eye(3)), ON)
    assert_allclose(normal.total, 16 * np.pi * ON, atol=1e-3 * 16 * np.pi)


def test_hypersingular_routes_agree_on_a_bump(unit_sphere):
    x = np.array([0.48, 0.36, 0.8])
    chart = chart_at(unit_sphere, x)
    variation = BumpVariation.from_polar(chart, 0.1, 0.5, 1.0)
    alpha = BumpField(variation)
    psi = ToroidalTraceField(toroidal_data(2, 2.0, index=1))
    rule = target_rule(unit_sphere, x, bump_breakpoints(0.1, 0.6), 8, 40)
    assert len(rule.weights) == 7 * 8 * 40

    decomposed = hypersingular_decomposed(unit_sphere, alpha, psi, x, rule=rule)
    hsiao = hypersingular_hsiao(unit_sphere, ProductField(alpha, psi), x, rule=rule)
    scale = max(np.linalg.norm(term) for term in decomposed)
    assert_allclose(decomposed.total, hsiao, atol=0.02 * scale)


def test_subtracted_nodal_sums(unit_sphere):
    c = np.array([0.3, 0.0, -1.0])
    constants = BoundaryField.sample(unit_sphere, ConstantField(c))
    assert_allclose(k0_apply(unit_sphere, constants, ON), c / 2, atol=1e-6)

    K = assemble(unit_sphere, "K")
    assert_allclose(K.apply(constants).values, np.broadcast_to(c / 2, (unit_sphere.size, 3)), atol=1e-5)

    normals = BoundaryField.sample(unit_sphere, AffineField(np.eye(3)))
    for node in unit_sphere.panelization.nodes[[3, 100, 257]]:
        for lam in (0.0, 1.0):
            assert_allclose(single_layer(unit_sphere, normals, lam, node).velocity, 0.0, atol=1e-2)


def test_single_layer_far_field_decay():
    sphere = Surface.sphere(1.0, (12, 24))
    density = ConstantField([1.0, -0.5, 0.25])
    distances = np.array([10.0, 20.0, 40.0])
    direction = np.array([0.6, 0.0, 0.8])
    sizes = [np.linalg.norm(single_layer(sphere, density, 0.0, t * direction).velocity) for t in distances]
    slope = np.polyfit(np.log(distances), np.log(sizes), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


@pytest.mark.slow
def test_jump_relation_on_a_toroidal_density():
    # (1/2 I + K)[T_2] = 4/5 T_2 on the unit sphere
    density = QuadraticToroidal()
    errors = []
    for resolution in [(16, 32), (32, 64)]:
        sphere = Surface.sphere(1.0, resolution)
        expected = 0.8 * density.value(sphere.panelization.nodes)
        trace = double_layer_trace(sphere, density).values
        squared = integrate(sphere, np.sum((trace - expected) ** 2, axis=-1))
        errors.append(np.sqrt(squared / integrate(sphere, np.sum(expected**2, axis=-1))))
    assert errors[1] < errors[0]
    assert errors[1] <= 0.02


@pytest.mark.slow
def test_jump_relation_on_an_affine_density():
    sphere = Surface.sphere(1.0, (32, 64))
    density = AffineField(np.array([[0.5, 1.0, 0.0], [-0.3, 0.2, 0.4], [0.1, 0.0, -0.7]]), [0.2, 0.0, -0.1])
    trace = double_layer_trace(sphere, density).values
    sample = np.arange(0, sphere.size, 97)
    reference = np.array([interior_limit(sphere, density, x) for x in sphere.panelization.nodes[sample]])
    error = np.linalg.norm(trace[sample] - reference) / np.linalg.norm(reference)
    assert error <= 0.02


@pytest.mark.slow
def test_conormal_derivative_of_a_stokes_toroidal_field():
    # the r^2-homogeneous extension of T_2 has conormal derivative T_2
    sphere = Surface.sphere(1.0, (24, 48))
    data = QuadraticToroidal()
    result = conormal_representation(sphere, 0.0, data)
    expected = data.value(sphere.panelization.nodes)
    error = np.linalg.norm(result.field.values - expected) / np.linalg.norm(expected)
    assert error <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("l", [1, 2])
def test_conormal_derivative_of_brinkman_toroidal_data(l):
    sphere = Surface.sphere(1.0, (24, 48))
    mode = toroidal_data(l, 2.0)
    result = conormal_representation(sphere, 2.0, ToroidalTraceField(mode))
    nodes = sphere.panelization.nodes
    expected = mode.conormal_trace(nodes)
    error = np.sqrt(
        integrate(sphere, np.sum((result.field.values - expected) ** 2, axis=-1))
        / integrate(sphere, np.sum(expected**2, axis=-1))
    )
    assert error <= 0.05
    # the representative is orthogonal to the normal field
    assert abs(integrate(sphere, np.sum(result.field.values * nodes, axis=-1))) <= 1e-10


@pytest.mark.slow
def test_conormal_neumann_series():
    sphere = Surface.sphere(1.0, (16, 32))
    data = ToroidalTraceField(toroidal_data(2, 2.0))
    result = conormal_representation(sphere, 2.0, data, n_trunc=2, solve=False)
    # successive partial sums get closer: |S_2 - S_1| < |S_1 - S_0|
    assert result.term_norms[2] < result.term_norms[1] < result.term_norms[0]
    assert result.defect < result.term_norms[2]

    with pytest.raises(ConvergenceError):
        data = ToroidalTraceField(toroidal_data(1, 2.0))
        conormal_representation(sphere, 2.0, data, n_trunc=4, solve=False)
