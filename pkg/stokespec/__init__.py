from ._config import ExperimentConfig, config_template, load_config, parse_config
from .asymptotics import (
    EpsilonSweep,
    RemainderSweep,
    SecondOrderTerms,
    WTerms,
    a_terms_sweep,
    final_identity_check,
    flat_patch_sweep,
    gaussian_moment_bound,
    gaussian_principal_value,
    predicted_leading,
    remainder_sweep,
    second_order_quadrature,
    second_order_terms,
    w_terms,
)
from .eigensolver import (
    EigenPair,
    Spectrum,
    StarDomain,
    StreamMode,
    ToroidalMode,
    ball_toroidal_spectrum_3d,
    cluster_eigenvalues,
    dirichlet_energy,
    disk_mode,
    disk_spectrum_2d,
    green_identity_residual,
    neumann_trace,
    perturbed_disk_spectrum,
    toroidal_data,
)
from .exceptions import (
    AccuracyError,
    ConfigError,
    ConvergenceError,
    DomainError,
    FitError,
    InputError,
    ResourceError,
    SingularityError,
    StokespecError,
)
from .geometry import (
    BumpVariation,
    Panelization,
    Surface,
    SurfaceChart,
    bump_tangential_gradient,
    bump_value,
    chart_at,
    chart_polar_rule,
    cutoff,
    gaussian,
    normal_inner_product,
    real_harmonic,
)
from .kernels import (
    adjoint_kernel,
    conormal_second_kernel,
    delta_lambda,
    delta_lambda_at_origin,
    delta_lambda_expansion,
    double_layer_kernel,
    gamma0,
    gamma_lambda,
    pressure_double_layer_kernel,
    stokeslet_derivatives,
)
from .potentials import (
    AffineField,
    BoundaryField,
    BumpField,
    ConstantField,
    OperatorAssembly,
    ProductField,
    SurfaceField,
    ToroidalTraceField,
    assemble,
    brinkman_correction,
    conormal_representation,
    double_layer,
    double_layer_trace,
    hypersingular_decomposed,
    hypersingular_hsiao,
    interior_limit,
    k0_apply,
    pressure_double_layer,
    single_layer,
    target_rule,
)
from .shapecalc import (
    HadamardMatrix,
    ResonanceRelation,
    eigenvalue_derivative,
    finite_difference_derivative,
    hadamard_matrix,
    normal_derivative_of_normal,
    oz_condition_check,
    rellich_identity,
    resonance_scan,
    rotate_cluster,
    shape_system_residual,
)
from .specfun import (
    EntireSeries,
    combination_series,
    cross_validation,
    entire_series,
    gamma_half_integer_check,
    identity_suite,
    m_generic,
    m_quadrature,
    m_series,
    wallis,
)

__version__ = "0.1.0"
