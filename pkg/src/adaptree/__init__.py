"""Adaptive dyadic-tree approximation, ReLU compilation, and rate experiments."""

from adaptree.adaptive_approx import (
    PiecewisePolynomial,
    RefinementScan,
    approx_error,
    build_adaptive_approximant,
    estimate_rate_s,
    estimate_seminorm,
    load_approximant,
    save_approximant,
    threshold_constant,
    truncate_tree,
)
from adaptree.corpus import (
    TargetSpec,
    estimate_minkowski_dim,
    eval_target,
    get_target,
    known_rate,
    list_targets,
    quadrature_for,
)
from adaptree.harness import (
    ExperimentConfig,
    ResultRow,
    SlopeFit,
    emit_outputs,
    fit_slope,
    generate_dataset,
    run_sweep,
)
from adaptree.dyadic_tree import (
    AdaptivePartition,
    DyadicCube,
    TruncatedTree,
    boundary_area,
    outer_leaves,
    random_proper_subtree,
    root_cube,
)
from adaptree.local_poly import (
    PolynomialPatch,
    fit_local_polynomial,
    orthonormal_basis,
    refinement_quantity,
)
from adaptree.measures import (
    Measure,
    QuadratureSpec,
    default_quadrature,
    density_measure,
    empirical_measure,
    lebesgue,
)
from adaptree.relu_compiler import (
    CompileReport,
    NetworkStats,
    ReluNetwork,
    build_bump_net,
    build_multiproduct_net,
    build_product_net,
    build_trapezoid_net,
    compile_adaptive_net,
    covering_bound,
    load_network,
    network_stats,
    relu_forward,
    save_network,
    stack_parallel,
)
from adaptree.trainer import (
    AdamState,
    Mlp,
    MlpArchitecture,
    TrainConfig,
    gradient_check,
    init_mlp,
    to_relu_network,
    train,
)

__version__ = "0.1.0"
