"""Uncertainty quantification for diffusion with a random anisotropic coefficient.

The random vector field ``V`` is expanded by pivoted Cholesky (KL) on a
tetrahedral mesh of the unit cube, each parameter sample is solved with
P1 finite elements, and mean and variance are estimated with Monte Carlo,
Halton quasi-Monte Carlo or anisotropic sparse-grid quadrature.
"""

from .config import ExperimentConfig, format_config, parse_config
from .covariance import DEFAULT_MODEL, CollocationMatrix, CovarianceModel, assemble_collocation_matrix, cov_kernel, mean_field
from .diffusion import (
    DiffusionParams,
    RegularityBounds,
    dB_first,
    dB_second,
    dC_first,
    dC_second,
    derivative_bound,
    eval_A,
    fd_check_A_derivative,
    params_from_kl,
)
from .errors import (
    AnisoUQError,
    AssemblyError,
    ClassificationError,
    ConvergenceError,
    DegenerateDirectionError,
    DomainError,
    NotPSDError,
    NumericalError,
    ResourceError,
    StructureError,
    ValidationError,
)
from .fem import BVPData, FEFunction, assemble_system, conjugate_gradient, example_bvp, fe_norm, solve_cg, solve_sample
from .kl import KLExpansion, LowRankFactor, build_kl, ellipticity_bounds, evaluate_V, pivoted_cholesky
from .mesh import BoundaryTag, TetMesh, build_cube_mesh, classify_boundary_face, prolong, refine
from .quadrature import (
    QuadratureRule,
    combination_coeffs,
    halton_rule,
    mc_rule,
    qmc_sample_count,
    sg_index_set,
    sg_rule,
    sg_weights,
)
from .uq import (
    ConvergenceRow,
    MomentFields,
    convergence_study,
    error_vs_reference,
    estimate_moments,
    mc_replicated_error,
)
from .vtk import write_vtk

__version__ = "0.1.0"
