"""Mixed RTN0/Q0 finite elements for multigroup SPN neutronics.

Guaranteed a posteriori error estimators, conforming flux reconstruction,
directional adaptive mesh refinement and a DD+L2-jumps multi-domain
discretization on Cartesian tensor meshes.
"""

from .amr import AmrConfig, AmrIterationRecord, mark_direction, run_amr_ddm, run_amr_mono
from .coefficients import (
    AngularConstants,
    CrossSectionSet,
    Material,
    MatrixBundle,
    assemble_parity_matrices,
    assemble_robin_matrices,
    build_bundle,
    build_bundles,
    compute_angular_constants,
    diffusion_reduction,
    material_from_diffusion,
    validate_coefficient_assumptions,
)
from .ddm import (
    MultiDomainSolution,
    MultiplierSpace,
    assemble_ddm,
    build_multiplier_space,
    check_interface_assumption,
    check_jump_free,
    discrete_jump,
    project_multiplier_to_trace,
    project_trace_to_multiplier,
    solve_ddm,
)
from .estimators import (
    EstimatorField,
    approximate_local_dual_norm,
    compute_estimators,
    delta_star_residual,
    flux_estimator,
    local_indicator,
    residual_estimator,
    robin_bc_estimator,
)
from .fem import (
    AssembledSystem,
    CellCoefficients,
    DofLayout,
    MixedField,
    assemble_mono,
    equilibrium_residual,
    local_rtn0_matrices,
    s_norm,
    solve_system,
    t_coercivity_check,
    x_norm_sq,
)
from .mesh import (
    BCKind,
    Interface,
    InterfaceMesh,
    SubdomainLayout,
    TensorGrid,
    build_grid,
    build_layout,
    cell_neighbors,
    overlay_traces,
    refine_slabs,
)
from .reconstruction import (
    NodalFluxField,
    average_reconstruct,
    average_reconstruct_multidomain,
)

__version__ = "0.1.0"
