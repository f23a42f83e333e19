"""Kernel-based unconditionally stable high-order solver for Hamilton-Jacobi equations."""

from .boundary import (
    BoundaryError,
    RootSelection,
    extrapolate_derivatives,
    ilw_dirichlet_1d,
    ilw_dirichlet_2d,
    ilw_neumann_1d,
    ilw_neumann_2d,
    select_inflow_root,
)
from .grid import Field, Grid1D, Grid2D, GridError, make_perturbed_grid, make_uniform_grid
from .kernels import BACKEND
from .operators import (
    BoundaryDerivatives,
    DerivativePair,
    FilterOptions,
    OperatorContext,
    OperatorError,
    apply_D0,
    apply_DL,
    apply_DR,
    apply_IL,
    apply_IR,
    reconstruct_bounded,
    reconstruct_periodic,
)
from .problem import (
    BUILTIN_NAMES,
    BoundarySpec,
    Hamiltonian1D,
    Hamiltonian2D,
    Problem,
    ProblemError,
    SideCondition,
    builtin_problem,
    expression_problem,
    wave_speed_1d,
)
from .quadrature import LinePlan, WenoDiagnostics, exp_moments
from .scheme import (
    SchemeConfig,
    SolverAbort,
    StabilityWarning,
    StepDiagnostics,
    beta_max,
    default_beta,
    llf_flux_1d,
    llf_flux_2d,
    run_solver,
    select_timestep,
    ssp_rk_step,
)

__version__ = "0.1.0"
