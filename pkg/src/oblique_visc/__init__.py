"""Monotone finite-difference laboratory for fully nonlinear elliptic
equations F(D^2 u) = f with oblique derivative boundary conditions
beta . Du + gamma u = g on part of the boundary.

Solves the problem class with wide-stencil monotone schemes (pseudo-time
marching and policy iteration) and audits the classical estimates at desk
scale: the Alexandrov-Bakelman-Pucci maximum principle via discrete convex
envelopes, boundary Harnack quotients, Hoelder / C^{1,alpha} / C^{2,alpha}
exponent fits, barrier certification, and comparison/uniqueness checks.
"""

from .geometry import (
    CapSpec,
    Domain,
    ObliqueField,
    PolyGraph,
    beta_projection,
    flatten_transform,
    make_box_domain,
    make_graph_domain,
    make_half_disk,
    make_spherical_cap,
    one_direction_constant,
    unflatten_transform,
)
from .operators import (
    Ellipticity,
    OperatorSpec,
    bellman_operator,
    ellipticity_audit,
    evaluate,
    linear_operator,
    normalization_shift,
    pucci_minus,
    pucci_plus,
    reduced_boundary_operator,
)
from .discretize import (
    DiscreteProblem,
    Grid,
    GridField,
    NodeClass,
    build_grid,
    discretize,
    full_residual,
    write_field_csv,
)
from .solve import SolveReport, solve, solve_policy_iteration, solve_pseudo_time
from .envelope import (
    EnvelopeResult,
    abp_audit,
    convex_envelope,
    convex_envelope_array,
    convex_envelope_bruteforce,
)
from .barriers import (
    BarrierSpec,
    dirichlet_quadratic_barrier,
    exterior_sphere_barrier,
    harnack_barrier,
    hessian_fd_error,
    holder_cone_barrier,
    rho_admissible,
    verify_supersolution,
)
from .lab import (
    HarnackRegions,
    RegularityFit,
    c1alpha_fit,
    c2alpha_fit,
    comparison_audit,
    convergence_study,
    harnack_quotient,
    harnack_regions,
    holder_fit,
    l2_norm,
)
from .report import AuditReport

__version__ = "0.1.0"
