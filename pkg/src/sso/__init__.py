"""Two-phase spectral shape optimization on a box.

Minimizes the second Dirichlet eigenvalue plus a volume penalty over subsets
of a rectangle, through the equivalent two-phase free-boundary formulation,
with a p-relaxed descent backend, a direct cell-move backend, and a suite of
free-boundary diagnostics (blow-ups, boundary adjusted energy, slope fits).
"""

__version__ = "0.1.0"

from .grid import (
    BoxGeometry,
    DiskGeometry,
    Grid,
    ScalarField,
    VectorField,
    build_grid,
    dirichlet_energy,
    gradient_field,
    l2_inner,
    l2_norm,
    sphere_average,
)
from .eigensolver import EigenResult, EmptyDomainError, rayleigh_quotient, smallest_eigenpairs
from .functional import (
    DegeneratePhaseError,
    ObjectiveBreakdown,
    coefficients_a,
    f_lambda,
    j_infty,
    j_p,
    objective_relaxed,
    smoothed_volume,
    support_measure,
)
from .variation import (
    StationarityReport,
    first_variation_rayleigh,
    first_variation_volume,
    stationarity_residual,
)
from .optimizer import (
    PhaseCollapseError,
    PhaseState,
    SolverConfig,
    assemble_sign_split,
    initialize,
    load_state,
    save_state,
    solve_multiphase,
    solve_relaxed,
)
from .diagnostics import (
    DiagnosticsReport,
    TwoPlaneFit,
    WeissCurve,
    blow_up,
    contact_distance,
    fit_two_plane,
    identity_suite,
    nondegeneracy_eta,
    potential_estimate_pair,
    slope_identity_residual,
    three_phase_product,
    weiss_energy,
    weiss_scan,
)
