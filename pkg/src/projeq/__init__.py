"""projeq: numerical toolkit for projectively equivalent Riemannian metrics.

Builds explicit metric pairs with shared unparameterized geodesics on
periodic and open charts, classifies diffeomorphisms as isometric / affine /
projective at sample resolution, integrates and compares geodesics, realizes
the metric <-> solution-density correspondence, computes the 2x2 action of a
map on a solution basis, and runs the rotation-positivity and
determinant-sign counting analyses.  See README for the CLI.
"""

from .core import BACKEND
from .charts import (
    Chart,
    ChartError,
    Diffeomorphism,
    MetricField,
    Point,
    canonicalize,
    compose_maps,
    identity_map,
    inverse_map,
    jacobian,
    metric_jet,
    metric_values,
    pullback_metric,
    pullback_metric_field,
    sample_points,
)
from .expr import (
    Dual,
    DomainError,
    ParseError,
    eval_dual,
    eval_value,
    parse,
    serialize,
    validate_profile,
)
from .geodesics import (
    GeodesicTrace,
    IntegratorConfig,
    christoffel,
    integrate_geodesic,
    integrate_geodesics,
    trace_distance,
    unparameterized_distance,
    write_trace_csv,
)
from .metrization import (
    SolBasis,
    WeightedSolution,
    benenti_from_metrics,
    benenti_tensor,
    metric_to_sol,
    metric_to_sol_matrix,
    pullback_sol,
    simultaneous_diag,
    sol_to_metric,
)
from .projective import (
    MapClass,
    Tolerances,
    classify_map,
    connection_difference,
    geodesic_crosscheck,
    projective_report,
    projective_residual,
)
from .representation import (
    QuotientEntry,
    RepClass,
    RepMatrix,
    classify_rep,
    compute_rep,
    eigen_sequence,
    find_violating_k,
    quotient_conclusion,
    rep_compose_check,
)
from .scenarios import (
    Scenario,
    build_flat_torus,
    build_levi_civita_family,
    build_sphere_projective,
    load_scenario,
    pullback_formula_residual,
    pullback_identity_grid_residual,
    save_scenario,
)

__version__ = "0.1.0"
