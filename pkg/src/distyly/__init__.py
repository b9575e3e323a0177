"""Two-type birth-death walks in the quarter plane: closed-form bounds on
the axis-absorption probability, certified grid enclosures, and Monte
Carlo machinery for the regimes the closed forms leave open."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("distyly")
except PackageNotFoundError:
    __version__ = "0+unknown"

from .bounds import (
    BoundKit,
    CheckRow,
    closed_form_bracket,
    conjectured_decay_rate,
    decay_rate_bounds,
    eval_bound,
    homogeneous_exact_q,
    log_binomial,
    random_symmetric_homogeneous,
    verify_harmonic_identities,
    verify_subharmonic_inequalities,
    write_check_report,
)
from .errors import (
    ConsistencyError,
    DistylyError,
    InvalidModelError,
    ValidationError,
)
from .grid import GridFunction
from .model import (
    COORD_CAP,
    ModelKind,
    ModelParams,
    NAMED_KINDS,
    apply_P,
    buts,
    homogeneous,
    hybrid,
    hybrid_general,
    ibcos,
    kernel_weights,
    step,
    transition,
)
from .quenched import (
    EnvironmentStream,
    MartingaleReport,
    QuenchedReport,
    apply_birth,
    apply_death,
    death_step_defect,
    product_martingale_check,
    quenched_estimate,
    verify_death_cycle_bounds,
    verify_split_identities,
)
from .simulate import (
    BehaviorReport,
    CoupledReport,
    DecayRow,
    EstimateReport,
    SimConfig,
    TailCheckRow,
    coupled_monotonicity_trial,
    decay_experiment,
    hitting_bound_checks,
    simulate_extinction,
    standard_behavior_check,
    wilson_interval,
)
from .solver import (
    BracketSolution,
    MonotoneReport,
    diagonal_decay,
    monotone_scan,
    solve_bracket,
    write_bracket_csv,
)

__all__ = [
    "__version__",
    "BoundKit",
    "BracketSolution",
    "BehaviorReport",
    "CheckRow",
    "COORD_CAP",
    "ConsistencyError",
    "CoupledReport",
    "DecayRow",
    "DistylyError",
    "EnvironmentStream",
    "EstimateReport",
    "GridFunction",
    "InvalidModelError",
    "MartingaleReport",
    "ModelKind",
    "ModelParams",
    "MonotoneReport",
    "NAMED_KINDS",
    "QuenchedReport",
    "SimConfig",
    "TailCheckRow",
    "ValidationError",
    "apply_P",
    "apply_birth",
    "apply_death",
    "buts",
    "closed_form_bracket",
    "conjectured_decay_rate",
    "coupled_monotonicity_trial",
    "death_step_defect",
    "decay_experiment",
    "decay_rate_bounds",
    "diagonal_decay",
    "eval_bound",
    "hitting_bound_checks",
    "homogeneous",
    "homogeneous_exact_q",
    "hybrid",
    "hybrid_general",
    "ibcos",
    "kernel_weights",
    "log_binomial",
    "monotone_scan",
    "product_martingale_check",
    "quenched_estimate",
    "random_symmetric_homogeneous",
    "simulate_extinction",
    "solve_bracket",
    "standard_behavior_check",
    "step",
    "transition",
    "verify_death_cycle_bounds",
    "verify_harmonic_identities",
    "verify_split_identities",
    "verify_subharmonic_inequalities",
    "wilson_interval",
    "write_check_report",
]
