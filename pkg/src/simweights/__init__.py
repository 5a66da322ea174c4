"""Similarity-based weighting of external subgroup data for small-sample prediction."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapReport,
    WeightedCdf,
    box_cox,
    bootstrap_632plus,
    estimate_632plus,
    inverse_box_cox,
    weighted_cdf,
)
from .data import Dataset, read_csv, write_csv
from .experiment import (
    CellResult,
    GridSpec,
    GridSummary,
    run_cell,
    run_grid,
    summarize_by_ess_ratio,
)
from .glm import (
    LinearFit,
    LogisticFit,
    LogisticIRLS,
    WeightedLinearRegression,
    fit_logistic,
    fit_weighted_linear,
    predict_linear,
    predict_proba,
    rmse,
)
from .scm import (
    ScenarioKind,
    ScenarioSpec,
    SimulatedData,
    make_shift_vector,
    simulate,
    simulate_target_test,
)
from .weights import (
    PropensityComparison,
    SimilarityWeightedRegressor,
    SimilarityWeighter,
    WeightedSample,
    build_weighted_sample,
    compute_auc,
    compute_weights,
    effective_sample_size,
    fit_propensity,
    truncate_weights,
)

__all__ = [name for name in dir() if not name.startswith("_")]
