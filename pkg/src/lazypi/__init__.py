"""Fast distribution-free prediction intervals for neural-network regression.

One differentially private full-model fit followed by closed-form linearized
leave-one-out solves replaces the n retrainings of jackknife+-style interval
construction, at a coverage cost controlled by the privacy budget and the
out-of-sample stability of the trainer.
"""

from .nn import (
    MlpArchitecture,
    ParamVector,
    RegressionDataset,
    batch_forward,
    batch_forward_many,
    forward,
    init_params,
    loss_gradient,
    param_jacobian,
)
from .privacy import (
    DpSgdConfig,
    PrivacyBudget,
    SensitivityBound,
    account_privacy,
    clip_gradient,
    dp_sgd_train,
    gaussian_mechanism_epsilon,
    laplace_perturb,
    theorem_slack,
)
from .lazy import (
    GramSystem,
    LazyConfig,
    LooFit,
    build_gram_system,
    dual_ridge_correction,
    estimate_stability,
    fit_all_loo,
    lazy_solve,
    lazy_solve_deleted_init,
    loo_predictions,
    primal_ridge_correction,
)
from .intervals import (
    IntervalConfig,
    PredictionInterval,
    dp_lazy_interval,
    jackknife_interval,
    jackknife_plus_bounds,
    jackknife_plus_interval,
    naive_interval,
    quantile_lower,
    quantile_upper,
)
from .bench import (
    ComparisonResult,
    RunManifest,
    SimConfig,
    TrialResult,
    load_tabular,
    run_comparison,
    run_trial,
    simulate_data,
    split_data,
    write_dataset_csv,
)

__version__ = "0.1.0"
