"""Preference-based tuning of quadratic MPC objective functions."""

from .dataset import (
    GenConfig,
    LoadedDataset,
    PreferenceDataset,
    TrajectoryPool,
    build_pairs,
    generate_pool,
    load_dataset,
    random_pd_diag,
    random_pd_matrix,
    sample_initial_state,
    sample_weights,
    save_dataset,
)
from .errors import (
    ConvergenceError,
    DatasetFormatError,
    GenerationError,
    TrainingError,
    UnsupportedVersionError,
)
from .learner import (
    Theta,
    TrainConfig,
    TrainedModel,
    loss,
    loss_gradient,
    make_matrix_init_sampler,
    model_accuracy,
    pref_prob,
    score,
    surrogate_pref,
    theta_dim,
    theta_from_matrices,
    theta_lower_bounds,
    theta_to_matrices,
    train,
    train_holdout,
    train_multistart,
)
from .linsys import (
    LinearSystem,
    lqr_gain,
    make_oscillating_masses,
    rollout_lqr,
    simulate,
    solve_dare,
)
from .mpc import (
    CampaignResult,
    CampaignRow,
    ClosedLoopResult,
    MpcSpec,
    QpProblem,
    closed_loop,
    condense,
    evaluate_campaign,
    mpc_step,
    solve_box_qp,
)
from .oracle import accuracy, pref_input, pref_quadratic, pref_settling
from .trajectory import (
    SettlingResult,
    Trajectory,
    max_input_inf_norm,
    quad_cost,
    settling_time,
    stage_grams,
)

__version__ = "0.1.0"
