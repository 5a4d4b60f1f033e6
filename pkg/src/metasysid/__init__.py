"""Meta-learned identification of episodic linear time-varying systems.

The package covers the full pipeline: simulating episodic blocks
(`model`), solving the offline meta objective in closed form or by
gradient descent (`meta`), adapting online with projected stochastic
gradients and the least-squares baseline (`adapt`), evaluating the
theoretical performance bounds (`bounds`), certainty-equivalent LQR on
identified models (`control`), and a CLI + Monte-Carlo experiment harness
(`cli`, `experiments`, `config`).

Simulation kernels run through a compiled core when it was built, with a
pure-python fallback selected automatically (see `kernels.backend`).
"""

from .adapt import (
    AdaptConfig,
    AdaptTrace,
    default_c_phi,
    default_c_z,
    estimation_gap,
    lsa_adapt,
    lse_fit,
    one_shot_adapt,
    project_phi,
    project_z,
)
from .bounds import (
    BoundInputs,
    BoundReport,
    OfflineGapBound,
    SimilarityStats,
    SmallBallEstimate,
    StationaryAnalysis,
    TrackingBound,
    bound_inputs_from_model,
    build_report,
    chi_mean,
    covariate_energy_cap,
    curvature_lower_bound,
    empirical_small_ball,
    excitation_requirement_met,
    excitation_threshold,
    meta_gap_bound,
    render_report,
    similarity_stats,
    small_ball_rate,
    stationary_analysis,
    tracking_error_bound,
)
from .config import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    apply_experiment_defaults,
    parse_config,
    serialize_config,
)
from .control import LqrWeights, cec_gain, is_stabilizing, lqr_cost_empirical
from .errors import ConfigError, InstabilityError, NumericalError
from .experiments import mean_sem, run_experiment, write_csv
from .kernels import backend
from .linalg import (
    hinf_resolvent_norm,
    min_eig_sym,
    pinv,
    solve_dare,
    solve_dlyap,
    spectral_norm,
    spectral_radius,
)
from .meta import (
    DesignMatrices,
    GdResult,
    MetaDataset,
    assemble_design,
    generate_offline_dataset,
    inner_adapt,
    loss,
    meta_gradient,
    meta_objective,
    meta_solve_closed_form,
    meta_solve_gd,
    test_segment,
    train_segment,
)
from .model import (
    BlockTrajectory,
    FixedListSampler,
    GammaEnvelopes,
    HarmonicSwitchSampler,
    IIDUniformSampler,
    NoiseConfig,
    RngStream,
    SystemParams,
    gamma,
    gamma_envelopes,
    gramians,
    replay_block,
    sample_task,
    scalar_params,
    simulate_block,
    simulate_closed_loop,
    task_sample,
)

__version__ = "0.1.0"
