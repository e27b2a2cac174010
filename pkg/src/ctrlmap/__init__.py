"""Controller synthesis and Lipschitz analysis of task-to-controller maps.

The package synthesizes discrete-time LQR and robust (attenuation-optimal)
state-feedback controllers, measures how steeply each synthesis map varies
with the task weight, and runs small imitation-learning studies on top of
those maps.
"""

__version__ = "0.1.0"

from .errors import (CtrlmapError, ClosedLoopUnstableError, DefinitenessError,
                     DomainError, ExperimentDegenerateError, GenerationError,
                     InfeasibleTaskError, InvalidInputError,
                     TrainingDivergedError)
from .hinf import (GammaFeasibility, HinfSynthesis, dgare_blocks,
                   dgare_operator, gamma_star, scalar_optimal_gain,
                   scalar_optimal_value, scalar_robust_objective, solve_dgare,
                   stacked_controller, worst_case_ratio_oracle)
from .imitation import (ImitationDataset, TeacherGains,
                        build_finite_sample_dataset,
                        build_infinite_sample_dataset, compute_teacher_gains)
from .lipschitz import LipschitzReport, estimate_lipschitz, ratio_experiment
from .lqr import (LinearSystem, RiccatiSolution, assumption1_holds,
                  assumption_margin, closed_loop_power_norm,
                  contraction_constant, contraction_constant_value,
                  input_weight, lqr_gain, lqr_lipschitz_upper_bound,
                  riccati_operator, solve_dare, stability_margin_threshold,
                  validate_task_matrix)
from .mlp import (AdamState, MlpModel, TrainConfig, TrainResult, adam_init,
                  adam_step, gelu, init_mlp, load_checkpoint, mlp_backward,
                  mlp_forward, mse_loss_and_grad, normalized_mse,
                  save_checkpoint, train)
from .seeding import derive_seed, make_rng
from .sysgen import (AlignmentReport, AssumptionReport, alignment_factor,
                     check_assumptions, gen_system_commuting,
                     gen_system_lq_experiments, gen_system_unconstrained,
                     gen_tasks, separation_coefficient_value,
                     separation_lower_coefficient)

__all__ = [
    "__version__",
    "CtrlmapError", "ClosedLoopUnstableError", "DefinitenessError",
    "DomainError", "ExperimentDegenerateError", "GenerationError",
    "InfeasibleTaskError", "InvalidInputError", "TrainingDivergedError",
    "GammaFeasibility", "HinfSynthesis", "dgare_blocks", "dgare_operator",
    "gamma_star", "scalar_optimal_gain", "scalar_optimal_value",
    "scalar_robust_objective", "solve_dgare", "stacked_controller",
    "worst_case_ratio_oracle",
    "ImitationDataset", "TeacherGains", "build_finite_sample_dataset",
    "build_infinite_sample_dataset", "compute_teacher_gains",
    "LipschitzReport", "estimate_lipschitz", "ratio_experiment",
    "LinearSystem", "RiccatiSolution", "assumption1_holds",
    "assumption_margin", "closed_loop_power_norm", "contraction_constant",
    "contraction_constant_value", "input_weight", "lqr_gain",
    "lqr_lipschitz_upper_bound", "riccati_operator", "solve_dare",
    "stability_margin_threshold", "validate_task_matrix",
    "AdamState", "MlpModel", "TrainConfig", "TrainResult", "adam_init",
    "adam_step", "gelu", "init_mlp", "load_checkpoint", "mlp_backward",
    "mlp_forward", "mse_loss_and_grad", "normalized_mse", "save_checkpoint",
    "train",
    "derive_seed", "make_rng",
    "AlignmentReport", "AssumptionReport", "alignment_factor",
    "check_assumptions", "gen_system_commuting", "gen_system_lq_experiments",
    "gen_system_unconstrained", "gen_tasks", "separation_coefficient_value",
    "separation_lower_coefficient",
]
