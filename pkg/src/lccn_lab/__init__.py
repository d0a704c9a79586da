"""Label-noise experiments with a latent class-conditional flip model.

The package couples a small classifier with an explicit noisy-channel model:
latent true labels are resampled by collapsed Gibbs steps while the classifier
is fit to the current label estimates by minibatch SGD. Baselines (plain CE,
bootstrap, fixed forward correction, a learnable transition layer, and a
batch-EM reference) share the same classifier code so trajectories are
directly comparable.
"""

from .classifier import (
    Architecture,
    ClassifierParams,
    LossConfig,
    OptimizerState,
    clipped_cross_entropy,
    forward_proba,
    init_params,
    load_checkpoint,
    pretrain_ce,
    save_checkpoint,
    soft_target_cross_entropy,
)
from .datagen import (
    OOD_LABEL,
    LabeledDataset,
    NoiseInjectionReport,
    NoiseSpec,
    apply_noise,
    inject_asymmetric_pairflip,
    inject_openset,
    inject_symmetric,
    load_dataset,
    make_gaussian_mixture,
    mark_clean_subset,
    save_dataset,
)
from .errors import InvariantError, ParameterError, TrainingError
from .metrics import (
    MetricsRecord,
    correction_ratio,
    read_metrics_csv,
    test_accuracy,
    transition_frobenius_error,
    transition_l1_error,
    variation_histogram,
    write_histogram_csv,
    write_metrics_csv,
)
from .noise_model import (
    ConfusionCounts,
    DirichletPrior,
    TransitionMatrix,
    TransitionUpdateBound,
    conditional_transition,
    transition_from_counts,
    update_bound,
    warmup_transition,
)
from .sampler import (
    AnnealSchedule,
    GibbsDiagnostics,
    LatentAssignment,
    anneal_coefficient,
    exact_posterior_bruteforce,
    gibbs_sample_batch,
    mixing_diagnostic,
    sampling_distribution,
    total_variation_rows,
)
from .trainers import (
    TRAINER_KINDS,
    BatchVariation,
    RunResult,
    TrainConfig,
    em_e_step,
    run_trainer,
    train_bootstrap_hard,
    train_ce,
    train_em_reference,
    train_forward_fixed,
    train_lccn,
    train_lccn_plus,
    train_lccn_star,
    train_s_adaptation,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "AnnealSchedule",
    "BatchVariation",
    "ClassifierParams",
    "ConfusionCounts",
    "DirichletPrior",
    "GibbsDiagnostics",
    "InvariantError",
    "LabeledDataset",
    "LatentAssignment",
    "LossConfig",
    "MetricsRecord",
    "NoiseInjectionReport",
    "NoiseSpec",
    "OOD_LABEL",
    "OptimizerState",
    "ParameterError",
    "RunResult",
    "TRAINER_KINDS",
    "TrainConfig",
    "TrainingError",
    "TransitionMatrix",
    "TransitionUpdateBound",
    "anneal_coefficient",
    "apply_noise",
    "clipped_cross_entropy",
    "conditional_transition",
    "correction_ratio",
    "em_e_step",
    "exact_posterior_bruteforce",
    "forward_proba",
    "gibbs_sample_batch",
    "init_params",
    "inject_asymmetric_pairflip",
    "inject_openset",
    "inject_symmetric",
    "load_checkpoint",
    "load_dataset",
    "make_gaussian_mixture",
    "mark_clean_subset",
    "mixing_diagnostic",
    "pretrain_ce",
    "read_metrics_csv",
    "run_trainer",
    "sampling_distribution",
    "save_checkpoint",
    "save_dataset",
    "soft_target_cross_entropy",
    "test_accuracy",
    "total_variation_rows",
    "train_bootstrap_hard",
    "train_ce",
    "train_em_reference",
    "train_forward_fixed",
    "train_lccn",
    "train_lccn_plus",
    "train_lccn_star",
    "train_s_adaptation",
    "transition_from_counts",
    "transition_frobenius_error",
    "transition_l1_error",
    "update_bound",
    "variation_histogram",
    "warmup_transition",
    "write_histogram_csv",
    "write_metrics_csv",
]
