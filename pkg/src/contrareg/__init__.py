"""Contrastive feature regularization for deep imbalanced regression.

The training objective combines a plain regression loss with a pair-based
regularizer that pulls together label-similar examples and pushes apart
examples whose predictions agree while their labels do not, weighted by
label distance and label rarity. The package ships a small manually
differentiated MLP stack, a synthetic imbalanced benchmark, shot-wise
evaluation metrics, and an experiment CLI.
"""

from ._kernels import active_backend
from .datagen import (
    AugmentSpec,
    Dataset,
    SyntheticSpec,
    augment_twice,
    generate,
    load_csv,
    save_csv,
)
from .errors import (
    ConfigError,
    ContraregError,
    CsvFormatError,
    EmptyPositiveSetError,
    InvalidInputError,
    TrainingDivergedError,
)
from .evaluate import (
    MetricsReport,
    PenaltyCurve,
    ShotPartition,
    assign_shots,
    collapse_rate,
    metrics,
    overall_metrics,
    penalty_curve,
)
from .experiment import (
    ComparisonTable,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    RunResult,
    compare_methods,
    emit_config,
    parse_config,
    run_experiment,
)
from .labels import (
    DensityTable,
    SimilarityRule,
    inverse_frequency_weights,
    is_similar,
    label_distance,
    lds_weights,
    pushing_power,
    pushing_weight,
    smooth_counts,
)
from .loss import (
    ContrastConfig,
    LossBreakdown,
    contrastive_loss,
    loss_breakdown,
    per_anchor_loss,
    pushing_weights_for,
    regression_loss,
    total_loss,
)
from .mlp import (
    AdamState,
    MlpModel,
    adam_step,
    backward,
    build_mlp,
    forward,
    load_model,
    save_model,
)
from .pairing import AugmentedBatch, PairSets, anchor_count, select_pairs

__version__ = "0.1.0"
