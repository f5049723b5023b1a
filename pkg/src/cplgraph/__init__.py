"""Cautious pseudo labeling for graph learning.

Self-training for node classification and link prediction in which only the
most confident model predictions are committed as labels each iteration,
together with the measurable guarantees that make the approach auditable: a
perturbation budget for augmented views, an error bound from the committed
confidence floor and multi-view inconsistency, and a per-iteration
covariance diagnostic on the training loss.
"""

from .augment import (
    AugmentationPlan,
    MaskPair,
    MultiViewConfidence,
    PerturbationBudget,
    apply_augmentation,
    estimate_gpi_constant,
    estimate_inconsistency,
    multi_view_confidence,
    perturbation_magnitude,
    sample_masks,
)
from .config import (
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    PlConfig,
    SplitConfig,
    TrainingConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    validate_config,
    with_strategy,
)
from .engine import (
    CovarianceDiagnostic,
    IterationRecord,
    LinkTaskData,
    NodeTaskData,
    PlState,
    RunResult,
    StrategySelection,
    build_task_data,
    covariance_diagnostic,
    error_bound,
    loss_trajectory_check,
    run_baseline,
    run_cpl,
    run_random_pl,
    run_single,
    run_sweep,
    select_random,
    select_top_k,
)
from .graph import (
    EdgeSplit,
    FeatureMatrix,
    NodeLabels,
    NodeSplit,
    SparseGraph,
    generate_sbm,
    identity_features,
    load_edge_list,
    load_features,
    load_labels,
    normalize_adjacency,
    split_edges,
    split_nodes,
)
from .metrics import accuracy_and_error, auc, average_precision
from .nn import (
    AdamState,
    Confidence,
    ForwardCache,
    GcnModel,
    GcnParams,
    adam_step,
    classify,
    cross_entropy,
    decode_links,
    gcn_backward,
    gcn_forward,
    glorot_init,
    init_gcn_params,
    load_checkpoint,
    save_checkpoint,
)
from .report import (
    EvalReport,
    aggregate_runs,
    diagnose_report,
    run_report,
    sweep_report,
    write_json,
    write_series_csv,
)
from .util import ConfigError, DataError, NumericalError, derive_seed

__version__ = "0.1.0"
