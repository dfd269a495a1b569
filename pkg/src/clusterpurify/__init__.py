"""Transductive few-shot classification by progressive cluster purification."""

from .data import (
    CapacityError,
    EmbeddingDataset,
    Episode,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    sample_episode,
    write_dataset,
)
from .harness import (
    EvalProtocol,
    EvalReport,
    SweepReport,
    benchmark_synthetic_config,
    evaluate,
    paired_difference,
    run_sweep,
)
from .purify import (
    MODES,
    ClusterAssignment,
    DegreeTable,
    PcpConfig,
    PcpResult,
    Prototypes,
    classify,
    compute_prototypes,
    degrees,
    pcp_run,
    refine_prototypes,
    relation_matrix,
)
from .simnet import (
    AdamState,
    SimilarityNet,
    adam_step,
    forward,
    init_net,
    load_checkpoint,
    loss_inter,
    loss_intra,
    save_checkpoint,
)
from .trainer import TrainConfig, TrainLog, train, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "EvalProtocol",
    "EvalReport",
    "SweepReport",
    "benchmark_synthetic_config",
    "evaluate",
    "paired_difference",
    "run_sweep",
    "CapacityError",
    "EmbeddingDataset",
    "Episode",
    "SyntheticConfig",
    "generate_synthetic",
    "load_dataset",
    "sample_episode",
    "write_dataset",
    "MODES",
    "ClusterAssignment",
    "DegreeTable",
    "PcpConfig",
    "PcpResult",
    "Prototypes",
    "classify",
    "compute_prototypes",
    "degrees",
    "pcp_run",
    "refine_prototypes",
    "relation_matrix",
    "AdamState",
    "SimilarityNet",
    "adam_step",
    "forward",
    "init_net",
    "load_checkpoint",
    "loss_inter",
    "loss_intra",
    "save_checkpoint",
    "TrainConfig",
    "TrainLog",
    "train",
    "train_stage1",
    "train_stage2",
]
