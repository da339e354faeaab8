"""Federated learning of a shared linear classifier over frozen embeddings,
with per-client orthogonal feature transforms."""

from .cayley import (
    BlockSpec,
    LinearTransform,
    LocalTransform,
    cayley_map,
    cayley_pullback,
    dof,
    identity_transform,
    skew_part,
)
from .config import ExperimentConfig, load_config
from .data import (
    EmbeddingDataset,
    Manifest,
    SplitDataset,
    generate_synthetic,
    load_manifest,
    read_fcls,
    read_femb,
    split,
    write_fcls,
    write_femb,
)
from .estimator import OrthogonalTransformClassifier
from .evaluation import (
    MetricsReport,
    compute_metrics,
    diagnose,
    evaluate,
    leave_one_out,
    write_outputs,
)
from .federation import (
    ClientState,
    FederationConfig,
    ServerState,
    aggregate,
    local_update,
    make_client,
    run_federation,
)
from .head import HeadGradients, HeadParams, forward, gradients, loss, predict
from .sgd import HeadOptimizer, OptimConfig, sgd_step

__version__ = "0.1.0"

__all__ = [
    "BlockSpec",
    "ClientState",
    "EmbeddingDataset",
    "ExperimentConfig",
    "FederationConfig",
    "HeadGradients",
    "HeadOptimizer",
    "HeadParams",
    "LinearTransform",
    "LocalTransform",
    "Manifest",
    "MetricsReport",
    "OptimConfig",
    "OrthogonalTransformClassifier",
    "ServerState",
    "SplitDataset",
    "aggregate",
    "cayley_map",
    "cayley_pullback",
    "compute_metrics",
    "diagnose",
    "dof",
    "evaluate",
    "forward",
    "generate_synthetic",
    "gradients",
    "identity_transform",
    "leave_one_out",
    "load_config",
    "load_manifest",
    "local_update",
    "loss",
    "make_client",
    "predict",
    "read_fcls",
    "read_femb",
    "run_federation",
    "sgd_step",
    "skew_part",
    "split",
    "write_fcls",
    "write_femb",
    "write_outputs",
]
