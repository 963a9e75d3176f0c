"""Cross-domain anomaly detection: adversarially aligned sequence encoders
trained on a labeled network-flow domain, deciding via latent k-means on an
unlabeled multi-layer telemetry domain."""

__version__ = "0.1.0"

from .datamodel import (
    DomainTag,
    FlowTable,
    LabelRule,
    RunConfig,
    SequenceSample,
    SequenceSet,
    make_sequences,
    validate_flow_table,
)
from .ingest import (
    DatasetSchema,
    Normalizer,
    SynthConfig,
    apply_normalizer,
    fit_normalizer,
    load_csv,
    load_schema_preset,
    split,
    synth_generate,
)
from .losses import LossWeights, TripletConfig
from .train import FitResult, TrainConfig, TrainState, fit, load_checkpoint, save_checkpoint
from .cluster import Centroids, decide, dunn_index_oracle, kmeans_fit, map_centroids_to_classes
from .evaluate import ConfusionMatrix, EvalReport, confusion, metrics

__all__ = [
    "__version__",
    "Centroids",
    "ConfusionMatrix",
    "DatasetSchema",
    "DomainTag",
    "EvalReport",
    "FitResult",
    "FlowTable",
    "LabelRule",
    "LossWeights",
    "Normalizer",
    "RunConfig",
    "SequenceSample",
    "SequenceSet",
    "SynthConfig",
    "TrainConfig",
    "TrainState",
    "TripletConfig",
    "apply_normalizer",
    "confusion",
    "decide",
    "dunn_index_oracle",
    "fit",
    "fit_normalizer",
    "kmeans_fit",
    "load_checkpoint",
    "load_csv",
    "load_schema_preset",
    "make_sequences",
    "map_centroids_to_classes",
    "metrics",
    "save_checkpoint",
    "split",
    "synth_generate",
    "validate_flow_table",
]
