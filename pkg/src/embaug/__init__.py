"""embaug: embedding-space augmentation, classifier training, calibration
metrics, and confidence-threshold selection for the "none" category."""

from .augment import AugmentConfig, MixedPair, augment_batch, e_mixup, e_stitchup, sample_lambda, soften
from .data import (
    NONE_LABEL,
    EmbeddingDataset,
    Split,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    read_dataset,
    split,
    write_dataset,
)
from .metrics import (
    AccuracyTriplet,
    PredictionSet,
    ReliabilityDiagram,
    ThresholdedOutcome,
    accuracy_triplet,
    apply_threshold,
    confidence_accuracy_correlation,
    confidence_histogram,
    pr_auc_ovr,
    reliability,
    roc_auc_ovr,
)
from .model import MlpModel, backward, bce_loss, forward, init, load_model, save_model
from .threshold import ThresholdSweep, heuristic_intersection, heuristic_ratio, sweep
from .trainer import TrainConfig, TrainingHistory, lr_at, train

__version__ = "0.1.0"
