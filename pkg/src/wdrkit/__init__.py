"""wdrkit: detect word-substitution attacks on text classifiers.

The pipeline measures how a target model's decision margin reacts
when each word of a sentence is ablated, sorts those reactions into a
fixed-length vector, and feeds the vector to a small gradient-boosted
tree detector. Any model exposing batched logits can be a target —
the bundled linear classifier, or a remote HTTP service.
"""

from .attacks import (
    ATTACKS,
    AttackConfig,
    AttackResult,
    SynonymLexicon,
    generate_attack_dataset,
    genetic_attack,
    importance_greedy_attack,
    pwws_attack,
)
from .classifier import (
    ClassifierTrainConfig,
    LinearTextClassifier,
    LogitsProvider,
    load_classifier,
    predicted_class,
    save_classifier,
    train_classifier,
)
from .detector import (
    DetectorModel,
    GbtConfig,
    classify,
    feature_importance,
    fit_detector,
    load_detector,
    predict_proba,
    save_detector,
)
from .evaluation import (
    MetricsReport,
    TransferConfig,
    TransferCase,
    compute_metrics,
    evaluate_detector,
    run_transfer_matrix,
    threshold_sweep,
)
from .remote import RemoteLogitsClient
from .textcore import (
    Corpus,
    LabeledExample,
    Origin,
    TokenizedText,
    detokenize,
    load_corpus,
    save_corpus,
    tokenize,
)
from .wdr import (
    WdrVector,
    batch_wdr,
    load_wdr_dataset,
    save_wdr_dataset,
    wdr_score,
    wdr_vector,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACKS",
    "AttackConfig",
    "AttackResult",
    "ClassifierTrainConfig",
    "Corpus",
    "DetectorModel",
    "GbtConfig",
    "LabeledExample",
    "LinearTextClassifier",
    "LogitsProvider",
    "MetricsReport",
    "Origin",
    "RemoteLogitsClient",
    "SynonymLexicon",
    "TokenizedText",
    "TransferConfig",
    "TransferCase",
    "WdrVector",
    "batch_wdr",
    "classify",
    "compute_metrics",
    "detokenize",
    "evaluate_detector",
    "feature_importance",
    "fit_detector",
    "generate_attack_dataset",
    "genetic_attack",
    "importance_greedy_attack",
    "load_classifier",
    "load_corpus",
    "load_detector",
    "load_wdr_dataset",
    "predict_proba",
    "predicted_class",
    "pwws_attack",
    "run_transfer_matrix",
    "save_classifier",
    "save_corpus",
    "save_detector",
    "save_wdr_dataset",
    "threshold_sweep",
    "tokenize",
    "train_classifier",
    "wdr_score",
    "wdr_vector",
]
