from .essay_models import (
    EmotionLabel,
    EMOTION_LABELS,
    Target,
    EssayRecord,
    Dataset,
    SplitResult,
    ColumnSchema
)
from .config_models import (
    RegressorKind,
    ClassifierLoss,
    EncoderDims,
    TrainHyper,
    MLPHyper,
    SVRHyper,
    AdaBoostHyper,
    GBTHyper,
    RegressorHyper,
    Track1Hyper,
    GeneratorHyper,
    ClassifierHyper,
    RunConfig
)
from .report_models import RegressionReport, ClassificationReport, LabelScores


__all__ = [
    "EmotionLabel",
    "EMOTION_LABELS",
    "Target",
    "EssayRecord",
    "Dataset",
    "SplitResult",
    "ColumnSchema",
    "RegressorKind",
    "ClassifierLoss",
    "EncoderDims",
    "TrainHyper",
    "MLPHyper",
    "SVRHyper",
    "AdaBoostHyper",
    "GBTHyper",
    "RegressorHyper",
    "Track1Hyper",
    "GeneratorHyper",
    "ClassifierHyper",
    "RunConfig",
    "RegressionReport",
    "ClassificationReport",
    "LabelScores"
]
