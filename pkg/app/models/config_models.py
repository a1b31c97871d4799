from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional, Literal
from enum import Enum

from .essay_models import PERSONALITY_TRAITS


class RegressorKind(str, Enum):
    """Regression backends available to the empathy track"""
    MLP = "mlp"
    SVR = "svr"
    ADABOOST = "adaboost"
    GBT = "gbt"


class ClassifierLoss(str, Enum):
    """Loss modes of the pooled-embedding emotion classifier"""
    SOFTMAX_CE = "softmax_ce"
    PER_LABEL_BCE = "per_label_bce"


class EncoderDims(BaseModel):
    """Shape of a tiny transformer"""
    model_config = ConfigDict(extra="forbid")

    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128


class TrainHyper(BaseModel):
    """Optimization settings shared by every transformer training stage"""
    model_config = ConfigDict(extra="forbid")

    dims: EncoderDims = Field(default_factory=EncoderDims)
    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = 1.0
    epochs: int = 10
    batch_size: int = 16
    max_steps: Optional[int] = None
    seed: int = 13
    min_freq: int = 1
    max_vocab: int = 20000
    frozen: List[str] = Field(default_factory=list, description="Parameter-name prefixes excluded from updates")


class MLPHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: List[int] = Field(default_factory=lambda: [64, 32])
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 13


class SVRHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilon: float = 0.1
    c: float = 1.0
    steps: int = 2000
    lr: float = 0.01
    decay: float = 0.001


class AdaBoostHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rounds: int = 50


class GBTHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    trees: int = 100
    max_depth: int = 3
    shrinkage: float = 0.1
    min_samples_leaf: int = 1


class RegressorHyper(BaseModel):
    """Hyperparameters for every regressor kind; only the selected kind's block is read"""
    model_config = ConfigDict(extra="forbid")

    mlp: MLPHyper = Field(default_factory=MLPHyper)
    svr: SVRHyper = Field(default_factory=SVRHyper)
    adaboost: AdaBoostHyper = Field(default_factory=AdaBoostHyper)
    gbt: GBTHyper = Field(default_factory=GBTHyper)


class Track1Hyper(BaseModel):
    """Empathy/distress pipeline settings"""
    model_config = ConfigDict(extra="forbid")

    encoder: TrainHyper = Field(default_factory=TrainHyper)
    regressor: RegressorHyper = Field(default_factory=RegressorHyper)
    feature_set: Literal["dual", "empathy_only"] = "dual"
    personality_traits: List[str] = Field(default_factory=lambda: list(PERSONALITY_TRAITS))
    joint_mlp: bool = False
    score_min: float = 1.0
    score_max: float = 7.0


class GeneratorHyper(BaseModel):
    """Label-generation training plus the auxiliary stage of staged fine-tuning"""
    model_config = ConfigDict(extra="forbid")

    train: TrainHyper = Field(default_factory=TrainHyper)
    patience: int = 3
    aux_valid_ratio: float = 0.9
    aux_max_epochs: int = 30


class ClassifierHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: TrainHyper = Field(default_factory=TrainHyper)
    mode: ClassifierLoss = ClassifierLoss.SOFTMAX_CE


class RunConfig(BaseModel):
    """Flat run configuration; every key maps to one line of a config file"""
    model_config = ConfigDict(extra="forbid")

    task: Literal["track1", "track2"] = "track1"
    train_path: Optional[str] = None
    aux_path: Optional[str] = None
    schema_path: Optional[str] = None
    output_dir: str = "runs/default"
    seed: int = 13
    split_ratio: float = 0.8
    workers: int = 1

    # transformer stages
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    min_freq: int = 1
    max_vocab: int = 20000
    lr: float = 2e-5
    clip_norm: float = 1.0
    epochs: int = 10
    batch_size: int = 16

    # empathy track
    regressor: RegressorKind = RegressorKind.MLP
    feature_set: Literal["dual", "empathy_only"] = "dual"
    joint_mlp: bool = False
    score_min: float = 1.0
    score_max: float = 7.0
    mlp_hidden: str = "64,32"
    mlp_lr: float = 1e-3
    mlp_epochs: int = 200
    svr_epsilon: float = 0.1
    svr_c: float = 1.0
    svr_steps: int = 2000
    svr_lr: float = 0.01
    ada_rounds: int = 50
    gbt_trees: int = 100
    gbt_depth: int = 3
    gbt_shrinkage: float = 0.1

    # emotion track
    model_kind: Literal["generator", "classifier"] = "generator"
    cls_loss: ClassifierLoss = ClassifierLoss.SOFTMAX_CE
    patience: int = 3
    aux_max_epochs: int = 30

    def train_hyper(self) -> TrainHyper:
        return TrainHyper(
            dims=EncoderDims(layers=self.layers, model_dim=self.model_dim, heads=self.heads,
                             ff_dim=self.ff_dim, max_len=self.max_len),
            lr=self.lr, clip_norm=self.clip_norm, epochs=self.epochs, batch_size=self.batch_size,
            seed=self.seed, min_freq=self.min_freq, max_vocab=self.max_vocab,
        )

    def track1_hyper(self) -> Track1Hyper:
        hidden = [int(size) for size in self.mlp_hidden.split(",") if size.strip()]
        return Track1Hyper(
            encoder=self.train_hyper(),
            regressor=RegressorHyper(
                mlp=MLPHyper(hidden=hidden, lr=self.mlp_lr, epochs=self.mlp_epochs, seed=self.seed),
                svr=SVRHyper(epsilon=self.svr_epsilon, c=self.svr_c, steps=self.svr_steps, lr=self.svr_lr),
                adaboost=AdaBoostHyper(rounds=self.ada_rounds),
                gbt=GBTHyper(trees=self.gbt_trees, max_depth=self.gbt_depth, shrinkage=self.gbt_shrinkage),
            ),
            feature_set=self.feature_set,
            joint_mlp=self.joint_mlp,
            score_min=self.score_min,
            score_max=self.score_max,
        )

    def generator_hyper(self) -> GeneratorHyper:
        return GeneratorHyper(train=self.train_hyper(), patience=self.patience, aux_max_epochs=self.aux_max_epochs)

    def classifier_hyper(self) -> ClassifierHyper:
        return ClassifierHyper(train=self.train_hyper(), mode=self.cls_loss)
