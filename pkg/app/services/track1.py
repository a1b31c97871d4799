"""
Empathy and distress prediction.

One encoder is fine-tuned per target with a linear regression head on its
pooled output. The frozen encoders' pooled vectors are concatenated
(empathy, distress) with the scaled demographic and personality features,
and one regressor per target is fitted on that shared vector with identical
kind and hyperparameters.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, DataError, StateError
from ..models.config_models import RegressorKind, Track1Hyper, TrainHyper
from ..models.essay_models import Dataset, EssayRecord, Target
from ..models.report_models import RegressionReport
from ..utils.scaling import FeatureScaler, fit_scaler
from ..utils.serialization import load_store, read_json, save_store, write_json
from . import layers
from .metrics import regression_report
from .nncore import LayerKind, LayerSpec, init_params
from .regressors import RegressorModel, make_regressor, regressor_from_dict
from .textenc import (
    EncoderModel,
    TokenSeq,
    Vocab,
    build_vocab,
    encode_batch,
    encode_pooled,
    encoder_specs,
    read_vocab,
    stack_batch,
    tokenize,
    write_vocab,
)
from .training import adam_for, run_training

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1
HEAD_NAME = "head"
TARGETS = (Target.EMPATHY, Target.DISTRESS)


class FinetunedEncoder:
    """Encoder plus its d->1 regression head, trained on standardized target scores"""

    def __init__(self, target: Target, encoder: EncoderModel, y_mean: float, y_std: float,
                 train_log: Optional[List[float]] = None):
        self.target = Target(target)
        self.encoder = encoder
        self.y_mean = y_mean
        self.y_std = y_std
        self.train_log = list(train_log or [])

    def tokenize(self, texts: Sequence[str]) -> List[TokenSeq]:
        return [tokenize(text, self.encoder.vocab, self.encoder.dims.max_len) for text in texts]

    def pooled(self, texts: Sequence[str], workers: int = 1) -> np.ndarray:
        return encode_batch(self.encoder, self.tokenize(texts), workers=workers)

    def predict_scores(self, texts: Sequence[str]) -> np.ndarray:
        """Head output in original score units (unclamped)"""
        out, _ = layers.linear_forward(self.encoder.params, HEAD_NAME, self.pooled(texts))
        return out[:, 0] * self.y_std + self.y_mean


def regression_specs(dims, vocab_size: int) -> List[LayerSpec]:
    return encoder_specs(dims, vocab_size) + [
        LayerSpec(name=HEAD_NAME, kind=LayerKind.LINEAR, dims={"in_dim": dims.model_dim, "out_dim": 1})
    ]


def regression_loss(encoder: EncoderModel, ids: np.ndarray, mask: np.ndarray, targets: np.ndarray,
                    scale: float = 1.0) -> float:
    """Summed squared error of head(pooled) against targets; accumulates scale * gradient"""
    hidden, cache = encoder.forward(ids, mask)
    prediction, head_cache = layers.linear_forward(encoder.params, HEAD_NAME, hidden[:, 0, :])
    diff = prediction[:, 0] - targets
    d_pooled = layers.linear_backward(encoder.params, HEAD_NAME, (2.0 * scale * diff)[:, None], head_cache)
    d_hidden = np.zeros_like(hidden)
    d_hidden[:, 0, :] = d_pooled
    encoder.backward(d_hidden, cache)
    return float(diff @ diff)


def _require_scores(dataset: Dataset, targets: Sequence[Target]) -> None:
    issues = []
    for position, record in enumerate(dataset.records):
        for target in targets:
            if record.score(target) is None:
                issues.append((position + 1, target.value, f"record {record.record_id} has no {target.value} score"))
    if issues:
        raise DataError(f"{dataset.provenance}: {len(issues)} missing score(s)", issues)


def finetune_encoder(train: Dataset, target: Union[Target, str], hyper: Optional[TrainHyper] = None,
                     vocab: Optional[Vocab] = None) -> FinetunedEncoder:
    """Adam on squared error of the standardized target; train_log holds per-epoch RMSE in score units"""
    target = Target(target)
    hyper = hyper or TrainHyper()
    _require_scores(train, [target])
    vocab = vocab or build_vocab(train.texts(), hyper.min_freq, hyper.max_vocab)

    scores = np.array([record.score(target) for record in train.records], dtype=np.float64)
    y_mean = float(scores.mean())
    y_std = float(scores.std()) or 1.0
    standardized = (scores - y_mean) / y_std
    seqs = [tokenize(text, vocab, hyper.dims.max_len) for text in train.texts()]

    store = init_params(regression_specs(hyper.dims, vocab.size), hyper.seed)
    encoder = EncoderModel(vocab, store, hyper.dims)

    def batch_loss(indices: np.ndarray) -> float:
        ids, mask = stack_batch([seqs[i] for i in indices])
        return regression_loss(encoder, ids, mask, standardized[indices], scale=1.0 / len(indices))

    log = run_training(store, len(seqs), batch_loss, epochs=hyper.epochs, batch_size=hyper.batch_size,
                       seed=hyper.seed, state=adam_for(hyper), max_steps=hyper.max_steps,
                       name=f"finetune-{target.value}", epoch_metric=lambda value: math.sqrt(value) * y_std)
    return FinetunedEncoder(target, encoder, y_mean, y_std, log)


@dataclass(frozen=True)
class FeatureLayout:
    """Segment sizes of the shared vector: empathy pooled, distress pooled, scaled features"""
    d_emp: int
    d_dis: int
    n_feat: int

    @property
    def total(self) -> int:
        return self.d_emp + self.d_dis + self.n_feat


@dataclass(frozen=True, eq=False)
class SharedFeatureVector:
    values: np.ndarray
    layout: FeatureLayout

    def segments(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, b = self.layout.d_emp, self.layout.d_emp + self.layout.d_dis
        return self.values[:a], self.values[a:b], self.values[b:]


class Track1Pipeline:
    """Fine-tuned encoders, fitted scaler and per-target (or joint) regressors"""

    def __init__(self, hyper: Track1Hyper, kind: RegressorKind, scaler: FeatureScaler,
                 encoders: Dict[Target, FinetunedEncoder], regressors: Dict[str, RegressorModel]):
        self.hyper = hyper
        self.kind = RegressorKind(kind)
        self.scaler = scaler
        self.encoders = encoders
        self.regressors = regressors

    @property
    def layout(self) -> FeatureLayout:
        d_dis = self.encoders[Target.DISTRESS].encoder.dims.model_dim if Target.DISTRESS in self.encoders else 0
        return FeatureLayout(self.encoders[Target.EMPATHY].encoder.dims.model_dim, d_dis, self.scaler.dim)

    def feature_matrix(self, records: Sequence[EssayRecord], workers: int = 1) -> np.ndarray:
        if not self.scaler.is_fitted:
            raise StateError("feature scaler used before fit")
        texts = [record.essay for record in records]
        blocks = [self.encoders[target].pooled(texts, workers) for target in TARGETS if target in self.encoders]
        blocks.append(self.scaler.transform_many(records))
        return np.concatenate(blocks, axis=1)

    def build_features(self, record: EssayRecord) -> SharedFeatureVector:
        scaled = self.scaler.transform(record)
        pooled = [encode_pooled(self.encoders[target].encoder, self.encoders[target].tokenize([record.essay])[0])
                  for target in TARGETS if target in self.encoders]
        return SharedFeatureVector(np.concatenate(pooled + [scaled]), self.layout)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """(n, 2) empathy/distress predictions clamped to the score range"""
        if not self.regressors:
            raise StateError("pipeline has no fitted regressors")
        if "joint" in self.regressors:
            out = np.asarray(self.regressors["joint"].predict(X)).reshape(len(X), 2)
        else:
            out = np.stack([self.regressors[t.value].predict(X) for t in TARGETS], axis=1)
        return np.clip(out, self.hyper.score_min, self.hyper.score_max)

    def predict_many(self, records: Sequence[EssayRecord], workers: int = 1) -> np.ndarray:
        if not records:
            return np.zeros((0, 2))
        return self.predict_matrix(self.feature_matrix(records, workers))

    def predict(self, record: EssayRecord) -> Tuple[float, float]:
        empathy, distress = self.predict_matrix(self.build_features(record).values.reshape(1, -1))[0]
        return float(empathy), float(distress)


def check_pipeline_hyper(kind: RegressorKind, hyper: Track1Hyper) -> None:
    make_regressor(kind, hyper.regressor)
    if hyper.joint_mlp and RegressorKind(kind) != RegressorKind.MLP:
        raise ConfigurationError("joint_mlp requires the mlp regressor")
    if not hyper.score_min < hyper.score_max:
        raise ConfigurationError(f"empty score range [{hyper.score_min}, {hyper.score_max}]")


def train_pipelines(train: Dataset, kinds: Sequence[Union[RegressorKind, str]],
                    hyper: Optional[Track1Hyper] = None, workers: int = 1) -> Dict[RegressorKind, Track1Pipeline]:
    """
    Scaler, then encoder fine-tuning, then the shared feature matrix, then
    one set of regressors per kind. Every pipeline shares the scaler and
    encoders, so the kinds are compared on identical features.
    """
    kinds = [RegressorKind(kind) for kind in kinds]
    if not kinds:
        raise ConfigurationError("no regressor kinds requested")
    hyper = hyper or Track1Hyper()
    for kind in kinds:
        check_pipeline_hyper(kind, hyper)
    _require_scores(train, TARGETS)

    scaler = fit_scaler(train, personality_traits=hyper.personality_traits)
    vocab = build_vocab(train.texts(), hyper.encoder.min_freq, hyper.encoder.max_vocab)
    targets = TARGETS if hyper.feature_set == "dual" else (Target.EMPATHY,)
    encoders = {target: finetune_encoder(train, target, hyper.encoder, vocab) for target in targets}
    pipelines = {kind: Track1Pipeline(hyper, kind, scaler, encoders, {}) for kind in kinds}

    X = pipelines[kinds[0]].feature_matrix(train.records, workers)
    logger.info("shared features: %d records x %d columns %s", X.shape[0], X.shape[1], pipelines[kinds[0]].layout)
    scores = {t: np.array([record.score(t) for record in train.records]) for t in TARGETS}
    for kind, pipeline in pipelines.items():
        if hyper.joint_mlp:
            Y = np.stack([scores[t] for t in TARGETS], axis=1)
            pipeline.regressors["joint"] = make_regressor(kind, hyper.regressor).fit(X, Y)
        else:
            for target in TARGETS:
                pipeline.regressors[target.value] = make_regressor(kind, hyper.regressor).fit(X, scores[target])
    return pipelines


def train_pipeline(train: Dataset, kind: Union[RegressorKind, str] = RegressorKind.MLP,
                   hyper: Optional[Track1Hyper] = None, workers: int = 1) -> Track1Pipeline:
    kind = RegressorKind(kind)
    return train_pipelines(train, [kind], hyper, workers)[kind]


def evaluate_pipeline(pipeline: Track1Pipeline, dataset: Dataset, workers: int = 1) -> RegressionReport:
    _require_scores(dataset, TARGETS)
    predicted = pipeline.predict_many(dataset.records, workers)
    return regression_report([r.empathy for r in dataset.records], predicted[:, 0],
                             [r.distress for r in dataset.records], predicted[:, 1])


def write_submission(predictions: np.ndarray, path: Union[str, Path]) -> None:
    """One row per record: empathy<TAB>distress with 6 decimals, no header"""
    lines = [f"{empathy:.6f}\t{distress:.6f}" for empathy, distress in np.asarray(predictions).reshape(-1, 2)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_submission(path: Union[str, Path]) -> np.ndarray:
    rows = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split("\t")
        try:
            if len(parts) != 2:
                raise ValueError(line)
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise DataError(f"{path}: malformed prediction", [(number, "empathy/distress", repr(line))])
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def save_pipeline(pipeline: Track1Pipeline, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vocab = pipeline.encoders[Target.EMPATHY].encoder.vocab
    write_vocab(vocab, directory / "vocab.txt")
    files = ["vocab.txt", "scaler.json"]
    encoders = {}
    for target, finetuned in pipeline.encoders.items():
        name = f"encoder_{target.value}.npz"
        save_store(finetuned.encoder.params, directory / name)
        files.append(name)
        encoders[target.value] = {"file": name, "y_mean": finetuned.y_mean, "y_std": finetuned.y_std,
                                  "train_log": finetuned.train_log}
    write_json(directory / "scaler.json", pipeline.scaler.to_dict())
    regressors = {}
    for key, model in pipeline.regressors.items():
        name = f"regressor_{key}.json"
        write_json(directory / name, model.to_dict())
        files.append(name)
        regressors[key] = name
    layout = pipeline.layout
    write_json(directory / "manifest.json", {
        "format_version": BUNDLE_FORMAT_VERSION,
        "task": "track1",
        "kind": pipeline.kind.value,
        "hyper": pipeline.hyper.model_dump(mode="json"),
        "layout": {"d_emp": layout.d_emp, "d_dis": layout.d_dis, "n_feat": layout.n_feat},
        "encoders": encoders,
        "regressors": regressors,
        "files": files,
    })
    logger.info("saved track1 pipeline to %s", directory)


def load_pipeline(directory: Union[str, Path]) -> Track1Pipeline:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION or manifest.get("task") != "track1":
        raise ConfigurationError(f"{directory}: not a track1 pipeline bundle")
    hyper = Track1Hyper(**manifest["hyper"])
    vocab = read_vocab(directory / "vocab.txt")
    encoders = {}
    for target_name, info in manifest["encoders"].items():
        store = load_store(directory / info["file"])
        encoders[Target(target_name)] = FinetunedEncoder(Target(target_name), EncoderModel(vocab, store, hyper.encoder.dims),
                                                         info["y_mean"], info["y_std"], info["train_log"])
    scaler = FeatureScaler.from_dict(read_json(directory / "scaler.json"))
    regressors = {key: regressor_from_dict(read_json(directory / name)) for key, name in manifest["regressors"].items()}
    return Track1Pipeline(hyper, RegressorKind(manifest["kind"]), scaler, encoders, regressors)
