"""
Emotion prediction.

The generator casts the task as producing the two tokens (label, eos) from
an encoder-decoder trained on the summed negative log-likelihood. Staged
fine-tuning first trains on an auxiliary corpus with early stopping on its
validation loss, then continues on the main corpus with a fresh optimizer.
The classifier baseline puts a linear head on the pooled encoder output.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..errors import ConfigurationError, DataError
from ..models.config_models import ClassifierHyper, ClassifierLoss, EncoderDims, GeneratorHyper, TrainHyper
from ..models.essay_models import EMOTION_LABELS, Dataset
from ..models.report_models import ClassificationReport
from ..utils.corpus import split_dataset
from ..utils.serialization import load_store, read_json, save_store, write_json
from . import layers
from .metrics import classification_report
from .nncore import LayerKind, LayerSpec, ParameterStore, init_params, log_softmax
from .textenc import (
    EncoderModel,
    Seq2SeqModel,
    TokenSeq,
    Vocab,
    build_vocab,
    decode_many,
    encode_batch,
    encoder_specs,
    read_vocab,
    stack_batch,
    tokenize,
    write_vocab,
)
from .training import adam_for, run_training

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
CLS_HEAD = "cls_head"


def label_indices(dataset: Dataset) -> np.ndarray:
    """Index of each record's label in reporting order; unlabeled records are a data error"""
    issues = [(position + 1, "emotion", f"record {record.record_id} has no emotion label")
              for position, record in enumerate(dataset.records) if record.emotion is None]
    if issues:
        raise DataError(f"{dataset.provenance}: {len(issues)} unlabeled record(s)", issues)
    return np.array([EMOTION_LABELS.index(record.emotion.value) for record in dataset.records], dtype=np.int64)


class GenEmotionModel:
    """Encoder-decoder label generator; `provenance` lists the corpora it was trained on, in order"""

    def __init__(self, seq2seq: Seq2SeqModel, provenance: Optional[List[str]] = None,
                 loss_log: Optional[List[float]] = None):
        self.seq2seq = seq2seq
        self.provenance = list(provenance or [])
        self.loss_log = list(loss_log or [])

    @property
    def vocab(self) -> Vocab:
        return self.seq2seq.vocab

    @property
    def dims(self) -> EncoderDims:
        return self.seq2seq.dims

    @property
    def params(self) -> ParameterStore:
        return self.seq2seq.params

    def add_stage(self, provenance: str) -> None:
        self.provenance.append(provenance)

    def predict_many(self, texts: Sequence[str], workers: int = 1) -> List[str]:
        seqs = [tokenize(text, self.vocab, self.dims.max_len) for text in texts]
        return [label for label, _ in decode_many(self.seq2seq, seqs, workers=workers)]


class ClsEmotionModel:
    """Pooled-output classifier with a d->7 linear head"""

    def __init__(self, encoder: EncoderModel, mode: ClassifierLoss = ClassifierLoss.SOFTMAX_CE,
                 loss_log: Optional[List[float]] = None):
        self.encoder = encoder
        self.mode = ClassifierLoss(mode)
        self.loss_log = list(loss_log or [])

    @property
    def vocab(self) -> Vocab:
        return self.encoder.vocab

    @property
    def dims(self) -> EncoderDims:
        return self.encoder.dims

    @property
    def params(self) -> ParameterStore:
        return self.encoder.params

    def scores(self, texts: Sequence[str], workers: int = 1) -> np.ndarray:
        """(n, 7) head logits in reporting label order"""
        seqs = [tokenize(text, self.vocab, self.dims.max_len) for text in texts]
        logits, _ = layers.linear_forward(self.params, CLS_HEAD, encode_batch(self.encoder, seqs, workers=workers))
        return logits

    def predict_many(self, texts: Sequence[str], workers: int = 1) -> List[str]:
        if not texts:
            return []
        return [EMOTION_LABELS[int(i)] for i in np.argmax(self.scores(texts, workers), axis=1)]


EmotionModel = Union[GenEmotionModel, ClsEmotionModel]


# ---------------------------------------------------------------- generator

def _new_generator(texts: Sequence[str], hyper: TrainHyper) -> Seq2SeqModel:
    vocab = build_vocab(texts, hyper.min_freq, hyper.max_vocab)
    store = init_params(Seq2SeqModel.layer_specs(hyper.dims, vocab.size), hyper.seed)
    return Seq2SeqModel(vocab, store, hyper.dims)


def _label_token_ids(model: Seq2SeqModel, dataset: Dataset) -> np.ndarray:
    return np.array([model.vocab.label_id(EMOTION_LABELS[i]) for i in label_indices(dataset)], dtype=np.int64)


def generator_nll(model: Seq2SeqModel, dataset: Dataset, batch_size: int = 32) -> float:
    """Summed NLL of every record's (label, eos) target; no gradients"""
    seqs = [tokenize(text, model.vocab, model.dims.max_len) for text in dataset.texts()]
    targets = _label_token_ids(model, dataset)
    total = 0.0
    for start in range(0, len(seqs), batch_size):
        ids, mask = stack_batch(seqs[start:start + batch_size])
        gold, _ = model.teacher_forced(ids, mask, targets[start:start + batch_size])
        total -= float(gold.sum())
    return total


def _fit_generator(model: Seq2SeqModel, dataset: Dataset, hyper: TrainHyper, epochs: int, name: str,
                   on_epoch_end=None) -> List[float]:
    seqs = [tokenize(text, model.vocab, model.dims.max_len) for text in dataset.texts()]
    targets = _label_token_ids(model, dataset)

    def batch_loss(indices: np.ndarray) -> float:
        ids, mask = stack_batch([seqs[i] for i in indices])
        return model.nll_and_grad(ids, mask, targets[indices], scale=1.0 / len(indices))

    return run_training(model.params, len(seqs), batch_loss, epochs=epochs, batch_size=hyper.batch_size,
                        seed=hyper.seed, state=adam_for(hyper), max_steps=hyper.max_steps, name=name,
                        on_epoch_end=on_epoch_end)


def train_generator(train: Dataset, hyper: Optional[GeneratorHyper] = None) -> GenEmotionModel:
    """Minimize the summed (label, eos) NLL by teacher forcing"""
    hyper = hyper or GeneratorHyper()
    label_indices(train)
    seq2seq = _new_generator(train.texts(), hyper.train)
    log = _fit_generator(seq2seq, train, hyper.train, hyper.train.epochs, "generator")
    return GenEmotionModel(seq2seq, [train.provenance], log)


def staged_finetune(aux: Dataset, main: Dataset, hyper: Optional[GeneratorHyper] = None) -> GenEmotionModel:
    """
    Auxiliary stage with early stopping, then the main stage with a fresh
    optimizer. The vocabulary covers both training corpora. An empty
    auxiliary corpus reduces to train_generator.
    """
    hyper = hyper or GeneratorHyper()
    if hyper.patience <= 0:
        raise ConfigurationError(f"patience must be positive, got {hyper.patience}")
    label_indices(aux)
    label_indices(main)
    seq2seq = _new_generator(aux.texts() + main.texts(), hyper.train)
    model = GenEmotionModel(seq2seq)

    if len(aux):
        model.loss_log += _train_auxiliary(seq2seq, aux, hyper)
        model.add_stage(aux.provenance)
    model.loss_log += _fit_generator(seq2seq, main, hyper.train, hyper.train.epochs, "generator")
    model.add_stage(main.provenance)
    return model


def _train_auxiliary(seq2seq: Seq2SeqModel, aux: Dataset, hyper: GeneratorHyper) -> List[float]:
    if len(aux) < 2:
        return _fit_generator(seq2seq, aux, hyper.train, hyper.aux_max_epochs, "auxiliary")

    split = split_dataset(aux, hyper.aux_valid_ratio, hyper.train.seed)
    tracker = {"best": np.inf, "snapshot": None, "stale": 0}

    def on_epoch_end(epoch: int, _loss: float) -> bool:
        valid_loss = generator_nll(seq2seq, split.valid) / max(len(split.valid), 1)
        logger.info("auxiliary epoch %d: validation nll %.6f", epoch, valid_loss)
        if valid_loss < tracker["best"]:
            tracker.update(best=valid_loss, snapshot=seq2seq.params.snapshot(), stale=0)
            return False
        tracker["stale"] += 1
        return tracker["stale"] >= hyper.patience

    log = _fit_generator(seq2seq, split.train, hyper.train, hyper.aux_max_epochs, "auxiliary", on_epoch_end)
    if tracker["snapshot"] is not None:
        seq2seq.params.restore(tracker["snapshot"])
        logger.info("auxiliary stage: restored parameters with validation nll %.6f", tracker["best"])
    return log


# ---------------------------------------------------------------- classifier

def classifier_loss(encoder: EncoderModel, mode: ClassifierLoss, ids: np.ndarray, mask: np.ndarray,
                    labels: np.ndarray, scale: float = 1.0) -> float:
    """Summed loss of the batch; accumulates scale * gradient"""
    hidden, cache = encoder.forward(ids, mask)
    logits, head_cache = layers.linear_forward(encoder.params, CLS_HEAD, hidden[:, 0, :])
    rows = np.arange(len(labels))
    if ClassifierLoss(mode) == ClassifierLoss.SOFTMAX_CE:
        log_probs = log_softmax(logits)
        loss = -float(log_probs[rows, labels].sum())
        d_logits = np.exp(log_probs)
        d_logits[rows, labels] -= 1.0
    else:
        onehot = np.zeros_like(logits)
        onehot[rows, labels] = 1.0
        loss = float((np.logaddexp(0.0, logits) - onehot * logits).sum())
        d_logits = np.exp(-np.logaddexp(0.0, -logits)) - onehot
    d_pooled = layers.linear_backward(encoder.params, CLS_HEAD, d_logits * scale, head_cache)
    d_hidden = np.zeros_like(hidden)
    d_hidden[:, 0, :] = d_pooled
    encoder.backward(d_hidden, cache)
    return loss


def train_classifier(train: Dataset, mode: Union[ClassifierLoss, str, None] = None,
                     hyper: Optional[ClassifierHyper] = None) -> ClsEmotionModel:
    hyper = hyper or ClassifierHyper()
    mode = ClassifierLoss(mode or hyper.mode)
    labels = label_indices(train)
    h = hyper.train
    vocab = build_vocab(train.texts(), h.min_freq, h.max_vocab)
    specs = encoder_specs(h.dims, vocab.size) + [
        LayerSpec(name=CLS_HEAD, kind=LayerKind.LINEAR, dims={"in_dim": h.dims.model_dim, "out_dim": len(EMOTION_LABELS)})
    ]
    encoder = EncoderModel(vocab, init_params(specs, h.seed), h.dims)
    seqs = [tokenize(text, vocab, h.dims.max_len) for text in train.texts()]

    def batch_loss(indices: np.ndarray) -> float:
        ids, mask = stack_batch([seqs[i] for i in indices])
        return classifier_loss(encoder, mode, ids, mask, labels[indices], scale=1.0 / len(indices))

    log = run_training(encoder.params, len(seqs), batch_loss, epochs=h.epochs, batch_size=h.batch_size,
                       seed=h.seed, state=adam_for(h), max_steps=h.max_steps, name=f"classifier-{mode.value}")
    return ClsEmotionModel(encoder, mode, log)


# ---------------------------------------------------------------- prediction and evaluation

def predict_emotion(model: EmotionModel, essay: str) -> str:
    return model.predict_many([essay])[0]


def predict_emotions(model: EmotionModel, texts: Sequence[str], workers: int = 1) -> List[str]:
    return model.predict_many(texts, workers)


def evaluate_model(model: EmotionModel, dataset: Dataset, workers: int = 1) -> ClassificationReport:
    gold = [EMOTION_LABELS[i] for i in label_indices(dataset)]
    return classification_report(gold, predict_emotions(model, dataset.texts(), workers))


def write_submission(labels: Sequence[str], path: Union[str, Path]) -> None:
    """One lowercase label per line, in input order"""
    Path(path).write_text("".join(f"{label.lower()}\n" for label in labels), encoding="utf-8")


def read_submission(path: Union[str, Path]) -> List[str]:
    labels = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        label = line.strip().lower()
        if label not in EMOTION_LABELS:
            raise DataError(f"{path}: malformed prediction", [(number, "emotion", f"unknown label {line!r}")])
        labels.append(label)
    return labels


def save_model(model: EmotionModel, directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_vocab(model.vocab, directory / "vocab.txt")
    save_store(model.params, directory / "params.npz")
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "task": "track2",
        "model_kind": "generator" if isinstance(model, GenEmotionModel) else "classifier",
        "dims": model.dims.model_dump(),
        "loss_log": model.loss_log,
        "files": ["vocab.txt", "params.npz"],
    }
    if isinstance(model, GenEmotionModel):
        manifest["provenance"] = model.provenance
    else:
        manifest["mode"] = model.mode.value
    write_json(directory / "manifest.json", manifest)
    logger.info("saved track2 %s to %s", manifest["model_kind"], directory)


def load_model(directory: Union[str, Path]) -> EmotionModel:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if manifest.get("format_version") != MODEL_FORMAT_VERSION or manifest.get("task") != "track2":
        raise ConfigurationError(f"{directory}: not a track2 model bundle")
    vocab = read_vocab(directory / "vocab.txt")
    store = load_store(directory / "params.npz")
    dims = EncoderDims(**manifest["dims"])
    if manifest["model_kind"] == "generator":
        return GenEmotionModel(Seq2SeqModel(vocab, store, dims), manifest["provenance"], manifest["loss_log"])
    return ClsEmotionModel(EncoderModel(vocab, store, dims), manifest["mode"], manifest["loss_log"])
