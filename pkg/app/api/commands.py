"""
Handlers for the command-line subcommands. Each takes the parsed arguments
and returns the process exit code; errors propagate to ``app.main.run``.
"""

import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..errors import DataError, UndefinedCorrelationError, UsageError
from ..models.config_models import RunConfig
from ..services import track1, track2
from ..services.metrics import (
    classification_report,
    regression_report,
    render_classification_report,
    render_regression_report,
)
from ..utils.config import load_run_config, load_schema, parse_overrides, write_run_config
from ..utils.corpus import load_tsv, split_dataset, synthesize_corpus, synthesize_transfer_benchmark, write_tsv
from ..utils.serialization import read_json, write_json

logger = logging.getLogger(__name__)

TRAINING_LOG = "app.training"


def synth(args) -> int:
    if args.transfer:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, dataset in zip(("aux", "main", "heldout"), synthesize_transfer_benchmark(args.seed)):
            write_tsv(dataset, out / f"{name}.tsv")
            print(f"{name}: {len(dataset)} records -> {out / f'{name}.tsv'}")
        return 0
    dataset = synthesize_corpus(args.n, args.seed, args.task)
    write_tsv(dataset, args.out)
    print(f"{len(dataset)} records -> {args.out}")
    return 0


def resolve_config(args) -> RunConfig:
    """Defaults < config file < --set overrides < dedicated flags"""
    values: Dict[str, object] = parse_overrides(args.set or [])
    flags = {
        "task": args.task,
        "regressor": args.regressor,
        "model_kind": args.model_kind,
        "seed": args.seed,
        "train_path": args.train,
        "aux_path": args.aux,
        "schema_path": args.schema,
        "output_dir": args.out,
        "workers": args.workers,
    }
    values.update({key: value for key, value in flags.items() if value is not None})
    return load_run_config(args.config, values)


def _training_log(run_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(run_dir / "train.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    handler.setLevel(logging.INFO)
    training = logging.getLogger(TRAINING_LOG)
    training.setLevel(logging.INFO)
    training.addHandler(handler)
    return handler


def train(args) -> int:
    config = resolve_config(args)
    if not config.train_path:
        raise UsageError("no training data: pass --train or set train_path in the config file")
    schema = load_schema(config.schema_path)
    data = load_tsv(config.train_path, schema, config.score_min, config.score_max)
    split = split_dataset(data, config.split_ratio, config.seed)

    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_run_config(config, run_dir / "config.cfg")
    handler = _training_log(run_dir)
    try:
        if config.task == "track1":
            report_text, report = _train_track1(config, schema, split, run_dir)
        else:
            report_text, report = _train_track2(config, schema, split, run_dir)
    finally:
        logging.getLogger(TRAINING_LOG).removeHandler(handler)
        handler.close()

    if report is not None:
        write_json(run_dir / "validation.json", report.model_dump(mode="json"))
        print(report_text, end="")
    print(f"model -> {run_dir / 'model'}")
    return 0


def _train_track1(config: RunConfig, schema, split, run_dir: Path):
    hyper = config.track1_hyper().model_copy(update={"personality_traits": list(schema.personality)})
    pipeline = track1.train_pipeline(split.train, config.regressor, hyper, config.workers)
    track1.save_pipeline(pipeline, run_dir / "model")
    if len(split.valid) < 2:
        return None, None
    try:
        report = track1.evaluate_pipeline(pipeline, split.valid, config.workers)
    except UndefinedCorrelationError as exc:
        logger.warning("validation report skipped: %s", exc)
        return None, None
    return render_regression_report(report), report


def _train_track2(config: RunConfig, schema, split, run_dir: Path):
    if config.model_kind == "classifier":
        model = track2.train_classifier(split.train, config.cls_loss, config.classifier_hyper())
    elif config.aux_path:
        aux = load_tsv(config.aux_path, schema, config.score_min, config.score_max)
        model = track2.staged_finetune(aux, split.train, config.generator_hyper())
    else:
        model = track2.train_generator(split.train, config.generator_hyper())
    track2.save_model(model, run_dir / "model")
    if not len(split.valid):
        return None, None
    report = track2.evaluate_model(model, split.valid, config.workers)
    return render_classification_report(report), report


def _model_dir(path: str) -> Path:
    """Accept a run directory or the model bundle inside it"""
    directory = Path(path)
    if (directory / "model" / "manifest.json").is_file():
        directory = directory / "model"
    if not (directory / "manifest.json").is_file():
        raise UsageError(f"no model bundle at {path}")
    return directory


def _load_model(path: str):
    directory = _model_dir(path)
    task = read_json(directory / "manifest.json").get("task")
    if task == "track1":
        return task, track1.load_pipeline(directory)
    return task, track2.load_model(directory)


def _predict(task: str, model, dataset, workers: int):
    if task == "track1":
        return model.predict_many(dataset.records, workers)
    return track2.predict_emotions(model, dataset.texts(), workers)


def evaluate(args) -> int:
    schema = load_schema(args.schema)
    if args.predictions:
        if not args.task:
            raise UsageError("--predictions requires --task")
        task = args.task
        predicted = (track1.read_submission(args.predictions) if task == "track1"
                     else track2.read_submission(args.predictions))
        dataset = load_tsv(args.data, schema)
    else:
        if not args.model:
            raise UsageError("evaluate needs --model or --predictions")
        task, model = _load_model(args.model)
        dataset = load_tsv(args.data, schema)
        predicted = _predict(task, model, dataset, args.workers)

    if len(predicted) != len(dataset):
        raise DataError(f"{len(predicted)} predictions for {len(dataset)} records")

    if task == "track1":
        predicted = np.asarray(predicted)
        missing = [(i + 2, "empathy/distress", "missing gold score") for i, r in enumerate(dataset.records)
                   if r.empathy is None or r.distress is None]
        if missing:
            raise DataError(f"{args.data}: gold scores required for evaluation", missing)
        report = regression_report([r.empathy for r in dataset.records], predicted[:, 0],
                                   [r.distress for r in dataset.records], predicted[:, 1])
        print(render_regression_report(report), end="")
    else:
        missing = [(i + 2, "emotion", "missing gold label") for i, r in enumerate(dataset.records) if r.emotion is None]
        if missing:
            raise DataError(f"{args.data}: gold labels required for evaluation", missing)
        report = classification_report([r.emotion.value for r in dataset.records], list(predicted))
        print(render_classification_report(report), end="")

    if args.out:
        write_json(args.out, report.model_dump(mode="json"))
    return 0


def predict(args) -> int:
    task, model = _load_model(args.model)
    dataset = load_tsv(args.data, load_schema(args.schema))
    predicted = _predict(task, model, dataset, args.workers)
    if task == "track1":
        track1.write_submission(predicted, args.out)
    else:
        track2.write_submission(predicted, args.out)
    print(f"{len(dataset)} predictions -> {args.out}")
    return 0
