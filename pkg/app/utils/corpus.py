"""
Essay corpora: shared-task TSV ingestion and emission, seeded splitting and
synthetic stand-in corpora for both tracks.
"""

import csv
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ArgumentError, DataError, SchemaError
from ..models.essay_models import (
    CATEGORICAL_DEMOGRAPHICS,
    EMOTION_LABELS,
    NUMERIC_DEMOGRAPHICS,
    PERSONALITY_TRAITS,
    ColumnSchema,
    Dataset,
    EssayRecord,
    SplitResult,
)

logger = logging.getLogger(__name__)

_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}
_UNESCAPE_RE = re.compile(r"\\(.)")


def unescape_field(value: str) -> str:
    return _UNESCAPE_RE.sub(lambda m: _ESCAPES.get(m.group(1), m.group(0)), value)


def escape_field(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _parse_number(raw: str, row: int, header: str, issues: List[Tuple[int, str, str]]) -> Optional[float]:
    if raw.strip() == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        issues.append((row, header, f"not a number: {raw!r}"))
        return None
    if not math.isfinite(value):
        issues.append((row, header, f"non-finite value {raw!r}"))
        return None
    return value


def load_tsv(path: Union[str, Path], schema: Optional[ColumnSchema] = None,
             score_min: float = 1.0, score_max: float = 7.0) -> Dataset:
    """
    Parse a tab-separated essay file. Row numbers in errors count the header
    as row 1. Every malformed cell is collected before failing.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cannot read {path}: no such file")
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False,
                            quoting=csv.QUOTE_NONE, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file has no header row") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    frame = frame.fillna("")

    columns = schema.mapped()
    missing = [header for header in columns.values() if header not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: mapped column(s) missing from header: {', '.join(missing)}")

    issues: List[Tuple[int, str, str]] = []
    records: List[EssayRecord] = []
    seen_ids: Dict[str, int] = {}
    for index, row in enumerate(frame.itertuples(index=False)):
        cells = dict(zip(frame.columns, row))
        row_number = index + 2
        record_id = cells[schema.id].strip() if schema.id else str(row_number)
        if record_id in seen_ids:
            issues.append((row_number, schema.id or "id", f"duplicated id {record_id!r} (first at row {seen_ids[record_id]})"))
            continue
        seen_ids[record_id] = row_number

        essay = unescape_field(cells[schema.essay])
        if not essay.strip():
            issues.append((row_number, schema.essay, "empty essay"))
            continue

        scores = {}
        for target in ("empathy", "distress"):
            header = getattr(schema, target)
            scores[target] = _parse_number(cells[header], row_number, header, issues) if header else None
            value = scores[target]
            if value is not None and not score_min <= value <= score_max:
                logger.warning("%s row %d: %s %.3f outside [%g, %g]", path, row_number, target, value, score_min, score_max)

        emotion = None
        if schema.emotion:
            emotion = cells[schema.emotion].strip().lower() or None
            if emotion is not None and emotion not in EMOTION_LABELS:
                issues.append((row_number, schema.emotion, f"unknown emotion label {emotion!r}"))
                continue

        demographics: Dict[str, Union[float, str]] = {}
        for field in NUMERIC_DEMOGRAPHICS:
            header = getattr(schema, field)
            if header:
                value = _parse_number(cells[header], row_number, header, issues)
                if value is not None:
                    demographics[field] = value
        for field in CATEGORICAL_DEMOGRAPHICS:
            header = getattr(schema, field)
            if header and cells[header].strip():
                demographics[field] = cells[header].strip()

        personality: Dict[str, float] = {}
        for trait, header in schema.personality.items():
            value = _parse_number(cells[header], row_number, header, issues)
            if value is not None:
                personality[trait] = value

        records.append(EssayRecord(record_id=record_id, essay=essay, empathy=scores["empathy"],
                                   distress=scores["distress"], emotion=emotion,
                                   demographics=demographics, personality=personality))

    if issues:
        raise DataError(f"{path}: {len(issues)} malformed cell(s)", issues)
    logger.info("loaded %d records from %s", len(records), path)
    return Dataset(records=records, provenance=str(path))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return escape_field(str(value))


def write_tsv(dataset: Dataset, path: Union[str, Path], schema: Optional[ColumnSchema] = None) -> None:
    """Inverse of load_tsv: every mapped column, floats written exactly"""
    schema = schema or ColumnSchema()
    columns = schema.mapped()
    lines = ["\t".join(columns.values())]
    for record in dataset.records:
        cells = []
        for logical in columns:
            if logical == "id":
                value = record.record_id
            elif logical == "essay":
                value = record.essay
            elif logical in ("empathy", "distress"):
                value = record.score(logical)
            elif logical == "emotion":
                value = record.emotion.value if record.emotion else None
            elif logical.startswith("personality_"):
                value = record.personality.get(logical[len("personality_"):])
            else:
                value = record.demographics.get(logical)
            cells.append(_format_cell(value))
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %d records to %s", len(dataset), path)


def split_dataset(dataset: Dataset, ratio: float = 0.8, seed: int = 13) -> SplitResult:
    """Seeded shuffle, then the first floor(n * ratio) records train and the rest validate"""
    if not 0 < ratio < 1:
        raise ArgumentError(f"split ratio must lie in (0, 1), got {ratio}")
    if len(dataset) < 2:
        raise ArgumentError(f"need at least 2 records to split, got {len(dataset)}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(math.floor(len(dataset) * ratio + 1e-9))
    return SplitResult(
        train=dataset.subset([int(i) for i in order[:cut]], f"{dataset.provenance}#train"),
        valid=dataset.subset([int(i) for i in order[cut:]], f"{dataset.provenance}#valid"),
        seed=seed,
        ratio=ratio,
    )


# ---------------------------------------------------------------- synthetic corpora

EMOTION_KEYWORDS: Dict[str, List[List[str]]] = {
    "sadness": [["grief", "mourning", "tears", "sorrow"], ["lonely", "heartbroken", "weeping", "despair"],
                ["loss", "funeral", "gloomy", "miserable"]],
    "anger": [["furious", "outraged", "rage", "livid"], ["unfair", "injustice", "infuriating", "resent"],
              ["hostile", "irate", "fuming", "indignant"]],
    "neutral": [["report", "statistics", "schedule", "update"], ["article", "summary", "noted", "information"],
                ["routine", "standard", "overview", "describes"]],
    "fear": [["terrified", "afraid", "panic", "dread"], ["threat", "danger", "scared", "anxious"],
             ["nightmare", "frightening", "alarming", "worried"]],
    "surprise": [["unexpected", "astonished", "shocked", "sudden"], ["amazed", "stunned", "unbelievable", "startled"],
                 ["wow", "incredible", "unforeseen", "remarkable"]],
    "disgust": [["disgusting", "revolting", "gross", "vile"], ["repulsive", "sickening", "nauseating", "filthy"],
                ["appalling", "repugnant", "foul", "loathsome"]],
    "joy": [["happy", "delighted", "wonderful", "cheerful"], ["grateful", "hopeful", "joyful", "thrilled"],
            ["celebrate", "uplifting", "glad", "pleased"]],
}

FILLER_SENTENCES = [
    "i read the story about the people in the town",
    "the news mentioned several families and their homes",
    "it made me think about how things change over time",
    "many people shared their thoughts on the situation",
    "the writer explained what happened last week",
    "there were pictures of the street and the buildings",
    "someone in my family told me about it yesterday",
    "we talked about the story during dinner",
    "i am not sure what else could be done",
    "the town will keep going one way or another",
]

KEYWORD_TEMPLATES = [
    "honestly the whole thing felt {}",
    "one word for it is {}",
    "{} is what i keep thinking about",
    "i would describe my reaction as {}",
]

# shared by every label
NEUTRAL_KEYWORDS = ["intense", "strange", "complicated", "moving", "powerful", "serious"]

SHARED_TERMS = ["suffering", "victims", "tragedy"]
EMPATHY_TERMS = ["compassion", "sympathy", "caring"]
DISTRESS_TERMS = ["upsetting", "disturbing", "overwhelming"]
SCORE_SLOTS = 9
PADDING_SENTENCES = [
    "i read it last night",
    "it was in the paper",
    "the story was quite long",
    "people talked about it too",
    "i saw the photos online",
]

TRACK1_COEFFICIENTS = {
    "empathy.intercept": 2.0,
    "empathy.shared": 0.8,
    "empathy.own": 0.6,
    "empathy.agreeableness": 0.15,
    "distress.intercept": 1.8,
    "distress.shared": 0.8,
    "distress.own": 0.6,
    "distress.stability": -0.15,
    "noise_sd": 0.25,
}


def _essay(rng: np.random.Generator, sentences: List[str], fillers: int = 3) -> str:
    picked = [FILLER_SENTENCES[i] for i in rng.choice(len(FILLER_SENTENCES), size=fillers, replace=False)]
    parts = sentences + picked
    order = rng.permutation(len(parts))
    return ". ".join(parts[i] for i in order) + "."


def _keyword_sentence(rng: np.random.Generator, word: str) -> str:
    return KEYWORD_TEMPLATES[int(rng.integers(len(KEYWORD_TEMPLATES)))].format(word)


def _synthesize_emotion(n: int, rng: np.random.Generator, id_prefix: str) -> List[EssayRecord]:
    labels = [EMOTION_LABELS[i % len(EMOTION_LABELS)] for i in range(n)]
    labels = [labels[i] for i in rng.permutation(n)]
    records = []
    for index, label in enumerate(labels):
        families = rng.choice(3, size=2, replace=False)
        sentences = [_keyword_sentence(rng, EMOTION_KEYWORDS[label][f][int(rng.integers(4))]) for f in families]
        if rng.random() < 0.3:
            word = NEUTRAL_KEYWORDS[int(rng.integers(len(NEUTRAL_KEYWORDS)))]
            sentences.append(_keyword_sentence(rng, word))
        records.append(EssayRecord(record_id=f"{id_prefix}{index}", essay=_essay(rng, sentences), emotion=label))
    return records


def _synthesize_scores(n: int, rng: np.random.Generator, id_prefix: str) -> List[EssayRecord]:
    c = TRACK1_COEFFICIENTS
    records = []
    for index in range(n):
        shared, own_emp, own_dis = (int(v) for v in rng.integers(0, 4, size=3))
        sentences = ([f"there is so much {SHARED_TERMS[int(rng.integers(3))]}" for _ in range(shared)]
                     + [f"i feel {EMPATHY_TERMS[int(rng.integers(3))]} for them" for _ in range(own_emp)]
                     + [f"it is {DISTRESS_TERMS[int(rng.integers(3))]} to me" for _ in range(own_dis)])
        sentences += [PADDING_SENTENCES[int(i)]
                      for i in rng.integers(len(PADDING_SENTENCES), size=SCORE_SLOTS - len(sentences))]
        personality = {trait: round(float(rng.uniform(1, 7)), 1) for trait in PERSONALITY_TRAITS}
        demographics = {
            "age": float(rng.integers(18, 70)),
            "income": float(rng.integers(10, 150) * 1000),
            "gender": ["female", "male"][int(rng.integers(2))],
            "ethnicity": ["asian", "black", "hispanic", "white", "other"][int(rng.integers(5))],
            "education": ["high_school", "some_college", "bachelor", "graduate"][int(rng.integers(4))],
        }
        noise = rng.normal(0.0, c["noise_sd"], size=2)
        empathy = (c["empathy.intercept"] + c["empathy.shared"] * shared + c["empathy.own"] * own_emp
                   + c["empathy.agreeableness"] * (personality["agreeableness"] - 4.0) + noise[0])
        distress = (c["distress.intercept"] + c["distress.shared"] * shared + c["distress.own"] * own_dis
                    + c["distress.stability"] * (personality["stability"] - 4.0) + noise[1])
        records.append(EssayRecord(
            record_id=f"{id_prefix}{index}",
            essay=_essay(rng, sentences, fillers=0),
            empathy=float(np.clip(empathy, 1.0, 7.0)),
            distress=float(np.clip(distress, 1.0, 7.0)),
            demographics=demographics,
            personality=personality,
        ))
    return records


def synthesize_corpus(n: int, seed: int, task: str = "track2", id_prefix: str = "s") -> Dataset:
    """
    Seeded stand-in corpus.

    track2: balanced labels; each essay carries keywords from two of its
    label's three families plus, 30% of the time, one label-neutral keyword.
    track1: every essay has the same number of short sentences, planted
    term sentences padded with neutral ones; scores are noisy linear
    functions of the planted counts and two personality traits, with the
    coefficients kept in `Dataset.planted`.
    """
    rng = np.random.default_rng(seed)
    if task == "track2":
        if n < len(EMOTION_LABELS):
            raise ArgumentError(f"track2 corpus needs at least {len(EMOTION_LABELS)} essays, got {n}")
        return Dataset(records=_synthesize_emotion(n, rng, id_prefix), provenance=f"synthetic({seed})")
    if task == "track1":
        if n < 1:
            raise ArgumentError(f"track1 corpus needs at least 1 essay, got {n}")
        return Dataset(records=_synthesize_scores(n, rng, id_prefix), provenance=f"synthetic({seed})",
                       planted=dict(TRACK1_COEFFICIENTS))
    raise ArgumentError(f"unknown task {task!r}")


def synthesize_transfer_benchmark(seed: int, aux_size: int = 2000, main_size: int = 140,
                                  heldout_size: int = 140) -> Tuple[Dataset, Dataset, Dataset]:
    """(auxiliary, main, held-out main) emotion corpora sharing keyword families"""
    aux_seed, main_seed, heldout_seed = (int(s) for s in np.random.default_rng(seed).integers(0, 2 ** 31, size=3))
    aux = synthesize_corpus(aux_size, aux_seed, "track2", id_prefix="aux")
    main = synthesize_corpus(main_size, main_seed, "track2", id_prefix="main")
    heldout = synthesize_corpus(heldout_size, heldout_seed, "track2", id_prefix="heldout")
    return (aux.model_copy(update={"provenance": f"synthetic-aux({seed})"}),
            main.model_copy(update={"provenance": f"synthetic-main({seed})"}),
            heldout.model_copy(update={"provenance": f"synthetic-heldout({seed})"}))
