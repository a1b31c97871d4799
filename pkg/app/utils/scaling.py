import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from ..errors import ArgumentError, StateError
from ..models.essay_models import (
    CATEGORICAL_DEMOGRAPHICS,
    NUMERIC_DEMOGRAPHICS,
    PERSONALITY_TRAITS,
    Dataset,
    EssayRecord,
)

logger = logging.getLogger(__name__)

UNSEEN = "<unseen>"


class FeatureScaler:
    """
    Demographic and personality features as one fixed-length vector.

    Layout: z-scored numerics (age, income, then the configured personality
    traits seen in training, in configured order, then any other traits in
    the training split, sorted), followed by one one-hot block per
    categorical column (sorted categories, then an unseen slot).
    Missing values give zeros in their segment; zero-variance numerics give 0.
    """

    def __init__(self, numeric_fields: Sequence[str] = NUMERIC_DEMOGRAPHICS,
                 categorical_fields: Sequence[str] = CATEGORICAL_DEMOGRAPHICS,
                 personality_traits: Sequence[str] = PERSONALITY_TRAITS):
        self.numeric_fields = list(numeric_fields)
        self.categorical_fields = list(categorical_fields)
        self.personality_traits = list(personality_traits)
        self.numeric_columns: List[str] = []
        self.categories: Dict[str, List[str]] = {}
        self.scaler: Optional[StandardScaler] = None

    @property
    def is_fitted(self) -> bool:
        return self.scaler is not None

    def _raw_numeric(self, record: EssayRecord) -> np.ndarray:
        row = np.full(len(self.numeric_columns), np.nan)
        for index, column in enumerate(self.numeric_columns):
            if column.startswith("personality."):
                value = record.personality.get(column[len("personality."):])
            else:
                value = record.demographics.get(column)
            if value is None:
                continue
            try:
                row[index] = float(value)
            except (TypeError, ValueError) as exc:
                raise ArgumentError(f"record {record.record_id}: {column} is not numeric: {value!r}") from exc
        return row

    def fit(self, train: Dataset) -> "FeatureScaler":
        if len(train) == 0:
            raise ArgumentError("cannot fit a scaler on an empty training split")
        seen = {trait for record in train.records for trait in record.personality}
        traits = [trait for trait in self.personality_traits if trait in seen]
        traits += sorted(seen - set(traits))
        self.numeric_columns = self.numeric_fields + [f"personality.{trait}" for trait in traits]
        self.categories = {
            field: sorted({str(r.demographics[field]) for r in train.records if field in r.demographics})
            for field in self.categorical_fields
        }
        raw = np.stack([self._raw_numeric(record) for record in train.records])
        self.scaler = StandardScaler()
        if raw.shape[1]:
            with np.errstate(invalid="ignore", divide="ignore"):
                self.scaler.fit(raw)
        logger.info("scaler fitted on %d records: %d numeric columns, %d output features",
                    len(train), len(self.numeric_columns), self.dim)
        return self

    @property
    def dim(self) -> int:
        return len(self.numeric_columns) + sum(len(values) + 1 for values in self.categories.values())

    def column_names(self) -> List[str]:
        names = list(self.numeric_columns)
        for field in self.categorical_fields:
            names += [f"{field}={value}" for value in self.categories[field]] + [f"{field}={UNSEEN}"]
        return names

    def transform_many(self, records: Sequence[EssayRecord]) -> np.ndarray:
        if not self.is_fitted:
            raise StateError("feature scaler used before fit")
        if not records:
            return np.zeros((0, self.dim))
        numeric = np.zeros((len(records), len(self.numeric_columns)))
        if self.numeric_columns:
            raw = np.stack([self._raw_numeric(record) for record in records])
            with np.errstate(invalid="ignore"):
                numeric = self.scaler.transform(raw)
            constant = ~(self.scaler.var_ > 0)
            numeric[:, constant] = 0.0
            numeric = np.nan_to_num(numeric, nan=0.0)

        blocks = [numeric]
        for field in self.categorical_fields:
            values = self.categories[field]
            block = np.zeros((len(records), len(values) + 1))
            for row, record in enumerate(records):
                if field not in record.demographics:
                    continue
                value = str(record.demographics[field])
                block[row, values.index(value) if value in values else len(values)] = 1.0
            blocks.append(block)
        return np.concatenate(blocks, axis=1)

    def transform(self, record: EssayRecord) -> np.ndarray:
        return self.transform_many([record])[0]

    def to_dict(self) -> Dict[str, Any]:
        if not self.is_fitted:
            raise StateError("feature scaler used before fit")
        numeric = bool(self.numeric_columns)
        return {
            "numeric_fields": self.numeric_fields,
            "categorical_fields": self.categorical_fields,
            "personality_traits": self.personality_traits,
            "numeric_columns": self.numeric_columns,
            "categories": self.categories,
            "mean": self.scaler.mean_.tolist() if numeric else [],
            "var": self.scaler.var_.tolist() if numeric else [],
            "scale": self.scaler.scale_.tolist() if numeric else [],
            "n_samples_seen": np.asarray(self.scaler.n_samples_seen_).tolist() if numeric else 0,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "FeatureScaler":
        scaler = cls(payload["numeric_fields"], payload["categorical_fields"],
                     payload.get("personality_traits", PERSONALITY_TRAITS))
        scaler.numeric_columns = list(payload["numeric_columns"])
        scaler.categories = {field: list(values) for field, values in payload["categories"].items()}
        scaler.scaler = StandardScaler()
        if scaler.numeric_columns:
            scaler.scaler.mean_ = np.asarray(payload["mean"], dtype=np.float64)
            scaler.scaler.var_ = np.asarray(payload["var"], dtype=np.float64)
            scaler.scaler.scale_ = np.asarray(payload["scale"], dtype=np.float64)
            scaler.scaler.n_samples_seen_ = np.asarray(payload["n_samples_seen"])
            scaler.scaler.n_features_in_ = len(scaler.numeric_columns)
        return scaler


def fit_scaler(train: Dataset, numeric_fields: Sequence[str] = NUMERIC_DEMOGRAPHICS,
               categorical_fields: Sequence[str] = CATEGORICAL_DEMOGRAPHICS,
               personality_traits: Sequence[str] = PERSONALITY_TRAITS) -> FeatureScaler:
    return FeatureScaler(numeric_fields, categorical_fields, personality_traits).fit(train)


def transform(scaler: FeatureScaler, record: EssayRecord) -> np.ndarray:
    return scaler.transform(record)
