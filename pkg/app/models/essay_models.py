from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Dict, Union
from enum import Enum


class EmotionLabel(str, Enum):
    """The seven essay-level emotion labels, in reporting order"""
    SADNESS = "sadness"
    ANGER = "anger"
    NEUTRAL = "neutral"
    FEAR = "fear"
    SURPRISE = "surprise"
    DISGUST = "disgust"
    JOY = "joy"


EMOTION_LABELS: List[str] = [label.value for label in EmotionLabel]

NUMERIC_DEMOGRAPHICS = ("age", "income")
CATEGORICAL_DEMOGRAPHICS = ("gender", "ethnicity", "education")
PERSONALITY_TRAITS = ("conscientiousness", "openness", "extraversion", "agreeableness", "stability")
DEMOGRAPHIC_FIELDS = NUMERIC_DEMOGRAPHICS + CATEGORICAL_DEMOGRAPHICS


class Target(str, Enum):
    """Regression targets of the empathy track"""
    EMPATHY = "empathy"
    DISTRESS = "distress"


class EssayRecord(BaseModel):
    """One essay with its optional gold scores, label and person-level fields"""
    model_config = ConfigDict(frozen=True)

    record_id: str
    essay: str
    empathy: Optional[float] = None
    distress: Optional[float] = None
    emotion: Optional[EmotionLabel] = None
    demographics: Dict[str, Union[float, str]] = Field(default_factory=dict)
    personality: Dict[str, float] = Field(default_factory=dict)

    @field_validator("essay")
    @classmethod
    def _essay_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("essay is empty")
        return value

    @field_validator("emotion", mode="before")
    @classmethod
    def _normalize_label(cls, value):
        if isinstance(value, str):
            value = value.strip().lower()
            if not value:
                return None
        return value

    def score(self, target: Union[Target, str]) -> Optional[float]:
        return self.empathy if Target(target) == Target.EMPATHY else self.distress


class Dataset(BaseModel):
    """Ordered essays plus where they came from"""
    records: List[EssayRecord]
    provenance: str
    planted: Dict[str, float] = Field(default_factory=dict, description="Generator coefficients of synthetic corpora")

    @model_validator(mode="after")
    def _unique_ids(self) -> "Dataset":
        seen = set()
        for record in self.records:
            if record.record_id in seen:
                raise ValueError(f"duplicated record id {record.record_id!r}")
            seen.add(record.record_id)
        return self

    def __len__(self) -> int:
        return len(self.records)

    def texts(self) -> List[str]:
        return [record.essay for record in self.records]

    def subset(self, indices: List[int], provenance: Optional[str] = None) -> "Dataset":
        return Dataset(records=[self.records[i] for i in indices],
                       provenance=provenance or self.provenance,
                       planted=dict(self.planted))


class SplitResult(BaseModel):
    """A seeded train/validation partition"""
    train: Dataset
    valid: Dataset
    seed: int
    ratio: float


class ColumnSchema(BaseModel):
    """Logical column name -> TSV header. None leaves the column unmapped."""
    model_config = ConfigDict(extra="forbid")

    id: Optional[str] = "message_id"
    essay: str = "essay"
    empathy: Optional[str] = "empathy"
    distress: Optional[str] = "distress"
    emotion: Optional[str] = "emotion"
    age: Optional[str] = "age"
    gender: Optional[str] = "gender"
    ethnicity: Optional[str] = "race"
    income: Optional[str] = "income"
    education: Optional[str] = "education"
    personality: Dict[str, str] = Field(default_factory=lambda: {
        "conscientiousness": "personality_conscientiousness",
        "openness": "personality_openess",
        "extraversion": "personality_extraversion",
        "agreeableness": "personality_agreeableness",
        "stability": "personality_stability",
    })

    def mapped(self) -> Dict[str, str]:
        """Every mapped logical column in canonical order"""
        columns = {}
        for name in ("id", "essay", "empathy", "distress", "emotion") + DEMOGRAPHIC_FIELDS:
            header = getattr(self, name)
            if header:
                columns[name] = header
        for trait, header in self.personality.items():
            columns[f"personality_{trait}"] = header
        return columns
