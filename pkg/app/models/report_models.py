from pydantic import BaseModel, Field
from typing import List, Dict


class RegressionReport(BaseModel):
    """Empathy/distress evaluation; r_avg is the leaderboard quantity"""
    rmse_empathy: float
    rmse_distress: float
    r_empathy: float = Field(ge=-1, le=1)
    r_distress: float = Field(ge=-1, le=1)
    r_avg: float = Field(ge=-1, le=1)
    n: int


class LabelScores(BaseModel):
    """Precision, recall and F1 of one label"""
    label: str
    precision: float
    recall: float
    f1: float
    support: int


class ClassificationReport(BaseModel):
    """Single-label multiclass evaluation over a fixed label set"""
    labels: List[str]
    per_label: Dict[str, LabelScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    accuracy: float
    confusion: List[List[int]] = Field(description="rows = gold label, columns = predicted label, in `labels` order")
    n: int
