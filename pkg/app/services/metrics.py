"""
Evaluation quantities for both tracks.

``rmse`` is the square root of the mean squared residual (reported in the
shared task under the name MSE); ``r_avg`` averages the empathy and distress
Pearson correlations.
"""

import logging
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support

from ..errors import ArgumentError, UndefinedCorrelationError
from ..models.essay_models import EMOTION_LABELS
from ..models.report_models import ClassificationReport, LabelScores, RegressionReport

logger = logging.getLogger(__name__)


def _vectors(y_true, y_pred, minimum: int):
    a = np.asarray(y_true, dtype=np.float64).reshape(-1)
    b = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ArgumentError(f"length mismatch: {a.size} gold values vs {b.size} predictions")
    if a.size < minimum:
        raise ArgumentError(f"need at least {minimum} values, got {a.size}")
    return a, b


def pearson(y_true, y_pred) -> float:
    a, b = _vectors(y_true, y_pred, 2)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("Pearson correlation is undefined for a constant vector")
    da = a - a.mean()
    db = b - b.mean()
    r = float(da @ db / (np.sqrt(da @ da) * np.sqrt(db @ db)))
    return max(-1.0, min(1.0, r))


def rmse(y_true, y_pred) -> float:
    a, b = _vectors(y_true, y_pred, 1)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def r_avg(r_emp: float, r_dis: float) -> float:
    for value in (r_emp, r_dis):
        if not -1.0 <= value <= 1.0:
            raise ArgumentError(f"correlation {value} outside [-1, 1]")
    return (r_emp + r_dis) / 2.0


def round_half_up(value: float, places: int = 3) -> float:
    """Decimal rounding as reported in result tables (0.4675 -> 0.468)"""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(f"{value:.12f}").quantize(quantum, rounding=ROUND_HALF_UP))


def regression_report(emp_true, emp_pred, dis_true, dis_pred) -> RegressionReport:
    r_emp = pearson(emp_true, emp_pred)
    r_dis = pearson(dis_true, dis_pred)
    return RegressionReport(
        rmse_empathy=rmse(emp_true, emp_pred),
        rmse_distress=rmse(dis_true, dis_pred),
        r_empathy=r_emp,
        r_distress=r_dis,
        r_avg=r_avg(r_emp, r_dis),
        n=len(emp_true),
    )


def classification_report(gold: Sequence[str], pred: Sequence[str],
                          labels: Optional[Sequence[str]] = None) -> ClassificationReport:
    """
    Per-label and averaged precision/recall/F1 over a fixed label set.

    Zero denominators give 0. Macro averages include labels with no support.
    """
    labels = list(labels) if labels is not None else list(EMOTION_LABELS)
    if len(gold) != len(pred):
        raise ArgumentError(f"length mismatch: {len(gold)} gold labels vs {len(pred)} predictions")
    if not gold:
        raise ArgumentError("cannot evaluate an empty prediction set")
    known = set(labels)
    for label in list(gold) + list(pred):
        if label not in known:
            raise ArgumentError(f"unknown label {label!r}")

    matrix = confusion_matrix(list(gold), list(pred), labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        list(gold), list(pred), labels=labels, average=None, zero_division=0)
    per_label: Dict[str, LabelScores] = {
        label: LabelScores(label=label, precision=float(precision[i]), recall=float(recall[i]),
                           f1=float(f1[i]), support=int(support[i]))
        for i, label in enumerate(labels)
    }

    def averaged(average: str):
        p, r, f, _ = precision_recall_fscore_support(list(gold), list(pred), labels=labels,
                                                     average=average, zero_division=0)
        return float(p), float(r), float(f)

    macro_p, macro_r, macro_f = averaged("macro")
    micro_p, micro_r, micro_f = averaged("micro")
    return ClassificationReport(
        labels=labels,
        per_label=per_label,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f,
        accuracy=float(accuracy_score(list(gold), list(pred))),
        confusion=matrix.tolist(),
        n=len(gold),
    )


CLASSIFICATION_ROWS = [
    ("Macro F1 Score", "macro_f1"),
    ("Micro F1 Score", "micro_f1"),
    ("Accuracy", "accuracy"),
    ("Macro Precision", "macro_precision"),
    ("Micro Precision", "micro_precision"),
    ("Macro Recall", "macro_recall"),
    ("Micro Recall", "micro_recall"),
]

REGRESSION_ROWS = [
    ("Empathy RMSE", "rmse_empathy"),
    ("Distress RMSE", "rmse_distress"),
    ("Empathy Pearson r", "r_empathy"),
    ("Distress Pearson r", "r_distress"),
    ("Average Pearson r", "r_avg"),
]


def _render(rows, report) -> str:
    width = max(len(title) for title, _ in rows)
    lines = [f"{title:<{width}}  {round_half_up(getattr(report, field)):.3f}" for title, field in rows]
    lines.append(f"{'n':<{width}}  {report.n}")
    return "\n".join(lines) + "\n"


def render_classification_report(report: ClassificationReport) -> str:
    return _render(CLASSIFICATION_ROWS, report)


def render_regression_report(report: RegressionReport) -> str:
    return _render(REGRESSION_ROWS, report)


def label_histogram(pred: Sequence[str], labels: Optional[Sequence[str]] = None) -> Dict[str, int]:
    labels = list(labels) if labels is not None else list(EMOTION_LABELS)
    counts = {label: 0 for label in labels}
    for label in pred:
        counts[label] += 1
    return counts
