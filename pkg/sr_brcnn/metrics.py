"""
Module: sr_brcnn.metrics
Purpose: Precision, recall, F1 and confusion matrices over directed classes
Dependencies: numpy

Directed classes are scored individually. Relation-level scores are
direction-sensitive: a prediction counts for relation k when its relation is
k, and is correct only when relation and direction both match the gold
class. Macro-F1 averages the K relation-level F1 scores; micro-F1 pools
their counts. ``Other`` takes part in neither.
"""

from dataclasses import dataclass
from typing import List, Sequence, Union
import csv
import io

import numpy as np

from sr_brcnn.models.brcnn import DirectedLabel, LabelSchema

LabelLike = Union[int, DirectedLabel]


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _f1(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    return _safe_div(2.0 * precision * recall, precision + recall)


def _as_index(label: LabelLike, labels: LabelSchema) -> int:
    if isinstance(label, DirectedLabel):
        return labels.directed_index(label.label, label.direction)
    index = int(label)
    if not 0 <= index < labels.num_directed:
        raise ValueError(f"class index {index} outside [0, {labels.num_directed})")
    return index


@dataclass
class MetricsReport:
    """
    Scores of one prediction run.

    Attributes:
        labels: Label schema the indices refer to
        confusion: (2K+1) x (2K+1) counts, rows = gold, columns = predicted
        precision, recall, f1, support: Per directed class
        relation_precision, relation_recall, relation_f1, relation_support: Per relation
        macro_f1: Mean relation-level F1
        micro_f1: F1 of the pooled relation-level counts
    """

    labels: LabelSchema
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    relation_precision: np.ndarray
    relation_recall: np.ndarray
    relation_f1: np.ndarray
    relation_support: np.ndarray
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion)) / self.total if self.total else 0.0

    def _rows(self) -> List[List[object]]:
        rows: List[List[object]] = []
        for k, name in enumerate(self.labels.class_names()):
            rows.append(["class", name, self.precision[k], self.recall[k], self.f1[k], int(self.support[k])])
        for k, name in enumerate(self.labels.relations):
            rows.append([
                "relation", name, self.relation_precision[k], self.relation_recall[k],
                self.relation_f1[k], int(self.relation_support[k]),
            ])
        relation_total = int(self.relation_support.sum())
        rows.append(["macro", "relations", float(np.mean(self.relation_precision)),
                     float(np.mean(self.relation_recall)), self.macro_f1, relation_total])
        rows.append(["micro", "relations", self.micro_precision, self.micro_recall, self.micro_f1, relation_total])
        return rows

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["scope", "name", "precision", "recall", "f1", "support"])
        for scope, name, p, r, f, n in self._rows():
            writer.writerow([scope, name, repr(float(p)), repr(float(r)), repr(float(f)), n])
        return buffer.getvalue()

    def to_text(self) -> str:
        width = max(len(n) for n in self.labels.class_names() + ["relations"]) + 2
        lines = [f"{'':<9}{'name':<{width}}{'P':>8}{'R':>8}{'F1':>8}{'n':>7}"]
        for scope, name, p, r, f, n in self._rows():
            lines.append(f"{scope:<9}{name:<{width}}{p:>8.4f}{r:>8.4f}{f:>8.4f}{n:>7d}")
        lines.append(f"accuracy {self.accuracy:.4f} over {self.total} instances")
        return "\n".join(lines)


def confusion_matrix(pred: Sequence[int], gold: Sequence[int], num_classes: int) -> np.ndarray:
    """Counts with rows = gold class, columns = predicted class."""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return matrix


def prf1(pred: Sequence[LabelLike], gold: Sequence[LabelLike], labels: LabelSchema) -> MetricsReport:
    """
    Score predictions against gold labels.

    Args:
        pred: Predicted classes (DirectedLabel or directed class index)
        gold: Gold classes, same length
        labels: Label schema

    Raises:
        ValueError: Empty input or unequal lengths

    Example:
        >>> report = prf1([1, 1, 0], [1, 2, 0], LabelSchema(["Located"]))
        >>> round(report.macro_f1, 3)
        0.5
    """
    if len(pred) != len(gold):
        raise ValueError(f"prediction count {len(pred)} != gold count {len(gold)}")
    if not gold:
        raise ValueError("cannot score an empty prediction list")
    p_idx = np.array([_as_index(x, labels) for x in pred], dtype=np.int64)
    g_idx = np.array([_as_index(x, labels) for x in gold], dtype=np.int64)

    confusion = confusion_matrix(p_idx, g_idx, labels.num_directed)
    tp = np.diag(confusion)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)

    # Relation-level counts; index 0 (Other) is not a relation
    K = labels.num_relations
    rel_of = np.array([labels.coarse_of(k) - 1 for k in range(labels.num_directed)])
    rel_tp = np.zeros(K, dtype=np.int64)
    rel_pred = np.zeros(K, dtype=np.int64)
    rel_gold = np.zeros(K, dtype=np.int64)
    correct = p_idx == g_idx
    for k in range(K):
        rel_pred[k] = int(np.sum(rel_of[p_idx] == k))
        rel_gold[k] = int(np.sum(rel_of[g_idx] == k))
        rel_tp[k] = int(np.sum(correct & (rel_of[g_idx] == k)))
    rel_precision = _safe_div(rel_tp, rel_pred)
    rel_recall = _safe_div(rel_tp, rel_gold)
    rel_f1 = _f1(rel_precision, rel_recall)

    micro_p = float(_safe_div(rel_tp.sum(), rel_pred.sum()))
    micro_r = float(_safe_div(rel_tp.sum(), rel_gold.sum()))
    micro_f1 = float(_f1(np.float64(micro_p), np.float64(micro_r)))

    return MetricsReport(
        labels=labels,
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        support=support,
        relation_precision=rel_precision,
        relation_recall=rel_recall,
        relation_f1=rel_f1,
        relation_support=rel_gold,
        macro_f1=float(np.mean(rel_f1)),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
    )
