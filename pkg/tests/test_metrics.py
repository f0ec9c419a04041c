"""
Module: tests.test_metrics
Purpose: Precision, recall, F1 and confusion matrices
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.config import RELATION_TAGS
from sr_brcnn.metrics import confusion_matrix, prf1
from sr_brcnn.models.brcnn import DirectedLabel, LabelSchema

LABELS = LabelSchema(["Located", "Near"])


def test_perfect_predictions():
    gold = [0, 1, 2, 3, 4, 1]
    report = prf1(gold, gold, LABELS)
    assert np.all(report.f1 == 1.0)
    assert np.all(report.relation_f1 == 1.0)
    assert report.macro_f1 == 1.0 and report.micro_f1 == 1.0
    assert report.accuracy == 1.0


def test_single_class_arithmetic():
    """2 tp, 1 fp, 1 fn on Located(e1,e2) -> P = R = F1 = 2/3."""
    pred = [1, 1, 1, 0]
    gold = [1, 1, 0, 1]
    report = prf1(pred, gold, LABELS)
    assert report.precision[1] == pytest.approx(2 / 3)
    assert report.recall[1] == pytest.approx(2 / 3)
    assert report.f1[1] == pytest.approx(2 / 3)
    assert report.relation_f1[0] == pytest.approx(2 / 3)
    assert report.relation_f1[1] == 0.0, "Near never occurs"
    assert report.macro_f1 == pytest.approx(1 / 3)


def test_wrong_direction_is_an_error():
    """Relation right, direction wrong: counted as predicted, not as correct."""
    report = prf1([1, 1, 0], [1, 2, 0], LabelSchema(["Located"]))
    assert report.relation_precision[0] == 0.5
    assert report.relation_recall[0] == 0.5
    assert report.macro_f1 == pytest.approx(0.5)


def test_other_is_excluded_from_relation_scores():
    report = prf1([0, 0], [0, 0], LABELS)
    assert report.macro_f1 == 0.0 and report.micro_f1 == 0.0
    assert report.f1[0] == 1.0


def test_micro_equals_accuracy_without_other():
    rng = np.random.default_rng(1)
    gold = [int(x) for x in rng.integers(1, 5, size=40)]
    pred = [int(x) for x in rng.integers(1, 5, size=40)]
    report = prf1(pred, gold, LABELS)
    assert report.micro_f1 == pytest.approx(report.accuracy)


def test_matches_naive_counts():
    """50 random instances against a counting loop."""
    labels = LabelSchema(RELATION_TAGS)
    rng = np.random.default_rng(2)
    gold = [int(x) for x in rng.integers(0, 19, size=50)]
    pred = [g if rng.random() < 0.4 else int(rng.integers(0, 19)) for g in gold]
    report = prf1(pred, gold, labels)

    for k in range(19):
        tp = sum(1 for p, g in zip(pred, gold) if p == g == k)
        fp = sum(1 for p, g in zip(pred, gold) if p == k and g != k)
        fn = sum(1 for p, g in zip(pred, gold) if g == k and p != k)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        assert report.precision[k] == pytest.approx(precision)
        assert report.recall[k] == pytest.approx(recall)
        assert report.f1[k] == pytest.approx(f1)

    relation_f1 = []
    for r in range(9):
        members = {2 * r + 1, 2 * r + 2}
        tp = sum(1 for p, g in zip(pred, gold) if p == g and g in members)
        n_pred = sum(1 for p in pred if p in members)
        n_gold = sum(1 for g in gold if g in members)
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_gold if n_gold else 0.0
        relation_f1.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    assert report.macro_f1 == pytest.approx(sum(relation_f1) / 9)


def test_confusion_marginals():
    rng = np.random.default_rng(3)
    gold = [int(x) for x in rng.integers(0, 5, size=30)]
    pred = [int(x) for x in rng.integers(0, 5, size=30)]
    report = prf1(pred, gold, LABELS)
    matrix = report.confusion
    assert matrix.sum() == 30
    assert list(matrix.sum(axis=1)) == [gold.count(k) for k in range(5)]
    assert list(matrix.sum(axis=0)) == [pred.count(k) for k in range(5)]
    assert list(report.support) == [gold.count(k) for k in range(5)]
    assert np.all((report.precision >= 0) & (report.precision <= 1))


def test_confusion_matrix_orientation():
    matrix = confusion_matrix([2, 2], [1, 2], 3)
    assert matrix[1, 2] == 1, "rows are gold, columns predicted"
    assert matrix[2, 2] == 1


def test_directed_labels_accepted():
    pred = [DirectedLabel("Near", "21"), DirectedLabel("Other")]
    gold = [DirectedLabel("Near", "21"), DirectedLabel("Located", "12")]
    assert prf1(pred, gold, LABELS).confusion[4, 4] == 1


def test_input_checks():
    with pytest.raises(ValueError):
        prf1([1], [1, 2], LABELS)
    with pytest.raises(ValueError):
        prf1([], [], LABELS)
    with pytest.raises(ValueError):
        prf1([7], [1], LABELS)


def test_report_rendering():
    report = prf1([1, 2, 0], [1, 1, 0], LABELS)
    rows = report.to_csv().splitlines()
    assert rows[0] == "scope,name,precision,recall,f1,support"
    assert rows[1].startswith("class,Other,")
    assert any(r.startswith("relation,Near,") for r in rows)
    assert rows[-1].startswith("micro,relations,")
    assert len(rows) == 1 + 5 + 2 + 2

    text = report.to_text()
    assert "Located(e2,e1)" in text
    assert "accuracy 0.6667 over 3 instances" in text
