"""
Module: tests.test_evaluation
Purpose: Scoring, the classifier interface, ablations and the gradient-check suite
"""

import json
import sys
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.core import RelationClassifier, dump_predictions
from sr_brcnn.dataset import Dataset, split_by_article
from sr_brcnn.errors import DataError, SchemaError
from sr_brcnn.evaluation import (
    AblationTable,
    ablation,
    evaluate,
    gradcheck_path_fixture,
    run_gradcheck_suite,
)
from sr_brcnn.metrics import prf1
from sr_brcnn.models.brcnn import LabelSchema, ModelConfig
from sr_brcnn.models.checkpoint import save_checkpoint
from sr_brcnn.structreg import CutKind, CutStrategy, extract_sdp
from sr_brcnn.trainer import TrainConfig, fit
from sr_brcnn.utils.output_manager import OutputManager

from conftest import RELATION_VERBS, make_instance, preposition_instances, synthetic_instances

RELATIONS = tuple(RELATION_VERBS)
TINY = ModelConfig(word_dim=8, rel_dim=4, conv_dim=8)


@pytest.fixture(scope="module")
def trained():
    instances = synthetic_instances(16, articles=4)
    config = TrainConfig(epochs=3, batch_size=4, keep_prob=1.0, seed=6)
    return fit(instances, instances, config, TINY, RELATIONS).params, instances


# ---------------------------------------------------------------------------
# Gradient-check suite
# ---------------------------------------------------------------------------

def test_gradcheck_fixture_has_three_edges():
    tree, e1, e2 = gradcheck_path_fixture()
    path = extract_sdp(tree, e1, e2)
    assert len(path.edges) == 3
    assert path.forms == ["John", "saw", "dog", "park"]


def test_gradcheck_suite_passes():
    print("\n" + "=" * 60)
    print("Gradient-check suite")
    print("=" * 60)

    suite = run_gradcheck_suite(seed=0)
    print(suite.to_text())

    names = [name for name, _ in suite.reports]
    assert names == [
        "affine", "lstm_cell", "conv_unit", "max_pool", "softmax_xent", "brcnn_loss", "brcnn_loss_features",
    ]
    assert suite.passed, suite.to_text()
    assert suite.max_rel_error < 1e-4

    loss_report = dict(suite.reports)["brcnn_loss"]
    assert {"word_table", "rel_table", "coarse_weight", "coarse_bias"} <= set(loss_report.per_param())
    features_report = dict(suite.reports)["brcnn_loss_features"]
    assert {"pos_table", "ner_table"} <= set(features_report.per_param())
    assert "ner_table" not in loss_report.per_param()


# ---------------------------------------------------------------------------
# Evaluation and the classifier
# ---------------------------------------------------------------------------

def test_evaluate_scores_every_usable_instance(trained):
    params, instances = trained
    scored = evaluate(params, instances)
    assert len(scored.predictions) == len(instances)
    gold = [item.directed for item in scored.prepared]
    assert scored.report.confusion.sum() == len(instances)
    assert scored.report.macro_f1 == prf1([p.index for p in scored.predictions], gold, params.schema.labels).macro_f1

    with pytest.raises(DataError):
        evaluate(params, [make_instance(instances[0].sentence, 2, 2, e1_end=3, e2_end=3)])


def test_classifier_loads_lazily(trained, tmp_path):
    params, instances = trained
    path = save_checkpoint(tmp_path / "best.ckpt", params)

    clf = RelationClassifier(path)
    assert clf._params is None
    records = clf.predict_records(instances)
    assert clf._params is not None
    assert len(records) == len(instances)

    first = records[0]
    assert first.gold_label == instances[0].label
    assert abs(sum(first.distribution) - 1.0) < 1e-9
    assert first.score == max(first.distribution)
    assert len(first.distribution) == LabelSchema(RELATIONS).num_directed

    clf.unload()
    assert clf._params is None
    assert clf.evaluate(instances).report.macro_f1 == evaluate(params, instances).report.macro_f1


def test_prediction_records_rescore_to_the_same_report(trained, tmp_path):
    """Scoring the JSONL output offline reproduces the in-process report."""
    params, instances = trained
    clf = RelationClassifier(save_checkpoint(tmp_path / "best.ckpt", params))
    labels = params.schema.labels

    lines = dump_predictions(clf.predict_records(instances)).splitlines()
    rows = [json.loads(line) for line in lines]
    pred = [labels.directed_index(r["label"], r["direction"]) for r in rows]
    gold = [labels.directed_index(r["gold_label"], r["gold_direction"]) for r in rows]
    assert prf1(pred, gold, labels).macro_f1 == clf.evaluate(instances).report.macro_f1


def test_classifier_relation_check(trained, tmp_path):
    params, instances = trained
    path = save_checkpoint(tmp_path / "best.ckpt", params)
    clf = RelationClassifier(path, relations=RELATIONS[:3])
    with pytest.raises(SchemaError):
        clf.predict(instances)


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

def _preposition_dataset():
    train, dev, test = split_by_article(preposition_instances(12, articles=6), seed=1)
    return Dataset(train=train, dev=dev, test=test, relations=("Located", "Near"))


def test_ablation_preposition_shortens_paths(tmp_path):
    config = TrainConfig(epochs=2, batch_size=4, seed=3)
    table = ablation(
        _preposition_dataset(),
        [None, CutStrategy(CutKind.PREPOSITION)],
        config,
        TINY,
        output=OutputManager(base_dir=tmp_path),
    )

    plain, prep = table.rows
    assert (plain.strategy, prep.strategy) == ("none", "preposition")
    assert plain.mean_sr_sdp_length == plain.mean_sdp_length == 6.0
    assert prep.mean_sr_sdp_length < prep.mean_sdp_length
    assert (tmp_path / "1_none" / "checkpoints" / "best.ckpt").exists()
    assert (tmp_path / "2_preposition" / "train_log.csv").exists()

    csv_rows = table.to_csv().splitlines()
    assert csv_rows[0] == ",".join(AblationTable.COLUMNS)
    assert len(csv_rows) == 3
    assert "preposition" in table.to_text()


def test_ablation_runs_are_deterministic():
    config = TrainConfig(epochs=2, batch_size=4, seed=9)
    random_cut = CutStrategy(CutKind.RANDOM, 0.3, seed=4)
    table = ablation(_preposition_dataset(), [random_cut, random_cut], config, TINY)
    assert table.rows[0] == table.rows[1]


def test_ablation_none_matches_plain_training():
    dataset = _preposition_dataset()
    config = TrainConfig(epochs=2, batch_size=4, seed=11)
    (row,) = ablation(dataset, [None], config, TINY).rows

    result = fit(dataset.train, dataset.dev, config, TINY, dataset.relations)
    scored = evaluate(result.params, dataset.test, config.alpha)
    assert row.strategy == "none"
    assert row.test_macro_f1 == scored.report.macro_f1
    assert row.test_micro_f1 == scored.report.micro_f1
    assert row.mean_sr_sdp_length == row.mean_sdp_length
    assert (row.best_epoch, row.best_dev_f1) == (result.best_epoch, result.best_dev_f1)


def test_ablation_input_checks():
    dataset = _preposition_dataset()
    with pytest.raises(ValueError):
        ablation(dataset, [], TrainConfig(epochs=1), TINY)
    empty_test = Dataset(train=dataset.train, dev=dataset.dev, test=[], relations=dataset.relations)
    with pytest.raises(DataError):
        ablation(empty_test, [None], TrainConfig(epochs=1), TINY)
