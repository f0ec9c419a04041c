"""
Module: sr_brcnn.evaluation
Purpose: Scoring trained models, strategy ablations and the gradient-check suite
Dependencies: torch, numpy
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import csv
import io
import logging

import numpy as np
import torch
from torch import Tensor

from sr_brcnn.errors import DataError
from sr_brcnn.metrics import MetricsReport, prf1
from sr_brcnn.models.brcnn import (
    ModelConfig,
    ModelParams,
    Prediction,
    PreparedInstance,
    build_schema,
    forward_path,
    loss,
    predict_prepared,
    prepare_instances,
)
from sr_brcnn.models.neuralcore import (
    DTYPE,
    GradCheckReport,
    LSTMParams,
    affine,
    conv_unit,
    grad_check,
    lstm_cell,
    make_generator,
    max_pool,
    softmax_xent,
)
from sr_brcnn.structreg import CutStrategy, extract_sdp, strategy_name
from sr_brcnn.trainer import TrainConfig, fit
from sr_brcnn.dataset import Dataset
from sr_brcnn.treebank import DependencyTree, RelationInstance, Token
from sr_brcnn.utils.output_manager import OutputManager
from sr_brcnn.utils.runtime import derive_seed

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class Evaluation:
    report: MetricsReport
    prepared: List[PreparedInstance]
    predictions: List[Prediction]


def evaluate(
    params: ModelParams,
    instances: Sequence[RelationInstance],
    alpha: Optional[float] = None,
) -> Evaluation:
    """
    Decode every instance and score it.

    The paths are extracted with the strategy recorded in the model schema,
    so a model is always evaluated on the kind of path it was trained on.

    Raises:
        DataError: If no instance yields a path
    """
    prepared = prepare_instances(instances, params.schema.labels, params.schema.cut_strategy)
    if not prepared:
        raise DataError("nothing to evaluate: no instance yields a path")
    predictions = predict_prepared(prepared, params, alpha)
    report = prf1([p.index for p in predictions], [item.directed for item in prepared], params.schema.labels)
    return Evaluation(report=report, prepared=prepared, predictions=predictions)


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    strategy: str
    test_macro_f1: float
    test_micro_f1: float
    mean_sdp_length: float
    mean_sr_sdp_length: float
    best_epoch: int
    best_dev_f1: float


@dataclass
class AblationTable:
    """Test scores and path lengths per cut strategy."""

    rows: List[AblationRow] = field(default_factory=list)

    COLUMNS = ("strategy", "test_macro_f1", "test_micro_f1", "mean_sdp_length",
               "mean_sr_sdp_length", "best_epoch", "best_dev_f1")

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in self.rows:
            writer.writerow([
                row.strategy, repr(row.test_macro_f1), repr(row.test_micro_f1),
                repr(row.mean_sdp_length), repr(row.mean_sr_sdp_length), row.best_epoch, repr(row.best_dev_f1),
            ])
        return buffer.getvalue()

    def to_text(self) -> str:
        lines = [f"{'strategy':<14}{'macro-F1':>10}{'micro-F1':>10}{'SDP len':>10}{'SR-SDP len':>12}{'epoch':>7}"]
        for row in self.rows:
            lines.append(
                f"{row.strategy:<14}{row.test_macro_f1:>10.4f}{row.test_micro_f1:>10.4f}"
                f"{row.mean_sdp_length:>10.3f}{row.mean_sr_sdp_length:>12.3f}{row.best_epoch:>7d}"
            )
        return "\n".join(lines)


def ablation(
    dataset: Dataset,
    strategies: Sequence[Optional[CutStrategy]],
    config: TrainConfig,
    model_config: Optional[ModelConfig] = None,
    output: Optional[OutputManager] = None,
    embeddings: Optional[Union[str, Path]] = None,
) -> AblationTable:
    """
    Train and test one model per strategy under a shared config and seed.

    Strategies run one after another; each run is deterministic on its own.

    Raises:
        ValueError: If no strategy is given
        DataError: If the test split is empty
    """
    if not strategies:
        raise ValueError("ablation needs at least one strategy")
    if not dataset.test:
        raise DataError("ablation needs a non-empty test split")
    table = AblationTable()
    for position, strategy in enumerate(strategies, 1):
        name = strategy_name(strategy)
        logger.info(f"Ablation run {position}/{len(strategies)}: strategy {name}")
        run_config = replace(config, strategy=strategy)
        run_output = None
        if output is not None:
            run_output = OutputManager(base_dir=output.run_dir, run_name=f"{position}_{name}", add_timestamp=False)
        result = fit(dataset.train, dataset.dev, run_config, model_config, dataset.relations,
                     output=run_output, embeddings=embeddings)
        scored = evaluate(result.params, dataset.test, run_config.alpha)
        table.rows.append(AblationRow(
            strategy=name,
            test_macro_f1=scored.report.macro_f1,
            test_micro_f1=scored.report.micro_f1,
            mean_sdp_length=float(np.mean([item.plain_length for item in scored.prepared])),
            mean_sr_sdp_length=float(np.mean([len(item.path) for item in scored.prepared])),
            best_epoch=result.best_epoch,
            best_dev_f1=result.best_dev_f1,
        ))
    return table


# ---------------------------------------------------------------------------
# Gradient-check suite
# ---------------------------------------------------------------------------

@dataclass
class GradCheckSuite:
    """Named gradient-check reports for every primitive and the full loss."""

    reports: List[Tuple[str, GradCheckReport]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(report.passed for _, report in self.reports)

    @property
    def max_rel_error(self) -> float:
        return max((report.max_rel_error for _, report in self.reports), default=0.0)

    def to_text(self) -> str:
        return "\n".join(f"{name:<14}{report}" for name, report in self.reports)


def _leaf(generator: torch.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return (scale * torch.randn(*shape, dtype=DTYPE, generator=generator)).requires_grad_(True)


def gradcheck_path_fixture() -> Tuple[DependencyTree, int, int]:
    """
    Five-token sentence whose SDP between tokens 1 and 4 has three edges.

        saw(2) <- John(1); saw -> dog(3); dog -> park(4) -> the(5)
    """
    tokens = (
        Token(1, "John", "PROPN", 2, "nsubj"),
        Token(2, "saw", "VERB", 0, "root"),
        Token(3, "dog", "NOUN", 2, "obj"),
        Token(4, "park", "NOUN", 3, "nmod"),
        Token(5, "the", "DET", 4, "det"),
    )
    return DependencyTree(tokens=tokens, sent_id="gradcheck"), 1, 4


def _primitive_checks(generator: torch.Generator, step: float, tolerance: float) -> Dict[str, Callable[[], GradCheckReport]]:
    x, W, b = _leaf(generator, 3), _leaf(generator, 2, 3), _leaf(generator, 2)
    c_aff = torch.randn(2, dtype=DTYPE, generator=generator)

    cell = LSTMParams(3, 4)
    with torch.no_grad():
        cell.weight.copy_(0.5 * torch.randn(cell.weight.shape, dtype=DTYPE, generator=generator))
        cell.bias.copy_(0.5 * torch.randn(cell.bias.shape, dtype=DTYPE, generator=generator))
    x_t, h_prev, c_prev = _leaf(generator, 3), _leaf(generator, 4, scale=0.5), _leaf(generator, 4, scale=0.5)
    c_h, c_c = torch.randn(4, dtype=DTYPE, generator=generator), torch.randn(4, dtype=DTYPE, generator=generator)

    h_a, h_ab, h_b = _leaf(generator, 4), _leaf(generator, 2), _leaf(generator, 4)
    W_con, b_con = _leaf(generator, 5, 10, scale=0.3), _leaf(generator, 5, scale=0.3)
    c_conv = torch.randn(5, dtype=DTYPE, generator=generator)

    units = [_leaf(generator, 6) for _ in range(3)]
    c_pool = torch.randn(6, dtype=DTYPE, generator=generator)

    logits = _leaf(generator, 5)

    def _lstm() -> Tensor:
        h, c = lstm_cell(x_t, h_prev, c_prev, cell)
        return (h * c_h).sum() + (c * c_c).sum()

    checks = {
        "affine": lambda: grad_check(lambda: (affine(x, W, b) * c_aff).sum(),
                                     {"x": x, "W": W, "b": b}, step, tolerance),
        "lstm_cell": lambda: grad_check(_lstm, {"x": x_t, "h_prev": h_prev, "c_prev": c_prev,
                                                "weight": cell.weight, "bias": cell.bias}, step, tolerance),
        "conv_unit": lambda: grad_check(lambda: (conv_unit(h_a, h_ab, h_b, W_con, b_con) * c_conv).sum(),
                                        {"h_a": h_a, "h_ab": h_ab, "h_b": h_b, "W_con": W_con, "b_con": b_con},
                                        step, tolerance),
        "max_pool": lambda: grad_check(lambda: (max_pool(units) * c_pool).sum(),
                                       {f"unit{k}": u for k, u in enumerate(units)}, step, tolerance),
        "softmax_xent": lambda: grad_check(lambda: softmax_xent(logits, 2)[1], {"logits": logits}, step, tolerance),
    }
    return checks


def run_gradcheck_suite(
    seed: int = 0,
    hidden: int = 4,
    step: float = 1e-4,
    tolerance: float = 1e-4,
    lam: float = 1e-3,
) -> GradCheckSuite:
    """
    Central-difference checks of every primitive and of the end-to-end loss.

    The end-to-end checks build a model with all dimensions equal to
    ``hidden`` over a 3-edge path, once plain and once with the POS and
    entity-type channels, and check every parameter tensor.
    """
    generator = make_generator(derive_seed(seed, "gradcheck"))
    suite = GradCheckSuite()
    for name, check in _primitive_checks(generator, step, tolerance).items():
        suite.reports.append((name, check()))

    tree, e1, e2 = gradcheck_path_fixture()
    path = extract_sdp(tree, e1, e2)
    gold = RelationInstance(
        sentence=tree, e1_span=(e1, e1), e2_span=(e2, e2), e1_type="PER", e2_type="LOC",
        label="Near", direction="21", sent_id=tree.sent_id, article_id=tree.sent_id,
    )
    variants = {
        "brcnn_loss": ModelConfig(word_dim=hidden, rel_dim=hidden, conv_dim=hidden),
        "brcnn_loss_features": ModelConfig(
            word_dim=hidden, rel_dim=hidden, conv_dim=hidden, pos_dim=hidden, ner_dim=hidden,
        ),
    }
    for name, model_config in variants.items():
        params = ModelParams(build_schema(
            [path], ("Located", "Near"), model_config, entity_types=(gold.e1_type, gold.e2_type),
        ))
        params.reset_parameters(derive_seed(seed, "init"), init_scale=0.5, embedding_scale=0.5)

        def objective(params: ModelParams = params) -> Tensor:
            out = forward_path(path, params, entity_types=(gold.e1_type, gold.e2_type))
            return loss(out, gold, params, lam)

        suite.reports.append((name, grad_check(objective, params.named_tensors(), step, tolerance)))
    for name, report in suite.reports:
        logger.info(f"gradcheck {name}: {report}")
    return suite
