"""
Module: sr_brcnn.core
Purpose: RelationClassifier, the high-level interface to a trained checkpoint
Dependencies: pydantic, torch
Reference: See docs/QUICK_START.md

The classifier loads its checkpoint lazily, decodes relation instances and
writes prediction records that carry the gold label alongside the decoded
one, so predictions can be scored offline.
"""

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import logging

from pydantic import BaseModel, Field

from sr_brcnn.evaluation import Evaluation, evaluate
from sr_brcnn.models.brcnn import ModelParams, ModelSchema, Prediction, prepare_instances, predict_prepared
from sr_brcnn.models.checkpoint import load_checkpoint
from sr_brcnn.treebank import EntityRecord, RelationInstance

logger = logging.getLogger(__name__)


class PredictionRecord(BaseModel):
    """One line of ``predict`` output."""

    sent_id: str
    article_id: Optional[str] = None
    e1: EntityRecord
    e2: EntityRecord
    gold_label: str
    gold_direction: Optional[str] = None
    label: str
    direction: Optional[str] = None
    score: float = Field(..., description="Mixed probability of the decoded class")
    distribution: List[float] = Field(..., description="Mixed directed-class distribution, index order")


class RelationClassifier:
    """
    Trained SR-BRCNN behind a small interface.

    Features:
    - Lazy checkpoint loading (the file is read on first use)
    - Optional relation-list check against an expected label set
    - Batch prediction, scoring and JSONL prediction records

    Attributes:
        checkpoint: Path of the checkpoint file
        alpha: Mixing weight override (None = the value stored in the checkpoint)

    Example:
        >>> clf = RelationClassifier("outputs/run/checkpoints/best.ckpt")
        >>> records = clf.predict_records(instances)
        >>> report = clf.evaluate(instances).report
    """

    def __init__(
        self,
        checkpoint: Union[str, Path],
        alpha: Optional[float] = None,
        relations: Optional[Sequence[str]] = None,
    ):
        """
        Initialize RelationClassifier.

        Args:
            checkpoint: Checkpoint written by ``train``
            alpha: Override for the forward/backward mixing weight
            relations: Relation list the checkpoint must match (None = accept the stored one)
        """
        self.checkpoint = Path(checkpoint)
        self.alpha = alpha
        self.relations = tuple(relations) if relations is not None else None

        self._params: Optional[ModelParams] = None

    @property
    def params(self) -> ModelParams:
        """Model parameters, loaded on first access."""
        if self._params is None:
            logger.info(f"Loading checkpoint {self.checkpoint} (first use)...")
            self._params = load_checkpoint(self.checkpoint, expected_relations=self.relations)
        return self._params

    @property
    def schema(self) -> ModelSchema:
        return self.params.schema

    def predict(self, instances: Iterable[RelationInstance]) -> List[Tuple[RelationInstance, Prediction]]:
        """Decode instances; pairs whose entities share a head are skipped."""
        prepared = prepare_instances(instances, self.schema.labels, self.schema.cut_strategy)
        predictions = predict_prepared(prepared, self.params, self.alpha)
        return [(item.instance, pred) for item, pred in zip(prepared, predictions)]

    def predict_records(self, instances: Iterable[RelationInstance]) -> List[PredictionRecord]:
        records = []
        for inst, pred in self.predict(instances):
            records.append(PredictionRecord(
                sent_id=inst.sent_id,
                article_id=inst.article_id,
                e1=EntityRecord(start=inst.e1_span[0], end=inst.e1_span[1], type=inst.e1_type),
                e2=EntityRecord(start=inst.e2_span[0], end=inst.e2_span[1], type=inst.e2_type),
                gold_label=inst.label,
                gold_direction=inst.direction,
                label=pred.decoded.label,
                direction=pred.decoded.direction,
                score=float(pred.directed[pred.index]),
                distribution=[float(v) for v in pred.directed],
            ))
        return records

    def evaluate(self, instances: Sequence[RelationInstance]) -> Evaluation:
        return evaluate(self.params, instances, self.alpha)

    def unload(self) -> None:
        """Drop the loaded parameters; the next access reloads them."""
        self._params = None


def dump_predictions(records: Iterable[PredictionRecord]) -> str:
    return "".join(record.model_dump_json() + "\n" for record in records)
