"""
Module: sr_brcnn.trainer
Purpose: AdaDelta training with dropout, L2 and dev-F1 early stopping
Dependencies: torch, numpy, gensim

Training is a deterministic function of the data and the TrainConfig: the
instance order, dropout masks and initial parameters all come from streams
derived from ``TrainConfig.seed``.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import copy
import csv
import logging
import math
import time

import numpy as np
import torch
from torch import Tensor
from gensim.models.keyedvectors import KeyedVectors

from sr_brcnn.config import Config, RELATION_TAGS
from sr_brcnn.errors import DataError, EmbeddingFormatError, NumericError, ShapeError
from sr_brcnn.metrics import MetricsReport, prf1
from sr_brcnn.models.brcnn import (
    LabelSchema,
    ModelConfig,
    ModelParams,
    PreparedInstance,
    Vocab,
    build_schema,
    forward_path,
    loss_terms,
    predict_prepared,
    prepare_instances,
)
from sr_brcnn.models.checkpoint import save_checkpoint
from sr_brcnn.models.neuralcore import DTYPE, Tape, make_generator
from sr_brcnn.structreg import CutStrategy
from sr_brcnn.treebank import RelationInstance
from sr_brcnn.utils.output_manager import OutputManager
from sr_brcnn.utils.runtime import derive_seed

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "mean_loss", "dev_macro_f1", "seconds")


@dataclass
class TrainConfig:
    """
    Optimization settings.

    Attributes:
        lam: L2 coefficient on every weight matrix
        keep_prob: Dropout keep probability on the embeddings
        rho, eps: AdaDelta decay and stabilizer
        epochs: Maximum number of epochs
        batch_size: Instances per update
        seed: Run-level seed all random streams derive from
        alpha: Forward/backward mixing weight used for dev decoding
        strategy: Structure-regularization strategy (None = plain SDP)
        patience: Epochs without dev improvement before stopping
        init_scale: Uniform init bound of weights
        embedding_init_scale: Uniform init bound of embedding rows
    """

    lam: float = 1e-4
    keep_prob: float = 0.5
    rho: float = 0.95
    eps: float = 1e-6
    epochs: int = 50
    batch_size: int = 16
    seed: int = 13
    alpha: float = 0.5
    strategy: Optional[CutStrategy] = None
    patience: int = 10
    init_scale: float = 0.08
    embedding_init_scale: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0:
            raise ValueError(f"AdaDelta needs rho in (0, 1) and eps > 0, got rho={self.rho}, eps={self.eps}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")

    @classmethod
    def from_config(cls, config: Config, **overrides: Any) -> "TrainConfig":
        """
        Build from the ``training``, ``model`` and ``structreg`` sections.

        Overrides that are None are ignored, so CLI flags can be passed straight through.
        """
        training = config.section("training")
        structreg = config.section("structreg")
        seed = overrides.get("seed") if overrides.get("seed") is not None else training["seed"]
        values: Dict[str, Any] = {
            "lam": training["lambda"],
            "keep_prob": training["keep_prob"],
            "rho": training["rho"],
            "eps": training["eps"],
            "epochs": training["epochs"],
            "batch_size": training["batch_size"],
            "seed": seed,
            "alpha": config.model["alpha"],
            "patience": training["patience"],
            "init_scale": training["init_scale"],
            "embedding_init_scale": training["embedding_init_scale"],
            "strategy": CutStrategy.parse(
                structreg["strategy"], structreg["cut_ratio"], derive_seed(seed, "cut")
            ),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# ---------------------------------------------------------------------------
# AdaDelta
# ---------------------------------------------------------------------------

class AdaDeltaState:
    """
    Per-parameter AdaDelta accumulators.

    Wraps ``torch.optim.Adadelta`` with lr = 1, which applies exactly

        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2

    with ``dx`` computed from the previous E[dx^2].
    """

    def __init__(self, params: Mapping[str, Tensor], rho: float = 0.95, eps: float = 1e-6):
        self.names = list(params.keys())
        self.params = dict(params)
        self.rho = rho
        self.eps = eps
        self.optimizer = torch.optim.Adadelta(
            [self.params[n] for n in self.names], lr=1.0, rho=rho, eps=eps, weight_decay=0.0, foreach=False,
        )

    def accumulators(self, name: str) -> Tuple[Tensor, Tensor]:
        """(E[g^2], E[dx^2]) of one parameter; zeros before the first step."""
        p = self.params[name]
        state = self.optimizer.state.get(p)
        if not state:
            return torch.zeros_like(p), torch.zeros_like(p)
        return state["square_avg"].clone(), state["acc_delta"].clone()


def adadelta_step(params: Mapping[str, Tensor], grads: Mapping[str, Tensor], state: AdaDeltaState) -> None:
    """
    Apply one AdaDelta update in place.

    Raises:
        ShapeError: If a gradient is missing or its shape differs from its parameter
    """
    for name in state.names:
        g = grads.get(name)
        p = params[name]
        if g is None or tuple(g.shape) != tuple(p.shape):
            raise ShapeError("adadelta_step", tuple(p.shape), tuple(g.shape) if g is not None else (),
                             detail=f"gradient of {name}")
    for name in state.names:
        state.params[name].grad = grads[name].detach().to(DTYPE).clone()
    state.optimizer.step()
    for name in state.names:
        state.params[name].grad = None


# ---------------------------------------------------------------------------
# Epochs
# ---------------------------------------------------------------------------

def batch_gradients(
    batch: Sequence[Tuple[int, PreparedInstance]],
    params: ModelParams,
    config: TrainConfig,
    epoch: int,
) -> Tuple[float, Dict[str, Tensor], int]:
    """
    Mean penalized loss of a mini-batch and its gradient.

    Args:
        batch: (position in epoch order, instance) pairs
        params: Current parameters
        config: Training settings
        epoch: 1-based epoch number, mixed into the dropout seeds

    Returns:
        (mean loss, gradients by parameter name, number of instances that failed)
    """
    losses = []
    failed = 0
    for position, item in batch:
        seed = derive_seed(config.seed, "dropout", epoch, position)
        try:
            out = forward_path(item.path, params, training=True, keep_prob=config.keep_prob,
                               seed=make_generator(seed), entity_types=item.entity_types)
            terms = loss_terms(out, item.directed, item.coarse, params, config.lam)
        except DataError as e:
            failed += 1
            logger.warning(f"Skipping instance {item.instance.sent_id} in epoch {epoch}: {e}")
            continue
        losses.append(terms.total)
    named = params.named_tensors()
    if not losses:
        return math.nan, {n: torch.zeros_like(p) for n, p in named.items()}, failed
    mean = torch.stack(losses).mean()
    grads = Tape().backward(mean, named)
    return float(mean.detach()), grads, failed


@dataclass(frozen=True)
class EpochResult:
    mean_loss: float
    updates: int
    failed: int


def train_epoch(
    data: Sequence[PreparedInstance],
    params: ModelParams,
    state: AdaDeltaState,
    config: TrainConfig,
    epoch: int = 1,
) -> EpochResult:
    """
    One pass over the training data in an epoch-seeded order.

    Each mini-batch contributes the gradient of its mean loss; the reported
    loss is the instance-weighted mean over the epoch.

    Raises:
        DataError: If the data is empty or every instance failed
        NumericError: If the epoch loss is not finite
    """
    if not data:
        raise DataError("no trainable instances (every pair degenerate or the split is empty)")
    order = np.random.default_rng(derive_seed(config.seed, "shuffle", epoch)).permutation(len(data))
    named = params.named_tensors()

    total, counted, failed, updates = 0.0, 0, 0, 0
    for start in range(0, len(order), config.batch_size):
        batch = [(int(pos), data[int(i)]) for pos, i in
                 zip(range(start, start + config.batch_size), order[start:start + config.batch_size])]
        batch_loss, grads, batch_failed = batch_gradients(batch, params, config, epoch)
        failed += batch_failed
        ok = len(batch) - batch_failed
        if ok == 0:
            continue
        if not math.isfinite(batch_loss):
            raise NumericError(f"non-finite loss in epoch {epoch}")
        adadelta_step(named, grads, state)
        total += batch_loss * ok
        counted += ok
        updates += 1
        logger.debug(f"epoch {epoch} batch {updates}: loss {batch_loss:.6f}")

    if counted == 0:
        raise DataError(f"all {len(data)} instances failed in epoch {epoch}")
    mean_loss = total / counted
    if not math.isfinite(mean_loss):
        raise NumericError(f"non-finite mean loss in epoch {epoch}")
    return EpochResult(mean_loss=mean_loss, updates=updates, failed=failed)


# ---------------------------------------------------------------------------
# Word vectors
# ---------------------------------------------------------------------------

def _locate_format_error(path: Path) -> Tuple[Optional[int], str]:
    """First line that breaks the word2vec text format, with a reason."""
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        header = f.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            return 1, "header must be '<count> <dim>'"
        count, dim = int(header[0]), int(header[1])
        seen = 0
        for line_no, line in enumerate(f, 2):
            if not line.strip():
                continue
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                return line_no, f"expected a token and {dim} values, found {len(parts) - 1} values"
            try:
                [float(x) for x in parts[1:]]
            except ValueError:
                return line_no, "non-numeric vector value"
            seen += 1
        if seen != count:
            return None, f"header announces {count} vectors, file holds {seen}"
    return None, "unreadable word2vec text file"


def load_word_vectors(
    path: Union[str, Path],
    vocab: Union[Vocab, Sequence[str]],
    dim: int,
    seed: int = 0,
    scale: float = 0.05,
) -> Tensor:
    """
    Embedding table for ``vocab`` from a word2vec text file.

    Rows of words found in the file are copied exactly; the rest get a seeded
    uniform init in [-scale, scale].

    Raises:
        EmbeddingFormatError: Malformed file (with line number) or dimension mismatch
    """
    path = Path(path)
    tokens = vocab.itos if isinstance(vocab, Vocab) else list(vocab)
    try:
        vectors = KeyedVectors.load_word2vec_format(str(path), binary=False, datatype=np.float64)
    except (ValueError, EOFError, UnicodeDecodeError, IndexError) as e:
        line, reason = _locate_format_error(path)
        raise EmbeddingFormatError(f"malformed word2vec file: {reason}", path=path, line=line) from e
    if vectors.vector_size != dim:
        raise EmbeddingFormatError(f"vector dimension {vectors.vector_size} != configured word_dim {dim}", path=path)

    table = torch.empty(len(tokens), dim, dtype=DTYPE)
    table.uniform_(-scale, scale, generator=make_generator(seed))
    covered = 0
    for row, token in enumerate(tokens):
        if token in vectors.key_to_index:
            table[row] = torch.from_numpy(np.asarray(vectors[token], dtype=np.float64).copy())
            covered += 1
    logger.info(f"Loaded word vectors from {path}: {covered}/{len(tokens)} vocabulary words covered")
    return table


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    dev_macro_f1: float
    seconds: float


@dataclass
class FitResult:
    """Outcome of :func:`fit`; ``params`` hold the best-dev-F1 weights."""

    params: ModelParams
    best_epoch: int
    best_dev_f1: float
    log: List[EpochLog] = field(default_factory=list)
    stopped_early: bool = False
    best_checkpoint: Optional[Path] = None
    log_path: Optional[Path] = None


def dev_report(prepared: Sequence[PreparedInstance], params: ModelParams, alpha: float) -> MetricsReport:
    predictions = predict_prepared(prepared, params, alpha)
    return prf1([p.index for p in predictions], [item.directed for item in prepared], params.schema.labels)


def write_log(path: Path, log: Sequence[EpochLog]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in log:
            writer.writerow([row.epoch, repr(row.mean_loss), repr(row.dev_macro_f1), f"{row.seconds:.3f}"])
    return path


def init_params(
    train: Sequence[PreparedInstance],
    relations: Sequence[str],
    model_config: ModelConfig,
    config: TrainConfig,
    embeddings: Optional[Union[str, Path]] = None,
) -> ModelParams:
    """Vocabularies from the training data, seeded init, optional pretrained word vectors."""
    schema = build_schema(
        [item.path for item in train], relations, model_config, config.strategy,
        entity_types=[t for item in train for t in item.entity_types],
    )
    params = ModelParams(schema)
    params.reset_parameters(
        derive_seed(config.seed, "init"), config.init_scale, config.embedding_init_scale,
    )
    if embeddings is not None:
        table = load_word_vectors(
            embeddings, schema.words, schema.word_dim,
            seed=derive_seed(config.seed, "embeddings"), scale=config.embedding_init_scale,
        )
        with torch.no_grad():
            params.word_table.copy_(table)
    logger.info(
        f"Model: |V_w|={len(schema.word_vocab)} |V_r|={len(schema.rel_vocab)} "
        f"K={len(schema.relations)} params={sum(p.numel() for p in params.parameters())}"
    )
    return params


def fit(
    train: Sequence[RelationInstance],
    dev: Sequence[RelationInstance],
    config: TrainConfig,
    model_config: Optional[ModelConfig] = None,
    relations: Sequence[str] = RELATION_TAGS,
    output: Optional[OutputManager] = None,
    embeddings: Optional[Union[str, Path]] = None,
    params: Optional[ModelParams] = None,
) -> FitResult:
    """
    Train with early stopping on dev macro-F1.

    After every epoch the dev split is decoded and scored. An epoch that beats
    the best score so far becomes the new best (``best.ckpt``); training stops
    once ``patience`` epochs in a row fail to improve.

    Args:
        train: Training instances
        dev: Validation instances
        config: Optimization settings
        model_config: Architecture (defaults to ModelConfig())
        relations: Relation inventory
        output: Where checkpoints and the CSV log go (None = keep in memory)
        embeddings: Optional word2vec text file for the word table
        params: Start from these parameters instead of a fresh init

    Raises:
        DataError: If either split is empty or has no usable instance
    """
    if not train or not dev:
        raise DataError(f"fit needs non-empty train and dev splits (got {len(train)} and {len(dev)})")
    model_config = model_config or ModelConfig(alpha=config.alpha)
    train_items = prepare_instances(train, _labels_for(relations, params), config.strategy)
    dev_items = prepare_instances(dev, _labels_for(relations, params), config.strategy)
    if not dev_items:
        raise DataError("dev split has no usable instance")
    if params is None:
        params = init_params(train_items, relations, model_config, config, embeddings)
    state = AdaDeltaState(params.named_tensors(), rho=config.rho, eps=config.eps)

    best_f1 = -math.inf
    best_epoch = 0
    best_state: Dict[str, Tensor] = {}
    stale = 0
    log: List[EpochLog] = []
    stopped_early = False
    best_path = output.get_output_path("best.ckpt") if output else None

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        result = train_epoch(train_items, params, state, config, epoch)
        dev_f1 = dev_report(dev_items, params, config.alpha).macro_f1
        log.append(EpochLog(epoch, result.mean_loss, dev_f1, time.perf_counter() - started))
        logger.info(f"Epoch {epoch}: loss {result.mean_loss:.6f} dev macro-F1 {dev_f1:.4f}")

        if output:
            save_checkpoint(output.get_output_path(f"epoch_{epoch}.ckpt"), params)
        if dev_f1 > best_f1:
            best_f1, best_epoch, stale = dev_f1, epoch, 0
            best_state = {n: p.detach().clone() for n, p in params.named_parameters()}
            if best_path:
                save_checkpoint(best_path, params)
        else:
            stale += 1
            if stale >= config.patience:
                stopped_early = epoch < config.epochs
                logger.info(f"No dev improvement for {stale} epoch(s); stopping after epoch {epoch}")
                break

    best = copy.deepcopy(params)
    with torch.no_grad():
        for name, p in best.named_parameters():
            p.copy_(best_state[name])

    log_path = write_log(output.get_output_path("train_log.csv", subdir="run"), log) if output else None
    logger.info(f"Best dev macro-F1 {best_f1:.4f} at epoch {best_epoch}")
    return FitResult(
        params=best,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
        log=log,
        stopped_early=stopped_early,
        best_checkpoint=best_path,
        log_path=log_path,
    )


def _labels_for(relations: Sequence[str], params: Optional[ModelParams]) -> LabelSchema:
    return params.schema.labels if params is not None else LabelSchema(relations)
