"""
Module: sr_brcnn.models.brcnn
Purpose: Structure-regularized bidirectional recurrent convolutional classifier
Dependencies: torch, numpy

Two RCNNs read the (SR-)SDP between the entities, one along the path and one
along its reverse. Each RCNN runs a word-channel and a relation-channel
BiLSTM, convolves every dependency unit (word, relation, word), max-pools
the units and feeds a (2K+1)-way fine classifier. A (K+1)-way coarse
classifier reads both pooled vectors and only contributes training signal.
Optional POS and entity-type embeddings widen the word-channel input.

Directed class layout: 0 = Other, 2i+1 = relation i from e1 to e2,
2i+2 = relation i from e2 to e1. Coarse layout: 0 = Other, i+1 = relation i.
"""

from dataclasses import dataclass, asdict
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
import torch
from torch import nn, Tensor

from sr_brcnn.config import Config, RELATION_TAGS
from sr_brcnn.errors import DataError, DegeneratePairError, SchemaError, ShapeError
from sr_brcnn.models.neuralcore import (
    DTYPE,
    BiLSTMParams,
    Tape,
    affine,
    bilstm,
    concat,
    conv_unit,
    dropout,
    l2_penalty,
    make_generator,
    max_pool,
    softmax_xent,
)
from sr_brcnn.structreg import SRCUT, CutKind, CutStrategy, SdpPath, extract_sdp, reverse_path, sr_sdp
from sr_brcnn.treebank import BACKWARD, FORWARD, OTHER, RelationInstance

logger = logging.getLogger(__name__)

UNK = "<UNK>"
WORD_RESERVED = (UNK,)
REL_RESERVED = (UNK, SRCUT)
POS_RESERVED = (UNK,)
NON_ENTITY = "<O>"
NER_RESERVED = (UNK, NON_ENTITY)

EntityTypes = Tuple[str, str]


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectedLabel:
    label: str
    direction: Optional[str] = None

    def __str__(self) -> str:
        if self.label == OTHER:
            return OTHER
        return f"{self.label}(e1,e2)" if self.direction == FORWARD else f"{self.label}(e2,e1)"


def _swap_permutation(size: int) -> torch.Tensor:
    perm = list(range(size))
    for k in range(1, size, 2):
        perm[k], perm[k + 1] = perm[k + 1], perm[k]
    return torch.tensor(perm, dtype=torch.long)


def z_map(dist: Tensor, num_relations: Optional[int] = None) -> Tensor:
    """
    Swap the two directions of every relation in a directed-class vector.

    Index 0 (Other) is fixed; 2i+1 and 2i+2 trade places. Applying it twice
    is the identity.

    Raises:
        ShapeError: If the vector is not 1-D of odd length (2K+1 for the given K)
    """
    size = dist.shape[0] if dist.dim() == 1 else -1
    expected = 2 * num_relations + 1 if num_relations is not None else None
    if dist.dim() != 1 or size % 2 != 1 or (expected is not None and size != expected):
        raise ShapeError("z_map", tuple(dist.shape), detail=f"expected length {expected or '2K+1'}")
    return dist[_swap_permutation(size)]


class LabelSchema:
    """
    Relation inventory and the directed/coarse class arithmetic.

    Example:
        >>> labels = LabelSchema(["Located", "Near"])
        >>> labels.directed_index("Near", "21")
        4
        >>> labels.swap(4)
        3
    """

    def __init__(self, relations: Sequence[str] = RELATION_TAGS):
        relations = tuple(relations)
        if not relations:
            raise SchemaError("label schema needs at least one relation")
        if len(set(relations)) != len(relations):
            raise SchemaError(f"duplicate relations in {relations}")
        if OTHER in relations:
            raise SchemaError(f'"{OTHER}" is reserved and cannot be a relation')
        self.relations = relations
        self._position = {r: i for i, r in enumerate(relations)}

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSchema) and other.relations == self.relations

    def __repr__(self) -> str:
        return f"LabelSchema({list(self.relations)})"

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_directed(self) -> int:
        return 2 * len(self.relations) + 1

    @property
    def num_coarse(self) -> int:
        return len(self.relations) + 1

    def _relation_position(self, label: str) -> int:
        try:
            return self._position[label]
        except KeyError:
            raise SchemaError(f"label {label!r} is not in the schema {list(self.relations)}") from None

    def directed_index(self, label: str, direction: Optional[str]) -> int:
        if label == OTHER:
            return 0
        i = self._relation_position(label)
        if direction == FORWARD:
            return 2 * i + 1
        if direction == BACKWARD:
            return 2 * i + 2
        raise SchemaError(f"relation {label!r} needs direction {FORWARD!r} or {BACKWARD!r}, got {direction!r}")

    def coarse_index(self, label: str) -> int:
        return 0 if label == OTHER else self._relation_position(label) + 1

    def coarse_of(self, directed: int) -> int:
        return 0 if directed == 0 else (directed - 1) // 2 + 1

    def swap(self, directed: int) -> int:
        if directed == 0:
            return 0
        return directed + 1 if directed % 2 == 1 else directed - 1

    def label_of(self, directed: int) -> DirectedLabel:
        if not 0 <= directed < self.num_directed:
            raise SchemaError(f"class index {directed} outside [0, {self.num_directed})")
        if directed == 0:
            return DirectedLabel(OTHER, None)
        relation = self.relations[(directed - 1) // 2]
        return DirectedLabel(relation, FORWARD if directed % 2 == 1 else BACKWARD)

    def class_names(self) -> List[str]:
        return [str(self.label_of(k)) for k in range(self.num_directed)]

    def z_map(self, dist: Tensor) -> Tensor:
        return z_map(dist, self.num_relations)


# ---------------------------------------------------------------------------
# Vocabularies and schema
# ---------------------------------------------------------------------------

class Vocab:
    """Token <-> row mapping; row 0 is always the unknown token."""

    def __init__(self, tokens: Sequence[str]):
        if not tokens or tokens[0] != UNK:
            raise SchemaError(f"vocabulary must start with {UNK}")
        self.itos: List[str] = list(tokens)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise SchemaError("vocabulary contains duplicates")

    @classmethod
    def build(cls, tokens: Iterable[str], reserved: Sequence[str]) -> "Vocab":
        seen = set(reserved)
        extra = sorted({t for t in tokens if t not in seen})
        return cls(list(reserved) + extra)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, 0)


@dataclass
class ModelConfig:
    """Architecture settings; hidden sizes default to the embedding sizes."""

    word_dim: int = 200
    rel_dim: int = 50
    pos_dim: int = 0
    ner_dim: int = 0
    word_hidden: Optional[int] = None
    rel_hidden: Optional[int] = None
    conv_dim: int = 200
    alpha: float = 0.5
    lowercase: bool = True

    def __post_init__(self):
        if self.word_hidden is None:
            self.word_hidden = self.word_dim
        if self.rel_hidden is None:
            self.rel_hidden = self.rel_dim
        for name in ("word_dim", "rel_dim", "word_hidden", "rel_hidden", "conv_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("pos_dim", "ner_dim"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")

    @classmethod
    def from_config(cls, config: Config, **overrides: Any) -> "ModelConfig":
        section = config.section("model")
        values = {k: section[k] for k in cls.__dataclass_fields__ if k in section}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class ModelSchema:
    """Everything needed to rebuild a model around its parameter tensors."""

    relations: Tuple[str, ...]
    word_vocab: Tuple[str, ...]
    rel_vocab: Tuple[str, ...]
    pos_vocab: Tuple[str, ...]
    word_dim: int
    rel_dim: int
    pos_dim: int
    word_hidden: int
    rel_hidden: int
    conv_dim: int
    alpha: float = 0.5
    lowercase: bool = True
    strategy: Optional[Tuple[str, float, int]] = None
    ner_dim: int = 0
    ner_vocab: Tuple[str, ...] = NER_RESERVED

    @cached_property
    def labels(self) -> LabelSchema:
        return LabelSchema(self.relations)

    @cached_property
    def words(self) -> Vocab:
        return Vocab(self.word_vocab)

    @cached_property
    def rels(self) -> Vocab:
        return Vocab(self.rel_vocab)

    @cached_property
    def pos(self) -> Vocab:
        return Vocab(self.pos_vocab)

    @cached_property
    def ner(self) -> Vocab:
        return Vocab(self.ner_vocab)

    @property
    def cut_strategy(self) -> Optional[CutStrategy]:
        if self.strategy is None:
            return None
        kind, ratio, seed = self.strategy
        return CutStrategy(CutKind(kind), cut_ratio=ratio, seed=seed)

    def word_key(self, form: str) -> str:
        return form.lower() if self.lowercase else form

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "ModelSchema":
        try:
            payload = json.loads(text)
            for key in ("relations", "word_vocab", "rel_vocab", "pos_vocab"):
                payload[key] = tuple(payload[key])
            if "ner_vocab" in payload:
                payload["ner_vocab"] = tuple(payload["ner_vocab"])
            if payload.get("strategy") is not None:
                payload["strategy"] = tuple(payload["strategy"])
            return cls(**payload)
        except (ValueError, KeyError, TypeError) as e:
            raise SchemaError(f"invalid model schema: {e}") from e


def build_schema(
    paths: Iterable[SdpPath],
    relations: Sequence[str],
    model_config: ModelConfig,
    strategy: Optional[CutStrategy] = None,
    entity_types: Iterable[str] = (),
) -> ModelSchema:
    """
    Collect word, relation, POS and entity-type vocabularies from training data.

    Both reading directions contribute relation tokens, since the reverse
    RCNN sees every traversal flipped. Empty entity types are left out and
    read as unknown.
    """
    words, rels, tags = set(), set(), set()
    for path in paths:
        for tok in path.words:
            words.add(tok.form.lower() if model_config.lowercase else tok.form)
            tags.add(tok.upos)
        for edge in path.edges + reverse_path(path).edges:
            rels.add(edge.token)
    strategy_tuple = None
    if strategy is not None:
        strategy_tuple = (strategy.kind.value, float(strategy.cut_ratio), int(strategy.seed))
    return ModelSchema(
        relations=tuple(relations),
        word_vocab=tuple(Vocab.build(words, WORD_RESERVED).itos),
        rel_vocab=tuple(Vocab.build(rels, REL_RESERVED).itos),
        pos_vocab=tuple(Vocab.build(tags, POS_RESERVED).itos),
        word_dim=model_config.word_dim,
        rel_dim=model_config.rel_dim,
        pos_dim=model_config.pos_dim,
        word_hidden=model_config.word_hidden,
        rel_hidden=model_config.rel_hidden,
        conv_dim=model_config.conv_dim,
        alpha=model_config.alpha,
        lowercase=model_config.lowercase,
        strategy=strategy_tuple,
        ner_dim=model_config.ner_dim,
        ner_vocab=tuple(Vocab.build((t for t in entity_types if t), NER_RESERVED).itos),
    )


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class RCNNParams(nn.Module):
    """One reading direction: two BiLSTM channels, unit convolution, fine classifier."""

    def __init__(self, word_in: int, word_hidden: int, rel_in: int, rel_hidden: int, conv_dim: int, num_classes: int):
        super().__init__()
        self.word_lstm = BiLSTMParams(word_in, word_hidden)
        self.rel_lstm = BiLSTMParams(rel_in, rel_hidden)
        unit_dim = 4 * word_hidden + 2 * rel_hidden
        self.conv_weight = nn.Parameter(torch.zeros(conv_dim, unit_dim, dtype=DTYPE))
        self.conv_bias = nn.Parameter(torch.zeros(conv_dim, dtype=DTYPE))
        self.fine_weight = nn.Parameter(torch.zeros(num_classes, conv_dim, dtype=DTYPE))
        self.fine_bias = nn.Parameter(torch.zeros(num_classes, dtype=DTYPE))


class ModelParams(nn.Module):
    """
    All trainable tensors of SR-BRCNN.

    Embedding tables are shared by both reading directions; each direction
    has its own RCNN. Tensors whose name ends in ``weight`` carry the L2
    penalty; biases and embedding tables do not.

    Example:
        >>> params = ModelParams(schema)
        >>> params.reset_parameters(seed=13)
        >>> sorted(params.named_tensors())[:2]
    """

    def __init__(self, schema: ModelSchema):
        super().__init__()
        self.schema = schema
        labels = schema.labels
        self.word_table = nn.Parameter(torch.zeros(len(schema.word_vocab), schema.word_dim, dtype=DTYPE))
        self.rel_table = nn.Parameter(torch.zeros(len(schema.rel_vocab), schema.rel_dim, dtype=DTYPE))
        if schema.pos_dim > 0:
            self.pos_table = nn.Parameter(torch.zeros(len(schema.pos_vocab), schema.pos_dim, dtype=DTYPE))
        else:
            self.register_parameter("pos_table", None)
        if schema.ner_dim > 0:
            self.ner_table = nn.Parameter(torch.zeros(len(schema.ner_vocab), schema.ner_dim, dtype=DTYPE))
        else:
            self.register_parameter("ner_table", None)

        word_in = schema.word_dim + schema.pos_dim + schema.ner_dim
        self.forward_rcnn = RCNNParams(
            word_in, schema.word_hidden, schema.rel_dim, schema.rel_hidden, schema.conv_dim, labels.num_directed
        )
        self.backward_rcnn = RCNNParams(
            word_in, schema.word_hidden, schema.rel_dim, schema.rel_hidden, schema.conv_dim, labels.num_directed
        )
        self.coarse_weight = nn.Parameter(torch.zeros(labels.num_coarse, 2 * schema.conv_dim, dtype=DTYPE))
        self.coarse_bias = nn.Parameter(torch.zeros(labels.num_coarse, dtype=DTYPE))

    def reset_parameters(self, seed: int, init_scale: float = 0.08, embedding_scale: float = 0.05) -> None:
        """Uniform weights in [-init_scale, init_scale], zero biases, uniform embeddings."""
        generator = make_generator(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                elif name.endswith("_table"):
                    p.uniform_(-embedding_scale, embedding_scale, generator=generator)
                else:
                    p.uniform_(-init_scale, init_scale, generator=generator)

    def zero_(self) -> "ModelParams":
        with torch.no_grad():
            for p in self.parameters():
                p.zero_()
        return self

    def named_tensors(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def penalized(self) -> List[Tensor]:
        return [p for name, p in self.named_parameters() if name.endswith("weight")]


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

@dataclass
class BRCNNOutput:
    fwd_fine: Tensor
    bwd_fine: Tensor
    coarse: Tensor
    tape: Tape
    path: SdpPath


@dataclass(frozen=True)
class LossTerms:
    forward: Tensor
    backward: Tensor
    coarse: Tensor
    penalty: Tensor

    @property
    def total(self) -> Tensor:
        return self.forward + self.backward + self.coarse + self.penalty


@dataclass
class Prediction:
    """Mixed directed distribution, coarse distribution and the decoded label."""

    directed: Tensor
    coarse: Tensor
    index: int
    decoded: DirectedLabel


def embed_path(
    p: SdpPath,
    params: ModelParams,
    tape: Optional[Tape] = None,
    entity_types: Optional[EntityTypes] = None,
) -> Tuple[List[Tensor], List[Tensor]]:
    """
    Look up word and relation embeddings along a path.

    Unknown words map to the UNK row; relation tokens are ``deprel/up`` or
    ``deprel/down`` except reattachment edges, which all use the SRCUT row.
    With an entity-type table the first and last word carry the types of the
    entities they head (in path order) and every other word the non-entity row.

    Raises:
        DataError: If the path has fewer than two words
    """
    if len(p) < 2:
        raise DataError(f"path of {len(p)} word(s) has no dependency unit")
    schema = params.schema
    word_rows = [schema.words.index(schema.word_key(tok.form)) for tok in p.words]
    rel_rows = [schema.rels.index(edge.token) for edge in p.edges]
    word_vecs = [params.word_table[r] for r in word_rows]
    if params.pos_table is not None:
        pos_rows = [schema.pos.index(tok.upos) for tok in p.words]
        word_vecs = [concat([w, params.pos_table[r]], tape) for w, r in zip(word_vecs, pos_rows)]
    if params.ner_table is not None:
        first, last = entity_types or ("", "")
        tags = [first] + [NON_ENTITY] * (len(p) - 2) + [last]
        ner_rows = [schema.ner.index(t) for t in tags]
        word_vecs = [concat([w, params.ner_table[r]], tape) for w, r in zip(word_vecs, ner_rows)]
    rel_vecs = [params.rel_table[r] for r in rel_rows]
    return word_vecs, rel_vecs


def rcnn_forward(
    word_vecs: Sequence[Tensor],
    rel_vecs: Sequence[Tensor],
    params: RCNNParams,
    tape: Optional[Tape] = None,
) -> Tuple[Tensor, Tensor]:
    """
    One RCNN over a path.

    Returns:
        (G, fine_logits): pooled dependency-unit representation and 2K+1 logits

    Raises:
        ShapeError: Unless len(rel_vecs) == len(word_vecs) - 1 >= 1
    """
    if len(word_vecs) < 2 or len(rel_vecs) != len(word_vecs) - 1:
        raise ShapeError("rcnn_forward", (len(word_vecs),), (len(rel_vecs),),
                         detail="need n >= 2 words and n - 1 relations")
    words = [concat([hf, hb], tape) for hf, hb in bilstm(word_vecs, params.word_lstm, tape)]
    rels = [concat([hf, hb], tape) for hf, hb in bilstm(rel_vecs, params.rel_lstm, tape)]
    units = [
        conv_unit(words[k], rels[k], words[k + 1], params.conv_weight, params.conv_bias, tape)
        for k in range(len(rels))
    ]
    G = max_pool(units, tape)
    return G, affine(G, params.fine_weight, params.fine_bias, tape)


def forward_path(
    path: SdpPath,
    params: ModelParams,
    training: bool = False,
    keep_prob: float = 1.0,
    seed: Union[int, torch.Generator, None] = None,
    tape: Optional[Tape] = None,
    entity_types: Optional[EntityTypes] = None,
) -> BRCNNOutput:
    """
    Both RCNNs and the coarse classifier on an already extracted path.

    ``entity_types`` are (e1 type, e2 type); the reverse reading sees them swapped.
    """
    tape = tape if tape is not None else Tape()
    generator = make_generator(seed if seed is not None else 0) if training else None

    def _inputs(p: SdpPath, types: Optional[EntityTypes]) -> Tuple[List[Tensor], List[Tensor]]:
        word_vecs, rel_vecs = embed_path(p, params, tape, types)
        if training:
            word_vecs = [dropout(v, keep_prob, generator, True, tape) for v in word_vecs]
            rel_vecs = [dropout(v, keep_prob, generator, True, tape) for v in rel_vecs]
        return word_vecs, rel_vecs

    swapped = (entity_types[1], entity_types[0]) if entity_types is not None else None
    G_fwd, fwd_fine = rcnn_forward(*_inputs(path, entity_types), params.forward_rcnn, tape)
    G_bwd, bwd_fine = rcnn_forward(*_inputs(reverse_path(path), swapped), params.backward_rcnn, tape)
    coarse = affine(concat([G_fwd, G_bwd], tape), params.coarse_weight, params.coarse_bias, tape)
    return BRCNNOutput(fwd_fine=fwd_fine, bwd_fine=bwd_fine, coarse=coarse, tape=tape, path=path)


def instance_path(instance: RelationInstance, strategy: Optional[CutStrategy]) -> SdpPath:
    """(SR-)SDP from the e1 head to the e2 head."""
    return sr_sdp(instance.sentence, strategy, instance.e1_head, instance.e2_head)


def brcnn_forward(
    instance: RelationInstance,
    strategy: Optional[CutStrategy],
    params: ModelParams,
    training: bool = False,
    keep_prob: float = 1.0,
    seed: Union[int, torch.Generator, None] = None,
) -> BRCNNOutput:
    """
    Full SR-BRCNN forward pass for one instance.

    ``strategy=None`` reads the plain SDP (baseline BRCNN). Dropout touches
    the embeddings only and only when ``training`` is set.
    """
    return forward_path(
        instance_path(instance, strategy), params, training, keep_prob, seed,
        entity_types=(instance.e1_type, instance.e2_type),
    )


def loss_terms(
    out: BRCNNOutput,
    directed_target: int,
    coarse_target: int,
    params: ModelParams,
    lam: float,
) -> LossTerms:
    """The three cross-entropies and the L2 penalty; the reverse reading targets the swapped class."""
    labels = params.schema.labels
    _, fwd = softmax_xent(out.fwd_fine, directed_target, out.tape)
    _, bwd = softmax_xent(out.bwd_fine, labels.swap(directed_target), out.tape)
    _, coarse = softmax_xent(out.coarse, coarse_target, out.tape)
    penalty = l2_penalty(params.penalized(), lam, out.tape)
    return LossTerms(forward=fwd, backward=bwd, coarse=coarse, penalty=penalty)


def loss(out: BRCNNOutput, gold: RelationInstance, params: ModelParams, lam: float) -> Tensor:
    """
    Penalized cross-entropy of the three classifiers.

    Raises:
        SchemaError: If the gold label is not in the model's label schema
    """
    labels = params.schema.labels
    directed = labels.directed_index(gold.label, gold.direction)
    return loss_terms(out, directed, labels.coarse_index(gold.label), params, lam).total


def mix_distributions(fwd_fine: Tensor, bwd_fine: Tensor, alpha: float) -> Tensor:
    """alpha * softmax(fwd) + (1 - alpha) * z(softmax(bwd))."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if fwd_fine.shape != bwd_fine.shape:
        raise ShapeError("decode", tuple(fwd_fine.shape), tuple(bwd_fine.shape))
    fwd = torch.softmax(fwd_fine.detach(), dim=0)
    bwd = torch.softmax(bwd_fine.detach(), dim=0)
    return alpha * fwd + (1.0 - alpha) * z_map(bwd)


def decode_index(fwd_fine: Tensor, bwd_fine: Tensor, alpha: float) -> int:
    """Directed class with the highest mixed probability; ties go to the lowest index."""
    return int(np.argmax(mix_distributions(fwd_fine, bwd_fine, alpha).numpy()))


def decode(fwd_fine: Tensor, bwd_fine: Tensor, alpha: float, labels: LabelSchema) -> DirectedLabel:
    return labels.label_of(decode_index(fwd_fine, bwd_fine, alpha))


def predict_path(
    path: SdpPath,
    params: ModelParams,
    alpha: Optional[float] = None,
    entity_types: Optional[EntityTypes] = None,
) -> Prediction:
    """Evaluation-mode prediction for one path."""
    alpha = params.schema.alpha if alpha is None else alpha
    with torch.no_grad():
        out = forward_path(path, params, training=False, entity_types=entity_types)
        mixed = mix_distributions(out.fwd_fine, out.bwd_fine, alpha)
        coarse = torch.softmax(out.coarse, dim=0)
    index = int(np.argmax(mixed.numpy()))
    return Prediction(directed=mixed, coarse=coarse, index=index, decoded=params.schema.labels.label_of(index))


# ---------------------------------------------------------------------------
# Instance preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedInstance:
    """An instance with its path and class targets resolved once."""

    instance: RelationInstance
    path: SdpPath
    plain_length: int
    directed: int
    coarse: int

    @property
    def entity_types(self) -> EntityTypes:
        return self.instance.e1_type, self.instance.e2_type


def prepare_instances(
    instances: Iterable[RelationInstance],
    labels: LabelSchema,
    strategy: Optional[CutStrategy],
) -> List[PreparedInstance]:
    """
    Resolve entity heads, extract (SR-)SDPs and class targets.

    Instances whose entities share a head token are skipped with a warning.

    Raises:
        SchemaError: If a label is outside the schema
    """
    prepared = []
    skipped = 0
    for inst in instances:
        try:
            e1, e2 = inst.e1_head, inst.e2_head
            plain = extract_sdp(inst.sentence, e1, e2)
            path = plain if strategy is None else sr_sdp(inst.sentence, strategy, e1, e2)
        except DegeneratePairError as e:
            skipped += 1
            logger.warning(f"Skipping instance in sentence {inst.sent_id}: {e}")
            continue
        prepared.append(PreparedInstance(
            instance=inst,
            path=path,
            plain_length=len(plain),
            directed=labels.directed_index(inst.label, inst.direction),
            coarse=labels.coarse_index(inst.label),
        ))
    if skipped:
        logger.info(f"Prepared {len(prepared)} instances, skipped {skipped}")
    return prepared


def predict_prepared(
    prepared: Sequence[PreparedInstance],
    params: ModelParams,
    alpha: Optional[float] = None,
) -> List[Prediction]:
    return [predict_path(item.path, params, alpha, item.entity_types) for item in prepared]
