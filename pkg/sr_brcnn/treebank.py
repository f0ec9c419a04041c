"""
Module: sr_brcnn.treebank
Purpose: Dependency-parsed sentences and relation instances
Dependencies: conllu, networkx, pydantic

Sentences arrive as CoNLL-U; relation instances arrive as a JSON-lines
sidecar keyed by sentence id. Everything here is an immutable value, so the
functions are safe to call from any number of threads.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, Union
import json
import logging

import conllu
import networkx as nx
from pydantic import BaseModel, Field, ValidationError, model_validator

from sr_brcnn.config import RELATION_TAGS
from sr_brcnn.errors import ConlluParseError, DataError, InstanceError

logger = logging.getLogger(__name__)

OTHER = "Other"
FORWARD = "12"
BACKWARD = "21"

CONLLU_FIELDS = ("id", "form", "lemma", "upos", "xpos", "feats", "head", "deprel", "deps", "misc")

Span = Tuple[int, int]


@dataclass(frozen=True)
class Token:
    """One CoNLL-U word line. ``head`` is 0 for the root."""

    index: int
    form: str
    upos: str
    head: int
    deprel: str
    lemma: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"


@dataclass(frozen=True)
class DependencyTree:
    """
    A dependency-parsed sentence.

    Tokens are stored in order, so ``tokens[i - 1].index == i`` for a
    well-formed tree. ``metadata`` keeps the comment lines in order so the
    tree serializes back to the text it was read from. Equality looks at the
    tokens and the two ids only.

    Attributes:
        tokens: Ordered tokens
        sent_id: Sentence identifier (``# sent_id``, or the 1-based block number)
        article_id: Document the sentence belongs to (``# newdoc id``), if known
        metadata: Comment key/value pairs in file order
        line: First line of the sentence block in its source file, if read from text
    """

    tokens: Tuple[Token, ...]
    sent_id: Optional[str] = None
    article_id: Optional[str] = None
    metadata: Tuple[Tuple[str, Optional[str]], ...] = field(default=(), compare=False)
    line: Optional[int] = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        """Token at 1-based ``index``."""
        if not 1 <= index <= len(self.tokens):
            raise DataError(f"token index {index} outside sentence of length {len(self.tokens)}")
        return self.tokens[index - 1]

    @property
    def root(self) -> Optional[int]:
        """Index of the first token attached to 0."""
        for tok in self.tokens:
            if tok.head == 0:
                return tok.index
        return None

    @cached_property
    def graph(self) -> nx.DiGraph:
        """Head -> dependent digraph over token indices (root link to 0 omitted)."""
        g = nx.DiGraph()
        g.add_nodes_from(tok.index for tok in self.tokens)
        g.add_edges_from(
            (tok.head, tok.index)
            for tok in self.tokens
            if 1 <= tok.head <= len(self.tokens)
        )
        return g

    def children(self, index: int) -> List[int]:
        """Dependents of ``index`` in token order."""
        return sorted(self.graph.successors(index))

    def with_heads(self, updates: Mapping[int, Tuple[int, str]]) -> "DependencyTree":
        """Copy of the tree with ``index -> (head, deprel)`` rewritten."""
        tokens = tuple(
            replace(tok, head=updates[tok.index][0], deprel=updates[tok.index][1])
            if tok.index in updates else tok
            for tok in self.tokens
        )
        return replace(self, tokens=tokens)


@dataclass(frozen=True)
class TreeViolation:
    """First invariant a tree breaks, and the token that breaks it."""

    kind: str
    index: Optional[int]
    message: str

    def __str__(self) -> str:
        where = f" at token {self.index}" if self.index is not None else ""
        return f"{self.kind}{where}: {self.message}"


@dataclass(frozen=True)
class RelationInstance:
    """
    A labelled entity pair inside one sentence.

    Spans are inclusive 1-based token ranges. ``direction`` is ``"12"`` when
    the relation holds from e1 to e2, ``"21"`` for the inverse, and None for
    ``Other``.
    """

    sentence: DependencyTree
    e1_span: Span
    e2_span: Span
    e1_type: str
    e2_type: str
    label: str
    direction: Optional[str]
    sent_id: str
    article_id: str

    @property
    def e1_head(self) -> int:
        return resolve_entity_head(self.sentence, self.e1_span)

    @property
    def e2_head(self) -> int:
        return resolve_entity_head(self.sentence, self.e2_span)


# ---------------------------------------------------------------------------
# JSONL sidecar records
# ---------------------------------------------------------------------------

class EntityRecord(BaseModel):
    """Entity mention as written in the instance sidecar."""

    start: int = Field(..., description="First token of the mention (1-based)")
    end: int = Field(..., description="Last token of the mention (1-based, inclusive)")
    type: str = Field("", description="Opaque entity type")


class InstanceRecord(BaseModel):
    """One line of the instance JSONL file."""

    sent_id: str
    e1: EntityRecord
    e2: EntityRecord
    label: str
    direction: Optional[Literal["12", "21"]] = None
    article_id: Optional[str] = None

    @model_validator(mode="after")
    def _direction_matches_label(self) -> "InstanceRecord":
        if self.label == OTHER and self.direction is not None:
            raise ValueError('label "Other" requires direction null')
        if self.label != OTHER and self.direction is None:
            raise ValueError(f'label "{self.label}" requires direction "12" or "21"')
        return self


# ---------------------------------------------------------------------------
# CoNLL-U
# ---------------------------------------------------------------------------

def _raw_field(line: List[str], i: int) -> str:
    return line[i]


def _head_field(line: List[str], i: int) -> Optional[int]:
    value = line[i]
    return int(value) if value.isdigit() else None


_FIELD_PARSERS = {name: _raw_field for name in CONLLU_FIELDS if name not in ("id", "head")}
_FIELD_PARSERS["head"] = _head_field


def _is_word_id(value: str) -> bool:
    return value.isdigit()


def _is_skipped_id(value: str) -> bool:
    """Multi-word ranges (3-4) and empty nodes (5.1)."""
    for sep in ("-", "."):
        left, found, right = value.partition(sep)
        if found and left.isdigit() and right.isdigit():
            return True
    return False


def _check_block(lines: Sequence[Tuple[int, str]], source: Optional[str]) -> None:
    """Column-level checks that need line numbers."""
    for line_no, line in lines:
        if line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != len(CONLLU_FIELDS):
            raise ConlluParseError(
                f"expected {len(CONLLU_FIELDS)} tab-separated columns, found {len(columns)}",
                path=source, line=line_no,
            )
        token_id, head = columns[0], columns[6]
        if _is_skipped_id(token_id):
            continue
        if not _is_word_id(token_id):
            raise ConlluParseError(f"invalid ID {token_id!r}", path=source, line=line_no)
        if not head.isdigit():
            raise ConlluParseError(f"non-integer HEAD {head!r}", path=source, line=line_no)


def _blocks(text: str) -> Iterable[List[Tuple[int, str]]]:
    block: List[Tuple[int, str]] = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if line.strip():
            block.append((line_no, line.rstrip("\n")))
        elif block:
            yield block
            block = []
    if block:
        yield block


def parse_conllu(text: str, source: Optional[Union[str, Path]] = None) -> List[DependencyTree]:
    """
    Parse CoNLL-U text into dependency trees.

    Multi-word token ranges and empty nodes are skipped. Sentences without a
    ``# sent_id`` comment get their 1-based block number as id; the most
    recent ``# newdoc id`` names the article.

    Args:
        text: CoNLL-U formatted text
        source: File name used in error messages

    Returns:
        One DependencyTree per sentence block

    Raises:
        ConlluParseError: Wrong column count or non-integer HEAD, with line number
    """
    source_name = str(source) if source is not None else None
    trees: List[DependencyTree] = []
    article: Optional[str] = None

    for block_no, block in enumerate(_blocks(text), 1):
        _check_block(block, source_name)
        try:
            parsed = conllu.parse(
                "\n".join(line for _, line in block) + "\n",
                fields=CONLLU_FIELDS,
                field_parsers=_FIELD_PARSERS,
            )
        except conllu.exceptions.ParseException as e:
            raise ConlluParseError(str(e), path=source_name, line=block[0][0]) from e
        if not parsed:
            continue
        sentence = parsed[0]

        metadata = tuple((str(k), v) for k, v in sentence.metadata.items())
        meta = dict(metadata)
        if "newdoc id" in meta:
            article = meta["newdoc id"]

        tokens = tuple(
            Token(
                index=tok["id"],
                form=tok["form"],
                upos=tok["upos"],
                head=tok["head"],
                deprel=tok["deprel"],
                lemma=tok["lemma"],
                xpos=tok["xpos"],
                feats=tok["feats"],
                deps=tok["deps"],
                misc=tok["misc"],
            )
            for tok in sentence
            if isinstance(tok["id"], int)
        )
        trees.append(DependencyTree(
            tokens=tokens,
            sent_id=meta.get("sent_id") or str(block_no),
            article_id=article,
            metadata=metadata,
            line=block[0][0],
        ))

    logger.debug(f"Parsed {len(trees)} sentences from {source_name or '<text>'}")
    return trees


def _comment_lines(tree: DependencyTree, article: Optional[str]) -> Dict[str, Optional[str]]:
    """Comment lines to write; the ``sent_id`` and ``article_id`` fields win over stale metadata."""
    metadata = dict(tree.metadata)
    out: Dict[str, Optional[str]] = {}
    if tree.article_id is not None and (tree.article_id != article or "newdoc id" in metadata):
        out["newdoc id"] = tree.article_id
    out.update((k, v) for k, v in metadata.items() if k != "newdoc id")
    if tree.sent_id is not None:
        out["sent_id"] = tree.sent_id
    return out


def serialize_conllu(trees: Iterable[DependencyTree]) -> str:
    """
    Inverse of :func:`parse_conllu` for trees without skipped nodes.

    ``sent_id`` and ``article_id`` survive the round trip even when the
    tree has no comment lines for them. A tree without an article that
    follows one with an article cannot be expressed and inherits it.
    """
    chunks = []
    article: Optional[str] = None
    for tree in trees:
        metadata = _comment_lines(tree, article)
        article = metadata.get("newdoc id", article)
        tokens = [
            conllu.models.Token({
                "id": tok.index,
                "form": tok.form,
                "lemma": tok.lemma,
                "upos": tok.upos,
                "xpos": tok.xpos,
                "feats": tok.feats,
                "head": tok.head,
                "deprel": tok.deprel,
                "deps": tok.deps,
                "misc": tok.misc,
            })
            for tok in tree.tokens
        ]
        chunks.append(conllu.models.TokenList(tokens, metadata=metadata).serialize())
    return "".join(chunks)


def read_conllu(path: Union[str, Path]) -> List[DependencyTree]:
    """Read a UTF-8 CoNLL-U file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read CoNLL-U file: {e}", path=path) from e
    return parse_conllu(text, source=path)


# ---------------------------------------------------------------------------
# Tree checks
# ---------------------------------------------------------------------------

def validate_tree(t: DependencyTree) -> Optional[TreeViolation]:
    """
    Check the tree invariants.

    Returns:
        None when the tree is valid, otherwise the first violation found
    """
    n = len(t.tokens)
    if n == 0:
        return TreeViolation("empty", None, "sentence has no tokens")

    for position, tok in enumerate(t.tokens, 1):
        if tok.index != position:
            return TreeViolation("index", tok.index, f"expected index {position}")
        if not tok.deprel or tok.deprel == "_":
            return TreeViolation("deprel", tok.index, "missing dependency relation")
        if not 0 <= tok.head <= n:
            return TreeViolation("head out of range", tok.index, f"head {tok.head} not in [0, {n}]")
        if tok.head == tok.index:
            return TreeViolation("self-loop", tok.index, "token is its own head")

    roots = [tok.index for tok in t.tokens if tok.head == 0]
    if not roots:
        return TreeViolation("no root", None, "no token has head 0")
    if len(roots) > 1:
        return TreeViolation("multiple roots", roots[1], f"tokens {roots} all have head 0")

    # With one root and no cycles every token reaches it, so the graph is connected.
    for tok in t.tokens:
        seen = {tok.index}
        current = tok.head
        while current != 0:
            if current in seen:
                return TreeViolation("cycle", min(seen), f"head chain from token {tok.index} loops")
            seen.add(current)
            current = t.tokens[current - 1].head
    return None


def resolve_entity_head(t: DependencyTree, span: Span) -> int:
    """
    Pick the token that represents an entity span.

    The head is the token inside the span whose own head lies outside it;
    when several qualify the leftmost wins.

    Args:
        t: Sentence tree
        span: Inclusive (start, end) token range

    Returns:
        Token index inside the span

    Raises:
        DataError: If the span is empty or outside the sentence
    """
    start, end = span
    if start > end:
        raise DataError(f"empty entity span {span}")
    if start < 1 or end > len(t.tokens):
        raise DataError(f"entity span {span} outside sentence of length {len(t.tokens)}")
    for index in range(start, end + 1):
        head = t.tokens[index - 1].head
        if not start <= head <= end:
            return index
    return start


# ---------------------------------------------------------------------------
# Relation instances
# ---------------------------------------------------------------------------

def index_trees(trees: Iterable[DependencyTree]) -> Dict[str, DependencyTree]:
    """Map sentence id to tree; duplicate ids are a data error."""
    by_id: Dict[str, DependencyTree] = {}
    for tree in trees:
        if tree.sent_id in by_id:
            raise DataError(f"duplicate sent_id {tree.sent_id!r}")
        by_id[tree.sent_id] = tree
    return by_id


def build_instance(
    record: InstanceRecord,
    tree: DependencyTree,
    relations: Sequence[str] = RELATION_TAGS,
) -> RelationInstance:
    """
    Check a sidecar record against its sentence and label set.

    Raises:
        InstanceError: Empty, out-of-range or overlapping spans; unknown label
    """
    n = len(tree)
    spans = []
    for name, ent in (("e1", record.e1), ("e2", record.e2)):
        if ent.start > ent.end:
            raise InstanceError(f"{name} span [{ent.start}, {ent.end}] is empty")
        if ent.start < 1 or ent.end > n:
            raise InstanceError(f"{name} span [{ent.start}, {ent.end}] outside sentence of length {n}")
        spans.append((ent.start, ent.end))
    (s1, t1), (s2, t2) = spans
    if s1 <= t2 and s2 <= t1:
        raise InstanceError(f"entity spans {spans[0]} and {spans[1]} overlap")
    if record.label != OTHER and record.label not in relations:
        raise InstanceError(f"unknown relation label {record.label!r}")

    return RelationInstance(
        sentence=tree,
        e1_span=spans[0],
        e2_span=spans[1],
        e1_type=record.e1.type,
        e2_type=record.e2.type,
        label=record.label,
        direction=record.direction,
        sent_id=record.sent_id,
        article_id=record.article_id or tree.article_id or record.sent_id,
    )


def parse_instances(
    text: str,
    trees: Mapping[str, DependencyTree],
    relations: Sequence[str] = RELATION_TAGS,
    source: Optional[Union[str, Path]] = None,
) -> List[RelationInstance]:
    """
    Parse the instance JSONL sidecar.

    Args:
        text: One JSON object per line
        trees: Sentences by sent_id
        relations: Allowed relation labels besides ``Other``
        source: File name used in error messages

    Returns:
        Instances in file order

    Raises:
        InstanceError: Invalid record, unknown sentence or label, bad span (with line number)
    """
    instances = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = InstanceRecord.model_validate_json(line)
        except ValidationError as e:
            detail = "; ".join(err["msg"] for err in e.errors())
            raise InstanceError(f"invalid instance record: {detail}", path=source, line=line_no) from e
        tree = trees.get(record.sent_id)
        if tree is None:
            raise InstanceError(f"unknown sent_id {record.sent_id!r}", path=source, line=line_no)
        try:
            instances.append(build_instance(record, tree, relations))
        except InstanceError as e:
            raise InstanceError(e.message, path=source, line=line_no) from e
    return instances


def instance_record(instance: RelationInstance) -> InstanceRecord:
    """Sidecar record for an instance (inverse of :func:`build_instance`)."""
    return InstanceRecord(
        sent_id=instance.sent_id,
        e1=EntityRecord(start=instance.e1_span[0], end=instance.e1_span[1], type=instance.e1_type),
        e2=EntityRecord(start=instance.e2_span[0], end=instance.e2_span[1], type=instance.e2_type),
        label=instance.label,
        direction=instance.direction,
        article_id=instance.article_id,
    )


def dump_instances(instances: Iterable[RelationInstance]) -> str:
    """Serialize instances as JSONL (sorted keys, one record per line)."""
    lines = [
        json.dumps(instance_record(inst).model_dump(), sort_keys=True, ensure_ascii=False)
        for inst in instances
    ]
    return "".join(line + "\n" for line in lines)
