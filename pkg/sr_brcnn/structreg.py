"""
Module: sr_brcnn.structreg
Purpose: Shortest dependency paths and tree structure regularization
Dependencies: networkx, numpy

Structure regularization cuts selected subtrees out of a dependency tree and
re-links the resulting forest by attaching every cut subtree root directly
to the sentence root. Paths extracted from the flattened tree (SR-SDPs) are
what the classifier reads.
"""

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import AbstractSet, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple
import logging
import math

import networkx as nx
import numpy as np

from sr_brcnn.errors import DataError, DegeneratePairError
from sr_brcnn.treebank import DependencyTree, Token

logger = logging.getLogger(__name__)

SRCUT = "SRCUT"
PUNCT = "PUNCT"
ADP = "ADP"
DEFAULT_CUT_RATIO = 0.15

_SEED_MASK = (1 << 64) - 1


class Traversal(str, Enum):
    """Direction of one path step: dependent to head (up) or head to dependent (down)."""

    UP = "up"
    DOWN = "down"

    def flipped(self) -> "Traversal":
        return Traversal.DOWN if self is Traversal.UP else Traversal.UP


class CutKind(str, Enum):
    PUNCTUATION = "punctuation"
    RANDOM = "random"
    PREPOSITION = "preposition"


@dataclass(frozen=True)
class PathEdge:
    deprel: str
    traversal: Traversal

    @property
    def token(self) -> str:
        """Relation-vocabulary key: reattachment edges share one entry."""
        if self.deprel == SRCUT:
            return SRCUT
        return f"{self.deprel}/{self.traversal.value}"


@dataclass(frozen=True)
class SdpPath:
    """
    Alternating word/relation sequence between two entity heads.

    ``edges[k]`` links ``words[k]`` and ``words[k + 1]``.
    """

    words: Tuple[Token, ...]
    edges: Tuple[PathEdge, ...]

    def __post_init__(self):
        if not self.words:
            raise DataError("a path needs at least one word")
        if len(self.edges) != len(self.words) - 1:
            raise DataError(f"{len(self.words)} words need {len(self.words) - 1} edges, got {len(self.edges)}")

    def __len__(self) -> int:
        return len(self.words)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(tok.index for tok in self.words)

    @property
    def forms(self) -> List[str]:
        return [tok.form for tok in self.words]

    @property
    def deprels(self) -> List[str]:
        return [edge.deprel for edge in self.edges]

    @property
    def traversals(self) -> List[str]:
        return [edge.traversal.value for edge in self.edges]


@dataclass(frozen=True)
class CutStrategy:
    """
    Which nodes structure regularization cuts.

    Attributes:
        kind: punctuation, random or preposition
        cut_ratio: Fraction of non-root tokens cut by the random strategy
        seed: Seed of the random strategy (any 64-bit integer)
    """

    kind: CutKind
    cut_ratio: float = DEFAULT_CUT_RATIO
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", CutKind(self.kind))
        if self.kind is CutKind.RANDOM and not 0.0 < self.cut_ratio < 1.0:
            raise ValueError(f"cut_ratio must be in (0, 1), got {self.cut_ratio}")

    @property
    def name(self) -> str:
        return self.kind.value

    @classmethod
    def parse(cls, name: Optional[str], cut_ratio: float = DEFAULT_CUT_RATIO, seed: int = 0) -> Optional["CutStrategy"]:
        """Strategy from its CLI name; ``none`` (or None) means plain SDPs."""
        if name is None or name.lower() == "none":
            return None
        try:
            kind = CutKind(name.lower())
        except ValueError:
            choices = ", ".join(["none"] + [k.value for k in CutKind])
            raise ValueError(f"unknown cut strategy {name!r} (choose from {choices})") from None
        return cls(kind=kind, cut_ratio=cut_ratio, seed=seed)


def strategy_name(strategy: Optional[CutStrategy]) -> str:
    return strategy.name if strategy is not None else "none"


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def _check_index(t: DependencyTree, index: int) -> None:
    if not isinstance(index, (int, np.integer)) or not 1 <= index <= len(t):
        raise DataError(f"token index {index} outside sentence of length {len(t)}")


def lca(t: DependencyTree, i: int, j: int) -> int:
    """Deepest common ancestor of ``i`` and ``j`` (a node is its own ancestor)."""
    _check_index(t, i)
    _check_index(t, j)
    if i == j:
        return i
    try:
        ancestor = nx.lowest_common_ancestor(t.graph, i, j)
    except nx.NetworkXException as e:
        raise DataError(f"no common ancestor for tokens {i} and {j}: {e}") from e
    if ancestor is None:
        raise DataError(f"tokens {i} and {j} share no ancestor; is the tree valid?")
    return ancestor


def _chain(t: DependencyTree, start: int, stop: int) -> List[int]:
    """Head chain from ``start`` up to and including ancestor ``stop``."""
    chain = [start]
    while chain[-1] != stop:
        chain.append(t.tokens[chain[-1] - 1].head)
    return chain


def extract_sdp(t: DependencyTree, e1: int, e2: int) -> SdpPath:
    """
    Shortest dependency path from ``e1`` to ``e2``.

    Steps on e1's side of the lowest common ancestor go up, steps on e2's
    side go down.

    Raises:
        DegeneratePairError: If ``e1 == e2``
        DataError: If either index is outside the sentence
    """
    _check_index(t, e1)
    _check_index(t, e2)
    if e1 == e2:
        raise DegeneratePairError(f"degenerate pair: both entities resolve to token {e1}")

    top = lca(t, e1, e2)
    up = _chain(t, e1, top)
    down = list(reversed(_chain(t, e2, top)))

    edges = [PathEdge(t.tokens[i - 1].deprel, Traversal.UP) for i in up[:-1]]
    edges += [PathEdge(t.tokens[i - 1].deprel, Traversal.DOWN) for i in down[1:]]
    words = tuple(t.tokens[i - 1] for i in up + down[1:])
    return SdpPath(words=words, edges=tuple(edges))


def reverse_path(p: SdpPath) -> SdpPath:
    """Path read from the other end; every traversal flips."""
    return SdpPath(
        words=tuple(reversed(p.words)),
        edges=tuple(PathEdge(e.deprel, e.traversal.flipped()) for e in reversed(p.edges)),
    )


# ---------------------------------------------------------------------------
# Structure regularization
# ---------------------------------------------------------------------------

def _punctuation_cuts(t: DependencyTree) -> List[int]:
    # A punctuation token closes the segment it sits in.
    segment: Dict[int, int] = {}
    current = 0
    for tok in t.tokens:
        segment[tok.index] = current
        if tok.upos == PUNCT:
            current += 1
    return [
        tok.index for tok in t.tokens
        if tok.head != 0 and segment[tok.head] != segment[tok.index]
    ]


def _random_cuts(t: DependencyTree, candidates: Sequence[int], strategy: CutStrategy) -> List[int]:
    k = min(math.floor(strategy.cut_ratio * (len(t) - 1)), len(candidates))
    if k <= 0:
        return []
    rng = np.random.default_rng(strategy.seed & _SEED_MASK)
    chosen = rng.choice(np.asarray(candidates, dtype=np.int64), size=k, replace=False)
    return [int(i) for i in chosen]


def _preposition_cuts(t: DependencyTree) -> List[int]:
    return [
        tok.index for tok in t.tokens
        if tok.upos == ADP and tok.head != 0 and t.children(tok.index)
    ]


def select_cut_nodes(
    t: DependencyTree,
    s: CutStrategy,
    protected: AbstractSet[int] = frozenset(),
) -> FrozenSet[int]:
    """
    Nodes whose subtrees the strategy cuts.

    punctuation -- tokens whose head sits in another punctuation-delimited segment
    random      -- floor(cut_ratio * (n - 1)) non-root tokens, seeded
    preposition -- ADP tokens with at least one dependent

    The root and the ``protected`` tokens (entity heads) are never selected.
    """
    root = t.root
    excluded = set(protected) | ({root} if root is not None else set())

    if s.kind is CutKind.PUNCTUATION:
        picked = _punctuation_cuts(t)
    elif s.kind is CutKind.RANDOM:
        candidates = [tok.index for tok in t.tokens if tok.index not in excluded]
        picked = _random_cuts(t, candidates, s)
    else:
        picked = _preposition_cuts(t)
    return frozenset(i for i in picked if i not in excluded)


def flatten(t: DependencyTree, cuts: Iterable[int]) -> DependencyTree:
    """
    Reattach every cut node directly under the root with deprel ``SRCUT``.

    Tokens and all other head links are unchanged.

    Raises:
        DataError: If a cut is the root or outside the sentence
    """
    cuts = set(cuts)
    if not cuts:
        return t
    root = t.root
    if root is None:
        raise DataError("cannot flatten a tree without a root")
    for c in cuts:
        _check_index(t, c)
    if root in cuts:
        raise DataError(f"cut set contains the root (token {root})")
    return t.with_heads({c: (root, SRCUT) for c in cuts})


def sr_sdp(t: DependencyTree, s: Optional[CutStrategy], e1: int, e2: int) -> SdpPath:
    """SDP of the flattened tree; ``s = None`` gives the plain SDP."""
    if s is None:
        return extract_sdp(t, e1, e2)
    cuts = select_cut_nodes(t, s, protected={e1, e2})
    return extract_sdp(flatten(t, cuts), e1, e2)


def tree_depth(t: DependencyTree) -> int:
    """Longest root-to-token distance (a lone root has depth 0)."""
    root = t.root
    if root is None:
        raise DataError("tree has no root")
    return max(nx.single_source_shortest_path_length(t.graph, root).values())


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathLengthStats:
    """Distribution of path lengths, counted in words."""

    count: int
    mean: float
    minimum: int
    maximum: int
    histogram: Tuple[Tuple[int, int], ...]

    def to_text(self) -> str:
        bars = "  ".join(f"{length}:{n}" for length, n in self.histogram)
        return (
            f"paths={self.count} mean={self.mean:.3f} "
            f"min={self.minimum} max={self.maximum} | {bars}"
        )


def path_length_stats(paths: Iterable[SdpPath]) -> PathLengthStats:
    lengths = [len(p) for p in paths]
    if not lengths:
        return PathLengthStats(0, 0.0, 0, 0, ())
    counts = Counter(lengths)
    return PathLengthStats(
        count=len(lengths),
        mean=float(np.mean(lengths)),
        minimum=min(lengths),
        maximum=max(lengths),
        histogram=tuple(sorted(counts.items())),
    )


def sdp_record(path: SdpPath, sent_id: str, strategy: Optional[CutStrategy]) -> Dict[str, object]:
    """JSONL record emitted by the ``sdp`` command."""
    return {
        "sent_id": sent_id,
        "strategy": strategy_name(strategy),
        "words": path.forms,
        "deprels": path.deprels,
        "traversals": path.traversals,
    }
