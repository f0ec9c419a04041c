"""
Module: tests.conftest
Purpose: Shared fixtures: the flattening example tree, random trees and small corpora
"""

import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.treebank import (
    DependencyTree,
    RelationInstance,
    Token,
    dump_instances,
    serialize_conllu,
)

# Letters of the flattening example, by token index
FIG = {"a": 1, "b": 2, "c": 3, "d": 4, "e": 5, "f": 6, "g": 7}

DEPRELS = ("nsubj", "obj", "nmod", "amod", "advmod", "det", "case", "punct", "conj")
UPOS_TAGS = ("NOUN", "VERB", "ADJ", "ADP", "PUNCT", "DET", "PROPN")


def fig_tree() -> DependencyTree:
    """
    Seven-token tree: a is the root; b, c hang off a; d, e off c; f, g off e.

    The path b..g runs through the root; cutting e shortens it by one word.
    """
    tokens = (
        Token(1, "a", "VERB", 0, "root"),
        Token(2, "b", "NOUN", 1, "nsubj"),
        Token(3, "c", "NOUN", 1, "obj"),
        Token(4, "d", "ADJ", 3, "amod"),
        Token(5, "e", "NOUN", 3, "nmod"),
        Token(6, "f", "DET", 5, "det"),
        Token(7, "g", "NOUN", 5, "nmod"),
    )
    return DependencyTree(tokens=tokens, sent_id="fig", article_id="doc-fig")


def random_tree(rng: np.random.Generator, n: int, sent_id: str = "rand") -> DependencyTree:
    """Uniformly shuffled recursive tree over n tokens with random labels."""
    order = [int(i) + 1 for i in rng.permutation(n)]
    heads = {order[0]: 0}
    for k in range(1, n):
        heads[order[k]] = order[int(rng.integers(0, k))]
    tokens = tuple(
        Token(
            index=i,
            form=f"w{i}",
            upos=UPOS_TAGS[int(rng.integers(0, len(UPOS_TAGS)))],
            head=heads[i],
            deprel="root" if heads[i] == 0 else DEPRELS[int(rng.integers(0, len(DEPRELS)))],
        )
        for i in range(1, n + 1)
    )
    return DependencyTree(tokens=tokens, sent_id=sent_id, article_id="rand")


def make_instance(
    tree: DependencyTree,
    e1: int,
    e2: int,
    label: str = "Other",
    direction: Optional[str] = None,
    e1_end: Optional[int] = None,
    e2_end: Optional[int] = None,
) -> RelationInstance:
    return RelationInstance(
        sentence=tree,
        e1_span=(e1, e1_end or e1),
        e2_span=(e2, e2_end or e2),
        e1_type="",
        e2_type="",
        label=label,
        direction=direction,
        sent_id=tree.sent_id,
        article_id=tree.article_id or tree.sent_id,
    )


# Verb that signals each relation in the synthetic corpora
RELATION_VERBS = {
    "Located": "sits",
    "Near": "borders",
    "Part-Whole": "contains",
    "Family": "fathered",
}
NOUNS = ("river", "castle", "village", "tower", "forest", "bridge", "garden", "harbor", "valley", "temple")


def svo_tree(subject: str, verb: str, obj: str, sent_id: str, article_id: str) -> DependencyTree:
    """subject <-nsubj- verb -obj-> obj"""
    tokens = (
        Token(1, subject, "NOUN", 2, "nsubj"),
        Token(2, verb, "VERB", 0, "root"),
        Token(3, obj, "NOUN", 2, "obj"),
    )
    return DependencyTree(tokens=tokens, sent_id=sent_id, article_id=article_id)


def synthetic_instances(
    count: int = 20,
    relations: Sequence[str] = tuple(RELATION_VERBS),
    articles: int = 5,
) -> List[RelationInstance]:
    """
    One SVO sentence per instance; the verb names the relation and the
    entity order names the direction.

    Classes cycle through every (relation, direction) pair.
    """
    classes = [(r, d) for r in relations for d in ("12", "21")]
    instances = []
    for k in range(count):
        label, direction = classes[k % len(classes)]
        tree = svo_tree(
            NOUNS[k % len(NOUNS)], RELATION_VERBS[label], NOUNS[(3 * k + 1) % len(NOUNS)],
            sent_id=f"s{k}", article_id=f"art{k % articles}",
        )
        e1, e2 = (1, 3) if direction == "12" else (3, 1)
        instances.append(make_instance(tree, e1, e2, label, direction))
    return instances


def preposition_tree(k: int, article_id: str) -> Tuple[DependencyTree, int, int]:
    """
    "the bird flew over the valley near the town"

    bird(2) <-nsubj- flew(3); flew -obl-> over(4) -> valley(6) -> near(7) -> town(9).
    The entities are bird and town. Cutting "near" lifts town's subtree to
    the root, so the path drops from 6 words to 4.
    """
    forms = ("the", NOUNS[k % len(NOUNS)], "flew", "over", "the", "valley", "near", "the", "town")
    tokens = (
        Token(1, forms[0], "DET", 2, "det"),
        Token(2, forms[1], "NOUN", 3, "nsubj"),
        Token(3, forms[2], "VERB", 0, "root"),
        Token(4, forms[3], "ADP", 3, "obl"),
        Token(5, forms[4], "DET", 6, "det"),
        Token(6, forms[5], "NOUN", 4, "pobj"),
        Token(7, forms[6], "ADP", 6, "nmod"),
        Token(8, forms[7], "DET", 9, "det"),
        Token(9, forms[8], "NOUN", 7, "pobj"),
    )
    return DependencyTree(tokens=tokens, sent_id=f"p{k}", article_id=article_id), 2, 9


def preposition_instances(count: int = 12, articles: int = 6) -> List[RelationInstance]:
    instances = []
    for k in range(count):
        tree, e1, e2 = preposition_tree(k, f"art{k % articles}")
        label, direction = ("Located", "12") if k % 2 == 0 else ("Near", "21")
        instances.append(make_instance(tree, e1, e2, label, direction))
    return instances


def write_corpus(directory: Path, instances: Sequence[RelationInstance]) -> Tuple[Path, Path]:
    """CoNLL-U file (one sentence per distinct sent_id) plus the instance sidecar."""
    directory.mkdir(parents=True, exist_ok=True)
    trees, seen = [], set()
    for inst in instances:
        if inst.sent_id not in seen:
            seen.add(inst.sent_id)
            trees.append(inst.sentence)
    conllu_path = directory / "corpus.conllu"
    instances_path = directory / "instances.jsonl"
    conllu_path.write_text(serialize_conllu(trees), encoding="utf-8")
    instances_path.write_text(dump_instances(instances), encoding="utf-8")
    return conllu_path, instances_path


@pytest.fixture
def fig2_tree() -> DependencyTree:
    return fig_tree()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20261019)


@pytest.fixture
def corpus_files(tmp_path: Path) -> Tuple[Path, Path]:
    return write_corpus(tmp_path / "corpus", synthetic_instances(count=24, articles=6))
