"""
Module: sr_brcnn.dataset
Purpose: Article-level splits and the on-disk instance store
Dependencies: numpy, pydantic

A store is a directory holding ``sentences.conllu``, one instance JSONL file
per split and a ``store.json`` manifest:

    store/
      sentences.conllu
      train.jsonl
      dev.jsonl
      test.jsonl
      store.json
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from pydantic import BaseModel, ValidationError

from sr_brcnn.config import ARTICLE_SPLIT, RELATION_TAGS
from sr_brcnn.errors import ConlluParseError, DataError
from sr_brcnn.treebank import (
    DependencyTree,
    RelationInstance,
    dump_instances,
    index_trees,
    parse_instances,
    read_conllu,
    serialize_conllu,
    validate_tree,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
SENTENCES_FILE = "sentences.conllu"
MANIFEST_FILE = "store.json"


class StoreManifest(BaseModel):
    """Contents of ``store.json``."""

    relations: List[str]
    ratios: Tuple[float, float, float]
    seed: int
    sentences: int
    counts: Dict[str, int]
    articles: Dict[str, int]


@dataclass
class Dataset:
    """Train/dev/test instances sharing one set of sentences."""

    train: List[RelationInstance]
    dev: List[RelationInstance]
    test: List[RelationInstance]
    relations: Tuple[str, ...] = RELATION_TAGS

    def split(self, name: str) -> List[RelationInstance]:
        if name not in SPLITS:
            raise KeyError(f"Unknown split '{name}', choose from {SPLITS}")
        return getattr(self, name)

    def __len__(self) -> int:
        return len(self.train) + len(self.dev) + len(self.test)


def _split_counts(n: int, ratios: Sequence[float]) -> Tuple[int, int, int]:
    total = float(sum(ratios))
    if len(ratios) != 3 or total <= 0 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers, got {list(ratios)}")
    n_dev = round(n * ratios[1] / total)
    n_test = round(n * ratios[2] / total)
    if n >= 3:
        n_dev = max(1, n_dev)
        n_test = max(1, n_test)
    elif n == 2:
        n_dev, n_test = 1, 0
    else:
        n_dev, n_test = 0, 0
    n_dev = min(n_dev, max(n - 1, 0))
    n_test = min(n_test, max(n - 1 - n_dev, 0))
    return n - n_dev - n_test, n_dev, n_test


def split_by_article(
    instances: Sequence[RelationInstance],
    ratios: Sequence[float] = ARTICLE_SPLIT,
    seed: int = 0,
) -> Tuple[List[RelationInstance], List[RelationInstance], List[RelationInstance]]:
    """
    Split instances into train/dev/test by article, never splitting an article.

    Articles are shuffled with ``seed`` and dealt out in the given proportions
    (default 695:58:84). With three or more articles dev and test each get at
    least one. Instance order within a split follows the input order.

    Example:
        >>> train, dev, test = split_by_article(instances, seed=4)
    """
    articles: List[str] = []
    seen = set()
    for inst in instances:
        if inst.article_id not in seen:
            seen.add(inst.article_id)
            articles.append(inst.article_id)
    n_train, n_dev, _ = _split_counts(len(articles), ratios)
    order = np.random.default_rng(seed & ((1 << 64) - 1)).permutation(len(articles))
    shuffled = [articles[int(i)] for i in order]
    assignment = {a: 0 for a in shuffled[:n_train]}
    assignment.update({a: 1 for a in shuffled[n_train:n_train + n_dev]})
    assignment.update({a: 2 for a in shuffled[n_train + n_dev:]})

    parts: Tuple[List[RelationInstance], ...] = ([], [], [])
    for inst in instances:
        parts[assignment[inst.article_id]].append(inst)
    logger.info(
        f"Split {len(articles)} articles into {n_train}/{n_dev}/{len(articles) - n_train - n_dev}; "
        f"instances {len(parts[0])}/{len(parts[1])}/{len(parts[2])}"
    )
    return parts


def load_trees(conllu_path: Union[str, Path]) -> Tuple[List[DependencyTree], Dict[str, DependencyTree]]:
    """
    Read a CoNLL-U file and reject any sentence that is not a tree.

    Returns:
        The trees in file order and the same trees keyed by sentence id

    Raises:
        ConlluParseError: Unparseable CoNLL-U or a sentence that is not a tree,
            with the line its block starts on
        DataError: Duplicate sentence ids
    """
    conllu_path = Path(conllu_path)
    trees = read_conllu(conllu_path)
    for tree in trees:
        violation = validate_tree(tree)
        if violation is not None:
            raise ConlluParseError(f"sentence {tree.sent_id}: {violation}", path=conllu_path, line=tree.line)
    try:
        by_id = index_trees(trees)
    except DataError as e:
        raise e.with_path(conllu_path) from e
    return trees, by_id


def load_corpus(
    conllu_path: Union[str, Path],
    instances_path: Union[str, Path],
    relations: Sequence[str] = RELATION_TAGS,
) -> Tuple[List[DependencyTree], List[RelationInstance]]:
    """
    Read and validate sentences plus their instance sidecar.

    Raises:
        ConlluParseError: Unparseable CoNLL-U or a sentence that is not a tree
        InstanceError: Bad instance record (with line number)
    """
    instances_path = Path(instances_path)
    trees, by_id = load_trees(conllu_path)
    instances = parse_instances(
        instances_path.read_text(encoding="utf-8"), by_id, relations, source=instances_path,
    )
    logger.info(f"Read {len(trees)} sentences and {len(instances)} instances")
    return trees, instances


def preprocess(
    conllu_path: Union[str, Path],
    instances_path: Union[str, Path],
    out_dir: Union[str, Path],
    relations: Sequence[str] = RELATION_TAGS,
    ratios: Sequence[float] = ARTICLE_SPLIT,
    seed: int = 0,
) -> StoreManifest:
    """
    Validate a corpus and write it as a split instance store.

    Returns:
        The manifest written to ``store.json``
    """
    out_dir = Path(out_dir)
    trees, instances = load_corpus(conllu_path, instances_path, relations)
    if not instances:
        raise DataError("no relation instances to store", path=instances_path)
    parts = split_by_article(instances, ratios, seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / SENTENCES_FILE).write_text(serialize_conllu(trees), encoding="utf-8")
    for name, part in zip(SPLITS, parts):
        (out_dir / f"{name}.jsonl").write_text(dump_instances(part), encoding="utf-8")

    manifest = StoreManifest(
        relations=list(relations),
        ratios=tuple(float(r) for r in ratios),
        seed=seed,
        sentences=len(trees),
        counts={name: len(part) for name, part in zip(SPLITS, parts)},
        articles={name: len({i.article_id for i in part}) for name, part in zip(SPLITS, parts)},
    )
    (out_dir / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote instance store to {out_dir}")
    return manifest


def read_manifest(store_dir: Union[str, Path]) -> StoreManifest:
    path = Path(store_dir) / MANIFEST_FILE
    if not path.exists():
        raise DataError("not an instance store (store.json missing)", path=store_dir)
    try:
        return StoreManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise DataError(f"invalid store manifest: {e.errors()[0]['msg']}", path=path) from e


def load_store(store_dir: Union[str, Path], relations: Optional[Sequence[str]] = None) -> Dataset:
    """
    Read a store written by :func:`preprocess`.

    Args:
        store_dir: Store directory
        relations: Relation inventory (default: the one recorded in the manifest)
    """
    store_dir = Path(store_dir)
    manifest = read_manifest(store_dir)
    relations = tuple(relations) if relations is not None else tuple(manifest.relations)
    _, by_id = load_trees(store_dir / SENTENCES_FILE)
    parts = {}
    for name in SPLITS:
        path = store_dir / f"{name}.jsonl"
        parts[name] = parse_instances(path.read_text(encoding="utf-8"), by_id, relations, source=path)
    return Dataset(train=parts["train"], dev=parts["dev"], test=parts["test"], relations=relations)
