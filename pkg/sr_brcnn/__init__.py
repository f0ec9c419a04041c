"""
SR-BRCNN - Relation classification over structure-regularized dependency paths

Dependency trees are flattened by cutting selected subtrees and reattaching
them to the root; the shortest dependency path between two entities in the
flattened tree is read in both directions by recurrent convolutional networks.

Main Components:
    - treebank: CoNLL-U sentences and relation instances
    - structreg: SDP extraction, cut strategies and flattening
    - models: Tensor primitives, the BRCNN and the checkpoint codec
    - trainer: AdaDelta training with dev-F1 early stopping
    - RelationClassifier (core): Prediction and scoring with a trained checkpoint

Example:
    >>> from sr_brcnn.core import RelationClassifier
    >>> clf = RelationClassifier("outputs/run/checkpoints/best.ckpt")
    >>> records = clf.predict_records(instances)

For more information, see README.md and docs/
"""

__version__ = "0.1.0"
