"""
Module: sr_brcnn.models
Purpose: Tensor primitives, the SR-BRCNN model and its checkpoint format
"""

from sr_brcnn.models.brcnn import LabelSchema, ModelParams, ModelSchema
from sr_brcnn.models.checkpoint import load_checkpoint, save_checkpoint

__all__ = ["LabelSchema", "ModelParams", "ModelSchema", "load_checkpoint", "save_checkpoint"]
