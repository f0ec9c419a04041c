"""
Module: sr_brcnn.utils
Purpose: Runtime setup, seed derivation and run directories
"""

from sr_brcnn.utils.runtime import configure_runtime, derive_seed

__all__ = ["configure_runtime", "derive_seed"]
