"""Fusion strategies for encoded feature maps and chroma planes."""

from cscfuse.fusion.strategies import (
    WeightPair,
    fuse_average,
    fuse_chroma_l1,
    fuse_l1,
    fuse_saliency,
    get_strategy,
)

__all__ = ["WeightPair", "fuse_average", "fuse_chroma_l1", "fuse_l1", "fuse_saliency", "get_strategy"]
