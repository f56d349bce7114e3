"""Fusion of sparse depth priors with high-resolution stereo by seeded region growing."""
from .core import (
    ConfigError,
    DegenerateWindow,
    DisparityField,
    EmptySeedSet,
    FusionParams,
    InfeasiblePixel,
    MetaDisparity,
    NoValidPixels,
    OcclusionMasks,
    SparsePrior,
    load_params,
)
from .pipeline import FusionResult, fuse

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateWindow",
    "DisparityField",
    "EmptySeedSet",
    "FusionParams",
    "FusionResult",
    "InfeasiblePixel",
    "MetaDisparity",
    "NoValidPixels",
    "OcclusionMasks",
    "SparsePrior",
    "fuse",
    "load_params",
]
