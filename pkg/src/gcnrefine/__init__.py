"""Uncertainty-driven GCN refinement of binary volumetric segmentations."""

from .evaluation import dice, ks_test, relative_improvement, slicewise_dice
from .gcn import GcnModel, TrainConfig, renormalize_adjacency
from .graph import GraphParams, RefinementGraph, build_graph
from .refine import RefineConfig, refine_volume, run_refinement
from .uncertainty import StochasticPassSet, UncertaintyBundle, analyze, entropy, expectation
from .volume import Volume, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "GcnModel",
    "GraphParams",
    "RefineConfig",
    "RefinementGraph",
    "StochasticPassSet",
    "TrainConfig",
    "UncertaintyBundle",
    "Volume",
    "analyze",
    "build_graph",
    "dice",
    "entropy",
    "expectation",
    "ks_test",
    "load_volume",
    "refine_volume",
    "relative_improvement",
    "renormalize_adjacency",
    "run_refinement",
    "save_volume",
    "slicewise_dice",
]
