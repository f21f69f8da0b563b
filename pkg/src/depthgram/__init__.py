"""DepthGram representations and outlier screening for high-dimensional functional data."""

from .depth import mbd, mei
from .engine import VARIANTS, AnalysisReport, DepthGram, analyze
from .errors import DataError, InvariantError
from .formats import ArraySource, HdfdDataset, open_dataset
from .marginal import MarginalFlags, marginal_screen
from .synth import ModelConfig, SyntheticSource

__version__ = "0.1.0"

__all__ = [
    "VARIANTS", "AnalysisReport", "ArraySource", "DataError", "DepthGram", "HdfdDataset",
    "InvariantError", "MarginalFlags", "ModelConfig", "SyntheticSource", "analyze",
    "marginal_screen", "mbd", "mei", "open_dataset",
]
