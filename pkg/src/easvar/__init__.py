"""Graph selection for stable VAR(1) models with epsilon-admissible subsets."""

from .core import Graph, PatternKind, TimeSeriesData, generate_pattern, simulate_var
from .eas import EasParams, EpsilonMode
from .estim import GraphFit, RankDeficient, least_squares
from .gfi import MassEstimate, MassModel, log_graph_mass
from .gimh import ChainConfig, ChainResult, run_chain

__all__ = [
    "ChainConfig", "ChainResult", "EasParams", "EpsilonMode", "Graph", "GraphFit", "MassEstimate",
    "MassModel", "PatternKind", "RankDeficient", "TimeSeriesData", "generate_pattern", "least_squares",
    "log_graph_mass", "run_chain", "simulate_var",
]

__version__ = "0.1.0"
