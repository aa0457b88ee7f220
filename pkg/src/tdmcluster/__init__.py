"""Simulation and verification of time-multiplexed dual-rail continuous-variable cluster states."""
from .config import RunConfig, load_config, parse_config
from .detection import FilterChain, design_filter_chain, identity_chain
from .kernels import BACKEND
from .modes import WeightFunction, extract_qumodes, weight_function
from .network import NetworkConfig, ProbeTone, build_exepr_streams
from .nullifiers import NullifierVector, derive_cluster_nullifiers, derive_exepr_nullifiers
from .pipeline import analyze
from .source import Orientation, QuadratureTrace, SqueezerSpec
from .witness import analytic_variance_oracle, full_inseparability_test, nullifier_variance

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FilterChain",
    "NetworkConfig",
    "NullifierVector",
    "Orientation",
    "ProbeTone",
    "QuadratureTrace",
    "RunConfig",
    "SqueezerSpec",
    "WeightFunction",
    "analytic_variance_oracle",
    "analyze",
    "build_exepr_streams",
    "derive_cluster_nullifiers",
    "derive_exepr_nullifiers",
    "design_filter_chain",
    "extract_qumodes",
    "full_inseparability_test",
    "identity_chain",
    "load_config",
    "nullifier_variance",
    "parse_config",
    "weight_function",
]
