"""
Convergent cross mapping with neighbour weights from a sparse dynamic
Bayesian network.

The usual entry points are re-exported here; see the submodules for the
rest.
"""

__version__ = "0.1.0"

from .errors import CcmError
from .series import BandSpec, Recording, TimeSeries, bandpass, read_csv, standardize, write_csv
from .embedding import EmbeddingParams, embed, select_dimension, select_tau
from .neighbors import knn, knn_batch
from .dbn import DbnModel, EdgePriorMatrix, learn
from .crossmap import KernelConfig, convergence, cross_map, pearson
from .intervention import DbnSettings, segmented_intervention, simulated_intervention
from .metrics import MetricsReport, SurrogateConfig, causal_impact, pc_norm, shuffled_rho
from .baselines import granger
from .synthetic import SyntheticSpec, coupled_logistic, generate, preset, sparse_var

__all__ = [
    "CcmError", "BandSpec", "Recording", "TimeSeries", "bandpass", "read_csv", "standardize",
    "write_csv", "EmbeddingParams", "embed", "select_dimension", "select_tau", "knn",
    "knn_batch", "DbnModel", "EdgePriorMatrix", "learn", "KernelConfig", "convergence",
    "cross_map", "pearson", "DbnSettings", "segmented_intervention", "simulated_intervention",
    "MetricsReport", "SurrogateConfig", "causal_impact", "pc_norm", "shuffled_rho", "granger",
    "SyntheticSpec", "coupled_logistic", "generate", "preset", "sparse_var",
]
