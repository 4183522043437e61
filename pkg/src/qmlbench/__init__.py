"""Benchmark suite for quantum machine learning classifiers on a numpy statevector simulator."""

from .datagen import Dataset
from .harness import grid_search_cv, positivity_bias_sim, rank_models, run_benchmark
from .models import GRIDS, MODELS, Classifier, ModelSpec, make_model

__all__ = ["Dataset", "grid_search_cv", "positivity_bias_sim", "rank_models", "run_benchmark",
           "GRIDS", "MODELS", "Classifier", "ModelSpec", "make_model"]
__version__ = "0.1.0"
