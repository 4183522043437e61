"""Classifier implementations and the model registry."""

from .base import Classifier, ModelError, ModelSpec
from .catalog import (
    CLASSICAL,
    GRIDS,
    MODELS,
    ablate_data_reuploading,
    grid_configurations,
    make_model,
    model_class,
)

__all__ = ["Classifier", "ModelError", "ModelSpec", "CLASSICAL", "GRIDS", "MODELS",
           "ablate_data_reuploading", "grid_configurations", "make_model", "model_class"]
