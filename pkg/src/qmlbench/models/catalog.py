"""Registry of model kinds, their hyperparameter grids and variant flags."""

from __future__ import annotations

import itertools

from .base import VARIANTS, Classifier, ModelError, ModelSpec
from .baselines import MLPClassifier, SVC
from .conv import ConvolutionalNeuralNetwork, QuanvolutionalNeuralNetwork, WeiNet
from .kernels import (
    IQPKernelClassifier,
    ProjectedQuantumKernel,
    QuantumKitchenSinks,
    SeparableKernelClassifier,
)
from .variational import (
    CircuitCentricClassifier,
    DataReuploadingClassifier,
    DressedQuantumCircuitClassifier,
    IQPVariationalClassifier,
    QuantumBoltzmannMachine,
    QuantumBoltzmannMachineSeparable,
    QuantumMetricLearner,
    SeparableVariationalClassifier,
    TreeTensorClassifier,
)

LR = [0.001, 0.01, 0.1]
LR_CONV = [0.0001, 0.001, 0.01]
C_GRID = [0.1, 1, 10, 100]

GRIDS: dict[str, dict[str, list]] = {
    "CircuitCentricClassifier": {"learning_rate": LR, "n_layers": [1, 5, 10], "n_input_copies": [1, 2, 3]},
    "DataReuploadingClassifier": {"learning_rate": LR, "n_layers": [1, 5, 10, 15],
                                  "observable_type": ["single", "half", "full"]},
    "DressedQuantumCircuitClassifier": {"learning_rate": LR, "n_layers": [1, 5, 10, 15]},
    "IQPVariationalClassifier": {"learning_rate": LR, "n_layers": [1, 5, 10, 15], "repeats": [1, 5, 10]},
    "QuantumBoltzmannMachine": {"learning_rate": LR, "temperature": [1, 10, 100],
                                "visible_qubits": ["single", "half", "all"]},
    "QuantumBoltzmannMachineSeparable": {"learning_rate": LR, "temperature": [1, 10, 100],
                                         "visible_qubits": ["single", "half", "all"]},
    "QuantumMetricLearner": {"learning_rate": LR, "n_layers": [1, 3, 4]},
    "TreeTensorClassifier": {"learning_rate": LR},
    "IQPKernelClassifier": {"repeats": [1, 5, 10], "C": C_GRID},
    "ProjectedQuantumKernel": {"trotter_steps": [1, 3, 5], "C": C_GRID, "t": [0.01, 0.1, 1.0],
                               "gamma_factor": [0.1, 1, 10]},
    "QuantumKitchenSinks": {"n_qfeatures": ["full", "half"], "n_episodes": [10, 100, 500, 2000]},
    "QuanvolutionalNeuralNetwork": {"learning_rate": LR_CONV, "n_qchannels": [1, 5, 10],
                                    "qkernel_shape": [2, 3], "kernel_shape": [2, 3, 5]},
    "WeiNet": {"learning_rate": LR_CONV, "filter_type": ["edge_detect", "smooth", "sharpen"]},
    "MLPClassifier": {"learning_rate": LR, "hidden_layer_sizes": [(100,), (10, 10, 10, 10), (50, 10, 5)],
                      "alpha": [0.01, 0.001, 0.0001]},
    "SVC": {"C": C_GRID, "gamma": [0.001, 0.01, 0.1, 1]},
    "ConvolutionalNeuralNetwork": {"learning_rate": LR_CONV, "kernel_shape": [2, 3, 5]},
    "SeparableVariationalClassifier": {"learning_rate": LR, "encoding_layers": [1, 3, 5, 10]},
    "SeparableKernelClassifier": {"encoding_layers": [1, 3, 5, 10], "C": C_GRID},
}

MODELS: dict[str, type[Classifier]] = {cls.kind: cls for cls in (
    CircuitCentricClassifier, DataReuploadingClassifier, DressedQuantumCircuitClassifier,
    IQPVariationalClassifier, QuantumBoltzmannMachine, QuantumBoltzmannMachineSeparable,
    QuantumMetricLearner, TreeTensorClassifier, IQPKernelClassifier, ProjectedQuantumKernel,
    QuantumKitchenSinks, QuanvolutionalNeuralNetwork, WeiNet, MLPClassifier, SVC,
    ConvolutionalNeuralNetwork, SeparableVariationalClassifier, SeparableKernelClassifier,
)}

CLASSICAL = ("MLPClassifier", "SVC", "ConvolutionalNeuralNetwork")
SEPARABLE = ("SeparableVariationalClassifier", "SeparableKernelClassifier", "QuantumBoltzmannMachineSeparable")
IMAGE_MODELS = ("QuanvolutionalNeuralNetwork", "WeiNet", "ConvolutionalNeuralNetwork")
KERNEL_MODELS = ("IQPKernelClassifier", "ProjectedQuantumKernel", "SeparableKernelClassifier")


def model_class(kind: str) -> type[Classifier]:
    try:
        return MODELS[kind]
    except KeyError:
        raise ModelError(f"unknown model kind {kind!r}") from None


def grid_configurations(kind: str, grid: dict | None = None) -> list[dict]:
    """Every hyperparameter assignment of a grid, in deterministic order."""
    grid = GRIDS[kind] if grid is None else grid
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def grid_size(kind: str) -> int:
    return len(grid_configurations(kind))


def make_model(spec: ModelSpec, **overrides) -> Classifier:
    cls = model_class(spec.kind)
    return cls(variant=spec.variant, random_state=spec.seed, **{**spec.hyperparameters, **overrides})


def ablate_data_reuploading(spec: ModelSpec, variant: str | None) -> ModelSpec:
    """Return ``spec`` with exactly one DataReuploading ablation applied (``None``: unchanged)."""
    if spec.kind != "DataReuploadingClassifier":
        raise ModelError("ablations are defined for DataReuploadingClassifier only")
    if variant is None:
        return spec
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}")
    if spec.variant is not None and spec.variant != variant:
        raise ModelError("variant flags are mutually exclusive")
    return ModelSpec(spec.kind, dict(spec.hyperparameters), variant, spec.seed)
