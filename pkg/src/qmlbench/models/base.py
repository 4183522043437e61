"""Shared classifier contract and training machinery."""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..autodiff import DEFAULT_MAX_STEPS, minimize, shift_angle_grads
from ..classical import MinMaxScaler, NotFittedError, sign
from ..sim import Circuit, simulate_angles, adjoint_angles

VARIANTS = ("no_entanglement", "no_cost", "no_scaling", "no_trainable_embedding")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """A model kind plus one hyperparameter assignment, a variant and a seed."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)
    variant: str | None = None
    seed: int = 0

    def build(self, **overrides) -> "Classifier":
        from .catalog import make_model

        return make_model(self, **overrides)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters),
                "variant": self.variant, "seed": self.seed}


class Classifier:
    """Binary classifier over labels in {-1, +1}.

    Subclasses set ``kind``, ``defaults`` (hyperparameter name -> default) and
    ``variants`` (the variant flags they understand), then implement
    ``_fit`` and ``_decision``.
    """

    kind = "Classifier"
    defaults: dict[str, Any] = {}
    variants: tuple[str, ...] = ()
    # "angle": min-max scale features to [-pi/2, pi/2]; None: use them as given
    preprocessing: str | None = "angle"
    batch_size = 32

    def __init__(self, variant: str | None = None, random_state: int = 0,
                 max_steps: int = DEFAULT_MAX_STEPS, scaling: float = 1.0, **hyperparameters):
        unknown = set(hyperparameters) - set(self.defaults)
        if unknown:
            raise ModelError(f"{self.kind} has no hyperparameter(s) {sorted(unknown)}")
        if variant is not None and variant not in self.variants:
            raise ModelError(f"{self.kind} does not support variant {variant!r}")
        self.hyperparameters = {**self.defaults, **hyperparameters}
        self.variant = variant
        self.random_state = random_state
        self.max_steps = max_steps
        self.scaling = float(scaling)
        self.scaler_ = None
        self.fitted_ = False
        self.loss_history_: list[float] = []
        self.converged_ = True

    def __getattr__(self, name):
        hp = self.__dict__.get("hyperparameters")
        if hp is not None and name in hp:
            return hp[name]
        raise AttributeError(name)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.kind, dict(self.hyperparameters), self.variant, self.random_state)

    # -- preprocessing -------------------------------------------------------

    def _prepare(self, X, fit: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(X)):
            raise ModelError("inputs contain NaN or Inf")
        if self.preprocessing == "angle":
            if fit:
                self.scaler_ = MinMaxScaler().fit(X)
            X = self.scaler_.transform(X)
        return X * self.scaling

    # -- public API ----------------------------------------------------------

    def fit(self, X, y) -> "Classifier":
        y = np.asarray(y).ravel()
        if set(np.unique(y)) - {-1, 1}:
            raise ModelError("labels must be -1 or +1")
        self.rng_ = np.random.default_rng(self.random_state)
        Xp = self._prepare(X, fit=True)
        self.n_features_ = Xp.shape[1]
        self._fit(Xp, y.astype(float))
        self.fitted_ = True
        return self

    def decision_function(self, X) -> np.ndarray:
        if not self.fitted_:
            raise NotFittedError(f"{self.kind} is not fitted")
        return self._decision(self._prepare(X))

    def predict(self, X) -> np.ndarray:
        return sign(self.decision_function(X))

    def score(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y).ravel()))

    def required_qubits(self, d: int) -> int:
        return 0

    def _fit(self, X, y):
        raise NotImplementedError

    def _decision(self, X):
        raise NotImplementedError

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        with open(path, "wb") as fh:
            pickle.dump(self, fh)

    @staticmethod
    def load(path) -> "Classifier":
        with open(path, "rb") as fh:
            return pickle.load(fh)


def init_angles(rng, size: int) -> np.ndarray:
    return rng.uniform(0.0, 2 * np.pi, size=size)


def init_weights(rng, shape) -> np.ndarray:
    return rng.normal(0.0, 0.1, size=shape)


class GradientModel(Classifier):
    """A classifier trained by minibatch Adam on ``loss_and_grad``.

    Subclasses implement ``_init_params(X, y)``, ``loss_and_grad(params, X, y)``
    and ``_decision_params(params, X)``.
    """

    def _fit(self, X, y):
        params = self._init_params(X, y)

        def objective(p, idx):
            return self.loss_and_grad(p, X[idx], y[idx])

        result = minimize(objective, params, learning_rate=self.hyperparameters["learning_rate"],
                          n_samples=len(y), batch_size=self.batch_size,
                          max_steps=self.max_steps, rng=self.rng_)
        self.params_ = result.params
        self.loss_history_ = result.loss_history
        self.converged_ = result.converged

    def _decision(self, X):
        return self._decision_params(self.params_, X)

    def loss(self, params, X, y) -> float:
        return self.loss_and_grad(params, X, y)[0]


class CircuitModel(GradientModel):
    """Models whose loss depends on diagonal expectations ``E`` of one circuit.

    Subclasses provide ``circuit_``, ``diags_`` (``(K, 2**n)``) and:

    * ``_circuit_inputs(params, X)`` -> ``(Xc, pc, initial, cache)``
    * ``_head(E, y, params, cache)`` -> ``(loss, dL/dE, dL/dparams direct)``
    * ``_chain(d_pc, d_Xc, params, cache)`` -> gradient contribution to params
    * ``_output(E, params, cache)`` -> decision values
    """

    def _expectations(self, params, X):
        Xc, pc, initial, cache = self._circuit_inputs(params, X)
        angles = self.circuit_.angles(Xc, pc)
        psi = simulate_angles(self.circuit_, angles, initial)
        E = (np.abs(psi) ** 2) @ self.diags_.T
        return E, (Xc, pc, initial, angles, psi, cache)

    def loss_and_grad(self, params, X, y, route: str = "adjoint"):
        """Mean loss and its gradient.

        ``route="adjoint"`` runs the reverse pass; ``route="shift"`` obtains the
        circuit part through the parameter-shift rule instead.
        """
        E, (Xc, pc, initial, angles, psi, cache) = self._expectations(params, X)
        loss, dE, grad = self._head(E, y, params, cache)
        if route == "adjoint":
            cot = psi * (dE @ self.diags_)
            d_angles = adjoint_angles(self.circuit_, angles, psi, cot)
        elif route == "shift":
            def value(p):
                return np.einsum("bk,bk->b", (np.abs(p) ** 2) @ self.diags_.T, dE)
            d_angles = shift_angle_grads(self.circuit_, angles, value, initial)
        else:
            raise ValueError(f"unknown gradient route {route!r}")
        d_pc, d_Xc = self.circuit_.compiled.backprop_angles(d_angles, Xc, pc)
        return loss, grad + self._chain(d_pc, d_Xc, params, cache)

    def _decision_params(self, params, X):
        E, (*_, cache) = self._expectations(params, X)
        return self._output(E, params, cache)

    def expectations(self, X) -> np.ndarray:
        """Fitted diagonal expectations, shape ``(B, K)``."""
        return self._expectations(self.params_, self._prepare(X))[0]

    def _chain(self, d_pc, d_Xc, params, cache):
        out = np.zeros_like(params)
        out[: d_pc.size] = d_pc
        return out


def circuit_entangled(circuit: Circuit, variant: str | None) -> Circuit:
    return circuit.without_entanglement() if variant == "no_entanglement" else circuit
