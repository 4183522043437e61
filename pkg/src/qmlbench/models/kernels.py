"""Kernel and feature-map classifiers: a fixed embedding plus a convex learner."""

from __future__ import annotations

import numpy as np

from ..classical import KernelError, logistic_fit, svm_fit
from ..sim import (
    MAX_STATE_QUBITS,
    Angle,
    Circuit,
    SimulationError,
    build_template,
    gate,
    simulate,
    single_qubit_paulis_batch,
)
from .base import Classifier, ModelError, circuit_entangled


def fidelity_gram(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """``|<a_i|b_j>|**2`` for two batches of state vectors."""
    if B is None:
        K = np.abs(np.conj(A) @ A.T) ** 2
        K = (K + K.T) / 2
        np.fill_diagonal(K, np.abs(np.einsum("bi,bi->b", np.conj(A), A)) ** 2)
        return K
    return np.abs(np.conj(B) @ A.T).T ** 2


class KernelModel(Classifier):
    """SVM on a precomputed Gram matrix of some embedding."""

    def _embed(self, X):
        raise NotImplementedError

    def gram(self, X1, X2=None) -> np.ndarray:
        """Kernel matrix between preprocessed inputs (``X2=None``: training Gram)."""
        S1 = self._embed(X1)
        return self._kernel(S1, None if X2 is None else self._embed(X2))

    def _kernel(self, S1, S2=None):
        return fidelity_gram(S1, S2)

    def _check_gram(self, K):
        if np.max(np.abs(np.diag(K) - 1)) > 1e-10:
            raise KernelError("kernel diagonal differs from 1")

    def _fit(self, X, y):
        self._setup(X)
        self.train_states_ = self._embed(X)
        K = self._kernel(self.train_states_)
        self._check_gram(K)
        self.gram_ = K
        self.svm_ = svm_fit(K, y, C=self.hyperparameters["C"])
        self.converged_ = self.svm_.converged

    def _setup(self, X):
        pass

    def _decision(self, X):
        K = self._kernel(self.train_states_, self._embed(X)).T
        return K[:, self.svm_.support] @ self.svm_.dual_coef + self.svm_.bias

    def kernel_values(self, X1, X2) -> np.ndarray:
        """Kernel between raw inputs using the fitted preprocessing."""
        return self._kernel(self._embed(self._prepare(X1)), self._embed(self._prepare(X2)))


class IQPKernelClassifier(KernelModel):
    """Fidelity kernel of the IQP-style embedding."""

    kind = "IQPKernelClassifier"
    defaults = {"repeats": 1, "C": 1.0}
    variants = ("no_entanglement",)

    def required_qubits(self, d):
        return d

    def _setup(self, X):
        d = X.shape[1]
        if d > MAX_STATE_QUBITS:
            raise SimulationError(f"model needs {d} qubits, above the cap of {MAX_STATE_QUBITS}")
        self.circuit_ = circuit_entangled(build_template("iqp_embedding", d, self.repeats), self.variant)

    def _embed(self, X):
        return simulate(self.circuit_, X)


class ProjectedQuantumKernel(KernelModel):
    """Gaussian kernel on one-qubit Pauli expectations of a Trotterised Heisenberg embedding.

    ``d + 1`` qubits; seeded random ``Rot`` on each, then ``trotter_steps``
    layers of ``exp(-i (t/L) x_j (XX + YY + ZZ))`` on wires ``(j, j + 1)``.
    ``gamma = gamma_factor / (Var(phi) d)`` unless ``gamma`` is given.
    """

    kind = "ProjectedQuantumKernel"
    defaults = {"trotter_steps": 1, "C": 1.0, "t": 0.1, "gamma_factor": 1.0}
    variants = ("no_entanglement",)

    def __init__(self, gamma: float | None = None, **kw):
        super().__init__(**kw)
        self.gamma = gamma

    def required_qubits(self, d):
        return d + 1

    def build_circuit(self, d: int) -> Circuit:
        n = d + 1
        rng = np.random.default_rng(self.random_state)
        ops = [gate("Rot", q, *rng.uniform(0, 2 * np.pi, size=3)) for q in range(n)]
        L = self.trotter_steps
        for _ in range(L):
            for j in range(d):
                for word in ("XX", "YY", "ZZ"):
                    ops.append(gate("PPR", (j, j + 1), Angle.feat(j, 2 * self.t / L), pauli=word))
        return circuit_entangled(Circuit(n, ops, 0, d), self.variant)

    def _setup(self, X):
        d = X.shape[1]
        if d + 1 > MAX_STATE_QUBITS:
            raise SimulationError(f"model needs {d + 1} qubits, above the cap of {MAX_STATE_QUBITS}")
        self.circuit_ = self.build_circuit(d)
        self.n_features_ = d
        phi = self._embed(X)
        if self.gamma is not None:
            self.gamma_ = float(self.gamma)
        else:
            var = float(np.var(phi))
            if var == 0.0:
                raise ModelError("projected features have zero variance; the default bandwidth is undefined")
            self.gamma_ = self.gamma_factor / (var * d)

    def features(self, X) -> np.ndarray:
        """``(<X_k>, <Y_k>, <Z_k>)`` for every qubit, flattened to ``3 (d + 1)``."""
        psi = simulate(self.circuit_, X)
        return single_qubit_paulis_batch(psi, self.circuit_.n_qubits).reshape(len(X), -1)

    def _embed(self, X):
        return self.features(X)

    def _kernel(self, S1, S2=None):
        S2_ = S1 if S2 is None else S2
        sq = (S1**2).sum(1)[:, None] + (S2_**2).sum(1)[None, :] - 2 * S1 @ S2_.T
        K = np.exp(-self.gamma_ * np.maximum(sq, 0.0))
        if S2 is None:
            K = (K + K.T) / 2
            np.fill_diagonal(K, 1.0)
        return K


class SeparableKernelClassifier(KernelModel):
    """Product of one-qubit fidelity kernels, layers of ``RX(pi/4)`` then ``RY(x_j)``."""

    kind = "SeparableKernelClassifier"
    defaults = {"encoding_layers": 1, "C": 1.0}

    def single_qubit_circuit(self) -> Circuit:
        ops = []
        for _ in range(self.encoding_layers):
            ops.append(gate("RX", 0, np.pi / 4))
            ops.append(gate("RY", 0, Angle.feat(0)))
        return Circuit(1, ops, 0, 1)

    def product_circuit(self, d: int) -> Circuit:
        ops = []
        for j in range(d):
            for _ in range(self.encoding_layers):
                ops.append(gate("RX", j, np.pi / 4))
                ops.append(gate("RY", j, Angle.feat(j)))
        return Circuit(d, ops, 0, d)

    def _embed(self, X):
        X = np.atleast_2d(X)
        circ = self.single_qubit_circuit()
        # (B, d, 2): one single-qubit state per feature
        return np.stack([simulate(circ, X[:, [j]]) for j in range(X.shape[1])], axis=1)

    def _kernel(self, S1, S2=None):
        S2_ = S1 if S2 is None else S2
        K = np.ones((S1.shape[0], S2_.shape[0]))
        for j in range(S1.shape[1]):
            K *= np.abs(np.conj(S1[:, j]) @ S2_[:, j].T) ** 2
        if S2 is None:
            K = (K + K.T) / 2
        return K


class QuantumKitchenSinks(Classifier):
    """Random linear maps into RX product states, two CNOT layers, one sample per episode.

    The sampled bitstrings of all episodes are concatenated and fed to a
    logistic regression. CNOTs only permute basis states, so a sample is drawn
    exactly by sampling each RX qubit independently and then applying the
    CNOT permutations to the bits.
    """

    kind = "QuantumKitchenSinks"
    defaults = {"n_qfeatures": "full", "n_episodes": 100}
    variants = ("no_entanglement",)

    def required_qubits(self, d):
        return self._width(d)

    def _width(self, d):
        q = self.n_qfeatures
        if q == "full":
            return d
        if q == "half":
            return max(1, d // 2)
        return int(q)

    def cnot_pairs(self, n: int) -> list[tuple[int, int]]:
        if self.variant == "no_entanglement":
            return []
        return [(j, j + 1) for j in range(n - 1)] + [(j, j + 2) for j in range(n - 2)]

    def circuit(self, n: int) -> Circuit:
        """The feature circuit for one episode; features are the transformed ``x'``."""
        ops = [gate("RX", j, Angle.feat(j)) for j in range(n)]
        ops += [gate("CNOT", pair) for pair in self.cnot_pairs(n)]
        return Circuit(n, ops, 0, n)

    def _fit(self, X, y):
        d = X.shape[1]
        n = self._width(d)
        rng = self.rng_
        self.W_ = rng.normal(0.0, 1.0, size=(self.n_episodes, n, d))
        self.b_ = rng.uniform(0.0, 2 * np.pi, size=(self.n_episodes, n))
        self.sample_seed_ = int(rng.integers(2**32))
        Z = self.features(X)
        self.logistic_ = logistic_fit(Z, y)
        self.converged_ = self.logistic_.converged
        self.loss_history_ = self.logistic_.loss_history

    def transformed(self, X) -> np.ndarray:
        """``x'_k = W_k x + b_k``, shape ``(B, episodes, n)``."""
        return np.einsum("knd,bd->bkn", self.W_, X) + self.b_[None]

    def features(self, X) -> np.ndarray:
        Xt = self.transformed(np.atleast_2d(X))
        B, K, n = Xt.shape
        rng = np.random.default_rng(self.sample_seed_)
        bits = (rng.random(Xt.shape) < np.sin(Xt / 2) ** 2).astype(np.int8)
        for c, t in self.cnot_pairs(n):
            bits[..., t] ^= bits[..., c]
        return bits.reshape(B, K * n).astype(float)

    def _decision(self, X):
        return self.logistic_.decision(self.features(X))
