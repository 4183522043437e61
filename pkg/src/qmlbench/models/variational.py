"""Quantum neural network classifiers trained by gradient descent."""

from __future__ import annotations

import numpy as np

from ..autodiff import minimize, shift_angle_grads, state_backprop
from ..classical import log_sigmoid, sigmoid
from ..sim import (
    MAX_STATE_QUBITS,
    Angle,
    Circuit,
    SimulationError,
    adjoint_angles,
    amplitude_embed_batch,
    amplitude_register_size,
    build_template,
    gate,
    pauli_word,
    simulate_angles,
    z_diagonal,
)
from .base import CircuitModel, GradientModel, ModelError, circuit_entangled, init_angles, init_weights


def _z_diags(wires, n) -> np.ndarray:
    return np.array([z_diagonal(pauli_word({w: "Z"}, n)) for w in wires])


def _check_register(n: int, limit: int = MAX_STATE_QUBITS):
    if n > limit:
        raise SimulationError(f"model needs {n} qubits, above the cap of {limit}")


def n_observed(observable_type: str, n: int) -> int:
    """Qubits entering the loss: single -> 1, half -> ceil(n/2), full/all -> n."""
    if observable_type == "single":
        return 1
    if observable_type == "half":
        return -(-n // 2)
    if observable_type in ("full", "all"):
        return n
    raise ModelError(f"unknown observable type {observable_type!r}")


def _bce_from_logit(logit, y):
    """Mean ``-log P(y)`` with ``P(+1) = sigmoid(logit)`` and its derivative."""
    loss = float(-log_sigmoid(y * logit).mean())
    return loss, -y * sigmoid(-y * logit) / y.size


# ---------------------------------------------------------------------------


class CircuitCentricClassifier(CircuitModel):
    """Amplitude-encoded copies, strongly entangling layers, ``<Z_0> + b``, square loss."""

    kind = "CircuitCentricClassifier"
    defaults = {"learning_rate": 0.01, "n_layers": 1, "n_input_copies": 1}
    variants = ("no_entanglement",)
    preprocessing = None

    def required_qubits(self, d):
        return amplitude_register_size(d) * self.n_input_copies

    def _init_params(self, X, y):
        d = X.shape[1]
        self.register_ = amplitude_register_size(d)
        n = self.required_qubits(d)
        _check_register(n)
        self.n_qubits_ = n
        self.circuit_ = circuit_entangled(build_template("strongly_entangling", n, self.n_layers), self.variant)
        self.diags_ = _z_diags([0], n)
        return np.concatenate([init_angles(self.rng_, self.circuit_.n_params), init_weights(self.rng_, 1)])

    def initial_states(self, X):
        amp = amplitude_embed_batch(X, self.register_)
        state = amp
        for _ in range(self.n_input_copies - 1):
            state = np.einsum("bi,bj->bij", state, amp).reshape(len(X), -1)
        return state

    def _circuit_inputs(self, params, X):
        return np.zeros((len(X), 0)), params[:-1], self.initial_states(X), None

    def _head(self, E, y, params, cache):
        r = E[:, 0] + params[-1] - y
        grad = np.zeros_like(params)
        dr = 2 * r / y.size
        grad[-1] = dr.sum()
        return float(np.mean(r**2)), dr[:, None], grad

    def _output(self, E, params, cache):
        return E[:, 0] + params[-1]


class DataReuploadingClassifier(CircuitModel):
    """Trainable re-uploading of feature triples ``Rot(x * w + theta)`` with a CZ ladder.

    Parameter layout: ``theta`` (L*n*3), then ``w`` (L*n*3, absent under
    ``no_scaling``), then the fidelity weights ``alpha^0``, ``alpha^1``
    (``n_max`` each, absent under ``no_cost``). Class +1 is the ``|1>`` side.
    """

    kind = "DataReuploadingClassifier"
    defaults = {"learning_rate": 0.01, "n_layers": 1, "observable_type": "single"}
    variants = ("no_entanglement", "no_cost", "no_scaling", "no_trainable_embedding")

    def required_qubits(self, d):
        return -(-d // 3)

    def build_circuit(self, d: int) -> Circuit:
        n = self.required_qubits(d)
        L = self.n_layers
        block = L * n * 3
        scaled = self.variant != "no_scaling"

        def th(l, q, k):
            return (l * n + q) * 3 + k

        def om(l, q, k):
            return block + th(l, q, k) if scaled else None

        ops = []

        def ladder():
            if self.variant != "no_entanglement":
                ops.extend(gate("CZ", (q, q + 1)) for q in range(n - 1))

        if self.variant == "no_trainable_embedding":
            for l in range(L):
                for q in range(n):
                    ops.append(gate("Rot", q, *[Angle(feature=3 * q + k, scale=om(l, q, k)) for k in range(3)]))
            for l in range(L):
                for q in range(n):
                    ops.append(gate("Rot", q, *[Angle.par(th(l, q, k)) for k in range(3)]))
                ladder()
        else:
            for l in range(L):
                for q in range(n):
                    ops.append(gate("Rot", q, *[Angle(feature=3 * q + k, scale=om(l, q, k), param=th(l, q, k))
                                                for k in range(3)]))
                ladder()
        return Circuit(n, ops, block * (2 if scaled else 1), 3 * n)

    def _init_params(self, X, y):
        d = X.shape[1]
        n = self.required_qubits(d)
        _check_register(n)
        self.n_qubits_ = n
        self.circuit_ = self.build_circuit(d)
        self.n_max_ = 1 if self.variant == "no_cost" else n_observed(self.observable_type, n)
        self.diags_ = _z_diags(range(self.n_max_), n)
        block = self.n_layers * n * 3
        parts = [init_angles(self.rng_, block)]
        if self.variant != "no_scaling":
            parts.append(np.ones(block))
        if self.variant != "no_cost":
            parts.append(np.ones(2 * self.n_max_))
        return np.concatenate(parts)

    def _circuit_inputs(self, params, X):
        Xc = np.zeros((len(X), 3 * self.n_qubits_))
        Xc[:, : X.shape[1]] = X
        return Xc, params[: self.circuit_.n_params], None, None

    def _head(self, E, y, params, cache):
        grad = np.zeros_like(params)
        B = y.size
        if self.variant == "no_cost":
            loss, dlogit = _bce_from_logit(-6.0 * E[:, 0], y)
            return loss, (-6.0 * dlogit)[:, None], grad
        k = self.n_max_
        a0, a1 = params[-2 * k:-k], params[-k:]
        y01 = ((y + 1) / 2)[:, None]
        F0, F1 = (1 + E) / 2, (1 - E) / 2
        r0 = a0 * F0 - (1 - y01)
        r1 = a1 * F1 - y01
        loss = float(np.sum(r0**2 + r1**2) / B)
        dE = (r0 * a0 - r1 * a1) / B
        grad[-2 * k:-k] = np.sum(2 * r0 * F0, axis=0) / B
        grad[-k:] = np.sum(2 * r1 * F1, axis=0) / B
        return loss, dE, grad

    def _output(self, E, params, cache):
        # mean F^1 - mean F^0 over the observed qubits
        return -E.mean(axis=1)


class DressedQuantumCircuitClassifier(CircuitModel):
    """``W_out^T <Z>(RY-ring circuit on (pi/2) tanh(W_in^T x))`` with softmax cross entropy.

    Parameter layout: ``theta`` (L*n), ``W_in`` (d*n), ``W_out`` (n*2).
    """

    kind = "DressedQuantumCircuitClassifier"
    defaults = {"learning_rate": 0.01, "n_layers": 1}
    variants = ("no_entanglement",)

    def required_qubits(self, d):
        return d

    def build_circuit(self, n: int) -> Circuit:
        ops = [gate("H", q) for q in range(n)]
        ops += [gate("RY", q, Angle.feat(q)) for q in range(n)]
        p = 0
        for _ in range(self.n_layers):
            for q in range(n):
                ops.append(gate("RY", q, Angle.par(p)))
                p += 1
            ops += build_template("cnot_ring", n, total_qubits=n).ops
        return circuit_entangled(Circuit(n, ops, p, n), self.variant)

    def _init_params(self, X, y):
        d = X.shape[1]
        _check_register(d)
        self.n_qubits_ = n = d
        self.circuit_ = self.build_circuit(n)
        self.diags_ = _z_diags(range(n), n)
        return np.concatenate([init_angles(self.rng_, self.circuit_.n_params),
                               init_weights(self.rng_, d * n), init_weights(self.rng_, n * 2)])

    def _split(self, params):
        P, d, n = self.circuit_.n_params, self.n_features_, self.n_qubits_
        return params[:P], params[P:P + d * n].reshape(d, n), params[P + d * n:].reshape(n, 2)

    def _circuit_inputs(self, params, X):
        theta, W_in, _ = self._split(params)
        z = np.pi / 2 * np.tanh(X @ W_in)
        return z, theta, None, (X, z)

    def _logits(self, E, params):
        return E @ self._split(params)[2]

    def _head(self, E, y, params, cache):
        logits = self._logits(E, params)
        logits = logits - logits.max(axis=1, keepdims=True)
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        cls = (y > 0).astype(int)
        B = y.size
        loss = float(-logp[np.arange(B), cls].mean())
        dlog = np.exp(logp)
        dlog[np.arange(B), cls] -= 1
        dlog /= B
        W_out = self._split(params)[2]
        grad = np.zeros_like(params)
        P, d, n = self.circuit_.n_params, self.n_features_, self.n_qubits_
        grad[P + d * n:] = (E.T @ dlog).ravel()
        return loss, dlog @ W_out.T, grad

    def _chain(self, d_pc, d_Xc, params, cache):
        X, z = cache
        out = np.zeros_like(params)
        P, d, n = self.circuit_.n_params, self.n_features_, self.n_qubits_
        out[:P] = d_pc
        dpre = d_Xc * (np.pi / 2 - (2 / np.pi) * z**2)  # (pi/2)(1 - tanh^2)
        out[P:P + d * n] = (X.T @ dpre).ravel()
        return out

    def _output(self, E, params, cache):
        logits = self._logits(E, params)
        return logits[:, 1] - logits[:, 0]

    def class_probabilities(self, X) -> np.ndarray:
        logits = self._logits(self.expectations(X), self.params_)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


class IQPVariationalClassifier(CircuitModel):
    """IQP-style embedding, strongly entangling layers, ``f = <Z_0 Z_1>``, loss ``(1 - y f)/2``."""

    kind = "IQPVariationalClassifier"
    defaults = {"learning_rate": 0.01, "n_layers": 1, "repeats": 1}
    variants = ("no_entanglement",)

    def required_qubits(self, d):
        return d

    def build_circuit(self, d: int) -> Circuit:
        emb = build_template("iqp_embedding", d, self.repeats)
        var = build_template("strongly_entangling", d, self.n_layers)
        return circuit_entangled(emb.then(var), self.variant)

    def _init_params(self, X, y):
        d = X.shape[1]
        if d < 2:
            raise ModelError("IQPVariationalClassifier needs at least two features")
        _check_register(d)
        self.n_qubits_ = d
        self.circuit_ = self.build_circuit(d)
        self.diags_ = z_diagonal(pauli_word({0: "Z", 1: "Z"}, d))[None, :]
        return init_angles(self.rng_, self.circuit_.n_params)

    def _circuit_inputs(self, params, X):
        return X, params, None, None

    def _head(self, E, y, params, cache):
        f = E[:, 0]
        return float(np.mean((1 - y * f) / 2)), (-y / (2 * y.size))[:, None], np.zeros_like(params)

    def _output(self, E, params, cache):
        return E[:, 0]


def tree_register_size(d: int) -> int:
    """Smallest power of two holding the amplitude register for ``d`` features."""
    n = amplitude_register_size(d)
    return 1 << int(np.ceil(np.log2(n))) if n > 1 else 1


def tree_tensor_circuit(n: int, entangle: bool = True) -> Circuit:
    """RY on every active wire, CNOT from each odd partner onto its even
    neighbour, keep the even wires; repeat until one wire, then a final RY."""
    if n & (n - 1):
        raise SimulationError("tree tensor circuits need a power-of-two register")
    ops, p = [], 0
    active = list(range(n))
    while len(active) > 1:
        for w in active:
            ops.append(gate("RY", w, Angle.par(p)))
            p += 1
        if entangle:
            for k in range(len(active) // 2):
                ops.append(gate("CNOT", (active[2 * k + 1], active[2 * k])))
        active = active[::2]
    ops.append(gate("RY", active[0], Angle.par(p)))
    return Circuit(n, ops, p + 1, 0)


class TreeTensorClassifier(CircuitModel):
    """Amplitude-encoded input, tree of RY and CNOT halvings, ``<Z_0>``, square loss."""

    kind = "TreeTensorClassifier"
    defaults = {"learning_rate": 0.01}
    variants = ("no_entanglement",)
    preprocessing = None

    def required_qubits(self, d):
        return tree_register_size(d)

    def _init_params(self, X, y):
        n = tree_register_size(X.shape[1])
        _check_register(n)
        self.n_qubits_ = n
        self.circuit_ = tree_tensor_circuit(n, self.variant != "no_entanglement")
        self.diags_ = _z_diags([0], n)
        return init_angles(self.rng_, self.circuit_.n_params)

    def _circuit_inputs(self, params, X):
        return np.zeros((len(X), 0)), params, amplitude_embed_batch(X, self.n_qubits_), None

    def _head(self, E, y, params, cache):
        r = E[:, 0] - y
        return float(np.mean(r**2)), (2 * r / y.size)[:, None], np.zeros_like(params)

    def _output(self, E, params, cache):
        return E[:, 0]


# ---------------------------------------------------------------------------


class SeparableVariationalClassifier(GradientModel):
    """Independent one-qubit circuits ``[Rot(theta), RY(x_j)] * L, Rot(theta)``.

    ``P(+1) = sigmoid(6 <O>)`` with ``O`` the mean of the ``Z_j``. Each feature
    is simulated on its own qubit, so memory grows linearly in ``d``.
    """

    kind = "SeparableVariationalClassifier"
    defaults = {"learning_rate": 0.01, "encoding_layers": 1}

    def single_qubit_circuit(self) -> Circuit:
        L = self.encoding_layers
        ops = []
        for l in range(L):
            ops.append(gate("Rot", 0, *[Angle.par(3 * l + k) for k in range(3)]))
            ops.append(gate("RY", 0, Angle.feat(0)))
        ops.append(gate("Rot", 0, *[Angle.par(3 * L + k) for k in range(3)]))
        return Circuit(1, ops, 3 * (L + 1), 1)

    def product_circuit(self, d: int) -> Circuit:
        """The same model as one ``d``-qubit circuit (parameters laid out per qubit)."""
        single = self.single_qubit_circuit()
        P = single.n_params
        ops = []
        for j in range(d):
            for op in single.ops:
                angles = [Angle(a.const, None if a.feature is None else j, None, a.coeff, None,
                                None if a.param is None else j * P + a.param) for a in op.angles]
                ops.append(gate(op.kind, j, *angles))
        return Circuit(d, ops, d * P, d)

    def _init_params(self, X, y):
        self.circuit_ = self.single_qubit_circuit()
        return init_angles(self.rng_, X.shape[1] * self.circuit_.n_params)

    def _stack_angles(self, params, X):
        d, B = X.shape[1], X.shape[0]
        theta = params.reshape(d, -1)
        return np.concatenate([self.circuit_.angles(X[:, [j]], theta[j]) for j in range(d)]), d, B

    def qubit_expectations(self, params, X):
        """``<Z_j>`` for every row and feature, shape ``(B, d)``."""
        angles, d, B = self._stack_angles(params, X)
        psi = simulate_angles(self.circuit_, angles)
        return (np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2).reshape(d, B).T

    def loss_and_grad(self, params, X, y, route: str = "adjoint"):
        angles, d, B = self._stack_angles(params, X)
        psi = simulate_angles(self.circuit_, angles)
        z = np.array([1.0, -1.0])
        E = ((np.abs(psi) ** 2) @ z).reshape(d, B).T
        loss, dlogit = _bce_from_logit(6.0 * E.mean(axis=1), y)
        dE = np.repeat((6.0 * dlogit / d)[None, :], d, axis=0).ravel()
        if route == "adjoint":
            d_angles = adjoint_angles(self.circuit_, angles, psi, psi * (dE[:, None] * z))
        else:
            d_angles = shift_angle_grads(self.circuit_, angles, lambda p: ((np.abs(p) ** 2) @ z) * dE)
        theta = params.reshape(d, -1)
        grad = np.concatenate([
            self.circuit_.compiled.backprop_angles(d_angles[j * B:(j + 1) * B], X[:, [j]], theta[j])[0]
            for j in range(d)])
        return loss, grad

    def _decision_params(self, params, X):
        return self.qubit_expectations(params, X).mean(axis=1)


# ---------------------------------------------------------------------------

QBM_MAX_QUBITS = 10


class QuantumBoltzmannMachine(GradientModel):
    """Exact Gibbs state of ``H(x) = sum_m (theta_m . x) P_m``; ``P(+1) = (1 + <O>)/2``.

    ``P_m`` runs over ``Z_j``, ``X_j`` and (unless separable) ``Z_j Z_k``;
    ``O`` averages ``Z`` over the visible qubits. Gradients of the thermal
    expectation are exact, from the derivative of the matrix exponential in
    the eigenbasis of ``H``.
    """

    kind = "QuantumBoltzmannMachine"
    defaults = {"learning_rate": 0.01, "temperature": 1, "visible_qubits": "single"}
    variants = ()
    separable = False

    def required_qubits(self, d):
        return d

    def terms(self, n: int) -> list[str]:
        words = [pauli_word({j: "Z"}, n) for j in range(n)]
        words += [pauli_word({j: "X"}, n) for j in range(n)]
        if not self.separable:
            words += [pauli_word({j: "Z", k: "Z"}, n) for j in range(n) for k in range(j)]
        return words

    def _setup(self, d):
        if d > QBM_MAX_QUBITS and not self.separable:
            raise SimulationError(f"QuantumBoltzmannMachine needs {d} qubits, above the cap of {QBM_MAX_QUBITS}")
        if self.temperature <= 0:
            raise ModelError("temperature must be positive")
        self.n_qubits_ = d
        self.terms_ = self.terms(d)
        self.n_visible_ = n_observed(self.visible_qubits, d)

    def _init_params(self, X, y):
        self._setup(X.shape[1])
        return self.rng_.normal(0.0, 1.0, size=len(self.terms_) * X.shape[1])

    def coefficients(self, params, X):
        return X @ params.reshape(len(self.terms_), -1).T

    def hamiltonians(self, C) -> np.ndarray:
        n = self.n_qubits_
        dim = 2**n
        idx = np.arange(dim)
        H = np.zeros((C.shape[0], dim, dim))
        diag = np.zeros((C.shape[0], dim))
        for m, w in enumerate(self.terms_):
            if "X" in w:
                j = w.index("X")
                H[:, idx ^ (1 << (n - 1 - j)), idx] += C[:, m][:, None]
            else:
                diag += C[:, m][:, None] * z_diagonal(w)
        H[:, idx, idx] += diag
        return H

    def observable_diagonal(self) -> np.ndarray:
        return _z_diags(range(self.n_visible_), self.n_qubits_).mean(axis=0)

    def thermal_expectation(self, C, with_grad: bool = True):
        """``<O>`` per row and, optionally, its derivative w.r.t. each coefficient."""
        n, T = self.n_qubits_, float(self.temperature)
        dim = 2**n
        evals, U = np.linalg.eigh(self.hamiltonians(C))
        w = np.exp(-(evals - evals[:, :1]) / T)
        Z = w.sum(axis=1)
        o = self.observable_diagonal()
        Ot = np.einsum("bki,k,bkj->bij", U, o, U)
        expO = np.einsum("bi,bii->b", w, Ot) / Z
        if not with_grad:
            return expO, None
        dE = evals[:, :, None] - evals[:, None, :]
        dw = w[:, :, None] - w[:, None, :]
        close = np.abs(dE) < 1e-10
        F = np.where(close, -(w[:, :, None] + w[:, None, :]) / (2 * T), dw / np.where(close, 1.0, dE))
        A = (Ot - expO[:, None, None] * np.eye(dim)) * F / Z[:, None, None]
        M = U @ A @ np.transpose(U, (0, 2, 1))
        idx = np.arange(dim)
        grads = np.zeros(C.shape)
        Md = M[:, idx, idx]
        for m, word in enumerate(self.terms_):
            if "X" in word:
                j = word.index("X")
                grads[:, m] = M[:, idx ^ (1 << (n - 1 - j)), idx].sum(axis=1)
            else:
                grads[:, m] = Md @ z_diagonal(word)
        return expO, grads

    def gibbs_states(self, X) -> np.ndarray:
        """Dense thermal states for already preprocessed inputs, ``(B, 2**n, 2**n)``."""
        from ..sim import gibbs_matrix

        C = self.coefficients(self.params_, np.atleast_2d(X))
        return np.array([gibbs_matrix(H, float(self.temperature)) for H in self.hamiltonians(C)])

    def loss_and_grad(self, params, X, y, route: str = "exact"):
        C = self.coefficients(params, X)
        expO, dO = self.thermal_expectation(C)
        P = np.clip((1 + expO) / 2, 1e-12, 1 - 1e-12)
        y01 = (y + 1) / 2
        loss = float(-np.mean(y01 * np.log(P) + (1 - y01) * np.log(1 - P)))
        dP = (-y01 / P + (1 - y01) / (1 - P)) / y.size
        dC = (dP / 2)[:, None] * dO
        return loss, (dC.T @ X).ravel()

    def _decision_params(self, params, X):
        return self.thermal_expectation(self.coefficients(params, X), with_grad=False)[0]


class QuantumBoltzmannMachineSeparable(QuantumBoltzmannMachine):
    """Boltzmann machine without couplings; the Gibbs state factorises per qubit."""

    kind = "QuantumBoltzmannMachineSeparable"
    separable = True

    def thermal_expectation(self, C, with_grad: bool = True):
        n, T = self.n_qubits_, float(self.temperature)
        a, b = C[:, :n], C[:, n:2 * n]
        r = np.sqrt(a**2 + b**2)
        small = r < 1e-8
        rs = np.where(small, 1.0, r)
        t = np.tanh(rs / T)
        # <Z> of exp(-(a Z + b X)/T) / Z is -a tanh(r/T) / r
        g = np.where(small, -a / T, -a * t / rs)
        v = self.n_visible_
        expO = g[:, :v].mean(axis=1)
        if not with_grad:
            return expO, None
        q = (1 - t**2) / (T * rs) - t / rs**2  # d/dr [tanh(r/T) / r] / 1
        ga = np.where(small, -1.0 / T, -t / rs - a * q * a / rs)
        gb = np.where(small, 0.0, -a * q * b / rs)
        grads = np.zeros(C.shape)
        grads[:, :v] = ga[:, :v] / v
        grads[:, n:n + v] = gb[:, :v] / v
        return expO, grads


# ---------------------------------------------------------------------------

PAIRS_PER_SET = 16
REFERENCE_PER_CLASS = 32


class QuantumMetricLearner(GradientModel):
    """Trainable QAOA-style embedding on ``d + 1`` qubits trained on state overlaps.

    Cost per step: ``1 + mean F_AB - 0.5 mean F_AA - 0.5 mean F_BB`` over
    random pairs, with ``F`` the fidelity of two embedded points. Prediction
    compares mean fidelity to stored reference points of each class.
    """

    kind = "QuantumMetricLearner"
    defaults = {"learning_rate": 0.01, "n_layers": 1}
    variants = ("no_entanglement",)
    batch_size = PAIRS_PER_SET

    def required_qubits(self, d):
        return d + 1

    def _init_params(self, X, y):
        d = X.shape[1]
        _check_register(d + 1)
        self.n_qubits_ = d + 1
        self.circuit_ = build_template("qaoa_embedding", n_layers=self.n_layers, n_features=d,
                                       entangle=self.variant != "no_entanglement")
        return init_angles(self.rng_, self.circuit_.n_params)

    def embed(self, params, X) -> np.ndarray:
        return simulate_angles(self.circuit_, self.circuit_.angles(X, params))

    @staticmethod
    def sample_pairs(y, rng, k: int = PAIRS_PER_SET):
        """``(i, j, weight)`` triples: ``k`` same-class pairs per class and ``k`` mixed pairs."""
        A, B = np.flatnonzero(y < 0), np.flatnonzero(y > 0)
        if A.size == 0 or B.size == 0:
            raise ModelError("metric learning needs training points from both classes")
        first = np.concatenate([rng.choice(A, k), rng.choice(B, k), rng.choice(A, k)])
        second = np.concatenate([rng.choice(A, k), rng.choice(B, k), rng.choice(B, k)])
        weight = np.concatenate([np.full(k, -0.5 / k), np.full(k, -0.5 / k), np.full(k, 1.0 / k)])
        return first, second, weight

    def pair_loss_and_grad(self, params, X, pairs, route: str = "adjoint"):
        first, second, weight = pairs
        pts = np.concatenate([X[first], X[second]])
        angles = self.circuit_.angles(pts, params)
        psi = simulate_angles(self.circuit_, angles)
        m = first.size
        a, b = psi[:m], psi[m:]
        ov = np.einsum("bi,bi->b", np.conj(a), b)
        loss = float(1.0 + np.sum(weight * np.abs(ov) ** 2))
        partner = np.concatenate([b, a])
        w2 = np.concatenate([weight, weight])
        if route == "adjoint":
            ov_all = np.einsum("bi,bi->b", np.conj(partner), psi)
            cot = w2[:, None] * partner * ov_all[:, None]
            d_angles = adjoint_angles(self.circuit_, angles, psi, cot)
        else:
            def value(p):
                return w2 * np.abs(np.einsum("bi,bi->b", np.conj(partner), p)) ** 2
            d_angles = shift_angle_grads(self.circuit_, angles, value)
        grad, _ = self.circuit_.compiled.backprop_angles(d_angles, pts, params)
        return loss, grad

    def loss_and_grad(self, params, X, y, route: str = "adjoint"):
        return self.pair_loss_and_grad(params, X, self.sample_pairs(y, np.random.default_rng(0)), route)

    def _fit(self, X, y):
        params = self._init_params(X, y)

        def objective(p, idx):
            return self.pair_loss_and_grad(p, X, self.sample_pairs(y, self.rng_))

        result = minimize(objective, params, learning_rate=self.learning_rate, n_samples=len(y),
                          batch_size=self.batch_size, max_steps=self.max_steps, rng=self.rng_)
        self.params_ = result.params
        self.loss_history_ = result.loss_history
        self.converged_ = result.converged
        A, B = np.flatnonzero(y < 0), np.flatnonzero(y > 0)
        self.reference_negative_ = X[self.rng_.choice(A, min(REFERENCE_PER_CLASS, A.size), replace=False)]
        self.reference_positive_ = X[self.rng_.choice(B, min(REFERENCE_PER_CLASS, B.size), replace=False)]

    def fidelity_score(self, params, X) -> np.ndarray:
        phi = self.embed(params, X)
        pos = np.abs(np.conj(self.embed(params, self.reference_positive_)) @ phi.T) ** 2
        neg = np.abs(np.conj(self.embed(params, self.reference_negative_)) @ phi.T) ** 2
        return pos.mean(axis=0) - neg.mean(axis=0)

    def _decision_params(self, params, X):
        return self.fidelity_score(params, X)
