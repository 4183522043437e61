"""Image classifiers: quanvolutional features, WeiNet, and the classical CNN."""

from __future__ import annotations

import itertools

import numpy as np

from ..autodiff import minimize
from ..classical import MinMaxScaler, cnn_fit, log_sigmoid, sigmoid
from ..sim import (
    Angle,
    Circuit,
    StateVector,
    amplitude_embed_batch,
    build_template,
    gate,
    most_probable_bitstring,
    simulate,
    z_diagonal,
    pauli_word,
)
from .base import Classifier, GradientModel, ModelError, init_weights


def image_side(d: int) -> int:
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ModelError(f"{d} features do not form a square image")
    return side


class ConvolutionalNeuralNetwork(Classifier):
    """Two convolution + max-pool stages, a 128-unit dense layer and one logit."""

    kind = "ConvolutionalNeuralNetwork"
    defaults = {"learning_rate": 0.001, "kernel_shape": 3}
    preprocessing = None

    def _fit(self, X, y):
        side = image_side(X.shape[1])
        self.model_ = cnn_fit(X, y, kernel_shape=self.kernel_shape, learning_rate=self.learning_rate,
                              batch_size=self.batch_size, max_steps=self.max_steps, rng=self.rng_,
                              image_shape=(1, side, side))
        self.loss_history_ = self.model_.loss_history
        self.converged_ = self.model_.converged

    def _decision(self, X):
        return self.model_.logits(X)


class QuanvolutionalNeuralNetwork(Classifier):
    """Fixed random quantum filters on thresholded windows, then the CNN.

    Pixels are min-max scaled to [-1, 1] and mapped to ``pi`` if positive,
    else ``0``. Each of ``n_qchannels`` filters encodes an ``n_q x n_q`` window
    with ``RY`` on ``n_q**2`` qubits, applies a seeded random layer, and
    outputs the number of ones in the most probable bitstring. Windows slide
    with stride 1 and no padding.
    """

    kind = "QuanvolutionalNeuralNetwork"
    defaults = {"learning_rate": 0.001, "n_qchannels": 1, "qkernel_shape": 2, "kernel_shape": 3}
    variants = ("no_entanglement",)
    preprocessing = None

    def required_qubits(self, d):
        return self.qkernel_shape**2

    def filter_circuit(self, channel: int) -> Circuit:
        nq = self.qkernel_shape**2
        enc = Circuit(nq, [gate("RY", q, Angle.feat(q)) for q in range(nq)], 0, nq)
        layer = build_template("random_layers", nq, 1, seed=(self.random_state, channel),
                               entangle=self.variant != "no_entanglement")
        return enc.then(layer)

    def filter_tables(self) -> np.ndarray:
        """Output of every filter for every binary window, ``(channels, 2**(n_q**2))``."""
        nq = self.qkernel_shape**2
        windows = np.array(list(itertools.product([0.0, np.pi], repeat=nq)))
        tables = np.zeros((self.n_qchannels, len(windows)), dtype=int)
        for c in range(self.n_qchannels):
            psi = simulate(self.filter_circuit(c), windows)
            for i, amp in enumerate(psi):
                tables[c, i] = most_probable_bitstring(StateVector(nq, amp)).count("1")
        return tables

    def binarize(self, X) -> np.ndarray:
        return np.where(self.pixel_scaler_.transform(X) > 0, np.pi, 0.0)

    def quantum_features(self, X) -> np.ndarray:
        """Filter outputs, shape ``(B, channels, side - n_q + 1, side - n_q + 1)``."""
        side = image_side(X.shape[1])
        q = self.qkernel_shape
        if side < q:
            raise ModelError(f"{side}x{side} image is smaller than the {q}x{q} quantum kernel")
        bits = (self.binarize(X) > 0).astype(np.int64).reshape(len(X), side, side)
        out = side - q + 1
        code = np.zeros((len(X), out, out), dtype=np.int64)
        for r in range(q):
            for c in range(q):
                code = code * 2 + bits[:, r:r + out, c:c + out]
        return self.tables_[:, code].transpose(1, 0, 2, 3).astype(float)

    def _fit(self, X, y):
        self.pixel_scaler_ = MinMaxScaler(-1.0, 1.0).fit(X)
        self.tables_ = self.filter_tables()
        feats = self.quantum_features(X)
        shape = feats.shape[1:]
        self.model_ = cnn_fit(feats.reshape(len(X), -1), y, kernel_shape=self.kernel_shape,
                              learning_rate=self.learning_rate, batch_size=self.batch_size,
                              max_steps=self.max_steps, rng=self.rng_, image_shape=shape)
        self.loss_history_ = self.model_.loss_history
        self.converged_ = self.model_.converged

    def _decision(self, X):
        return self.model_.logits(self.quantum_features(X).reshape(len(X), -1))


FILTERS = {
    "edge_detect": np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]]),
    "smooth": np.full((3, 3), 1.0 / 9.0),
    "sharpen": np.array([[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]]),
}
SHIFTS = tuple(itertools.product((-1, 0, 1, 2), repeat=2))


def filter_unitary(kernel: np.ndarray, side: int) -> np.ndarray:
    """Unitary (polar) part of the periodic convolution with ``kernel`` on a ``side x side`` image.

    The convolution is diagonal in the 2D Fourier basis; each eigenvalue is
    replaced by its phase (zero eigenvalues by 1).
    """
    k = kernel.shape[0]
    c = k // 2
    lam = np.zeros((side, side), dtype=complex)
    u = np.arange(side)
    for a in range(k):
        for b in range(k):
            lam += kernel[a, b] * np.exp(-2j * np.pi * (np.outer(u, np.ones(side)) * (a - c)
                                                        + np.outer(np.ones(side), u) * (b - c)) / side)
    mag = np.abs(lam)
    phase = np.where(mag > 1e-12, lam / np.where(mag > 1e-12, mag, 1.0), 1.0)
    F = np.fft.fft(np.eye(side), norm="ortho")
    F2 = np.kron(F, F)
    return F2.conj().T @ np.diag(phase.ravel()) @ F2


def shift_unitary(side: int, dr: int, dc: int) -> np.ndarray:
    """Cyclic image shift ``(r, c) -> (r + dr, c + dc)`` as a permutation matrix."""
    idx = np.arange(side * side).reshape(side, side)
    target = np.roll(np.roll(idx, dr, axis=0), dc, axis=1).ravel()
    P = np.zeros((side * side, side * side))
    P[target, idx.ravel()] = 1.0
    return P


class WeiNet(GradientModel):
    """Amplitude-encoded image, softmax mixture of 16 shifted filter unitaries,
    two wires traced out, ``<Z>`` and ``<ZZ>`` correlators into a logistic unit.

    The image register has ``2k`` wires (row bits, then column bits); the
    least significant row and column wires are traced out. Parameter layout:
    16 mixture logits, the linear weights, then the bias.
    """

    kind = "WeiNet"
    defaults = {"learning_rate": 0.001, "filter_type": "edge_detect"}
    preprocessing = None

    def required_qubits(self, d):
        return int(round(np.log2(d)))

    def _setup(self, d):
        side = image_side(d)
        k = int(round(np.log2(side)))
        if side < 2 or 2**k != side:
            raise ModelError("WeiNet needs a pixel count that is a power of 4")
        if self.filter_type not in FILTERS:
            raise ModelError(f"unknown filter type {self.filter_type!r}")
        self.side_, self.n_qubits_ = side, 2 * k
        U = filter_unitary(FILTERS[self.filter_type], side)
        self.unitaries_ = np.array([shift_unitary(side, dr, dc) @ U for dr, dc in SHIFTS])
        n = 2 * k
        self.kept_wires_ = [w for w in range(n) if w not in (k - 1, n - 1)]
        kept = self.kept_wires_
        words = [pauli_word({w: "Z"}, n) for w in kept]
        words += [pauli_word({a: "Z", b: "Z"}, n) for i, a in enumerate(kept) for b in kept[i + 1:]]
        self.words_ = words
        self.diags_ = np.array([z_diagonal(w) for w in words])

    def branch_features(self, X) -> np.ndarray:
        """Correlators of every pure branch ``Q_i |x>``, shape ``(B, 16, K)``."""
        psi = amplitude_embed_batch(X, self.n_qubits_)
        out = np.einsum("sij,bj->bsi", self.unitaries_, psi)
        return (np.abs(out) ** 2) @ self.diags_.T

    def _init_params(self, X, y):
        self._setup(X.shape[1])
        K = self.diags_.shape[0]
        return np.concatenate([init_weights(self.rng_, 16), init_weights(self.rng_, K), np.zeros(1)])

    @staticmethod
    def mixture(logits) -> np.ndarray:
        e = np.exp(logits - logits.max())
        return e / e.sum()

    def _features(self, params, Phi):
        p = self.mixture(params[:16])
        return p, np.einsum("s,bsk->bk", p, Phi)

    def _fit(self, X, y):
        params = self._init_params(X, y)
        Phi = self.branch_features(X)

        def objective(q, idx):
            return self._loss_from_branches(q, Phi[idx], y[idx])

        result = minimize(objective, params, learning_rate=self.learning_rate, n_samples=len(y),
                          batch_size=self.batch_size, max_steps=self.max_steps, rng=self.rng_)
        self.params_ = result.params
        self.loss_history_ = result.loss_history
        self.converged_ = result.converged

    def _loss_from_branches(self, params, Phi, y):
        p, feats = self._features(params, Phi)
        v, c = params[16:-1], params[-1]
        logit = feats @ v + c
        loss = float(-log_sigmoid(y * logit).mean())
        dlogit = -y * sigmoid(-y * logit) / y.size
        dfeat = np.outer(dlogit, v)
        dp = np.einsum("bk,bsk->s", dfeat, Phi)
        grad = np.concatenate([p * (dp - p @ dp), feats.T @ dlogit, [dlogit.sum()]])
        return loss, grad

    def loss_and_grad(self, params, X, y):
        return self._loss_from_branches(params, self.branch_features(X), y)

    def _decision_params(self, params, X):
        _, feats = self._features(params, self.branch_features(X))
        return feats @ params[16:-1] + params[-1]

    def reduced_state(self, X, params=None) -> np.ndarray:
        """Mixed state of the kept wires, ``(B, 2**(n-2), 2**(n-2))``."""
        params = self.params_ if params is None else params
        p = self.mixture(params[:16])
        psi = amplitude_embed_batch(self._prepare(X), self.n_qubits_)
        branches = np.einsum("sij,bj->bsi", self.unitaries_, psi)
        n, k = self.n_qubits_, self.n_qubits_ // 2
        t = branches.reshape(len(psi), 16, *([2] * n))
        traced = (k - 1, n - 1)
        kept = [w for w in range(n) if w not in traced]
        t = np.moveaxis(t, [2 + w for w in kept] + [2 + w for w in traced], range(2, 2 + n))
        t = t.reshape(len(psi), 16, 2 ** len(kept), 4)
        return np.einsum("s,bsit,bsjt->bij", p, t, np.conj(t))
