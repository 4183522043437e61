"""Dense state-vector simulation of the circuits used by the benchmark models.

Conventions
-----------
* Wire 0 is the most significant bit of a basis index, so the amplitude of
  ``|b_0 b_1 ... b_{n-1}>`` sits at ``int("b_0 b_1 ... b_{n-1}", 2)``.
* Rotations follow ``R_P(a) = exp(-i a P / 2)``; a Pauli-product rotation on
  wires ``w`` with word ``P`` is ``exp(-i a P / 2)``.
* ``Rot(phi, theta, omega) = RZ(omega) RY(theta) RZ(phi)`` (``phi`` acts first).

States are simulated in batches: an array of shape ``(B, 2**n)`` where each row
may carry its own gate angles. The same machinery runs the adjoint (reverse)
pass used for training in :mod:`qmlbench.autodiff`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_STATE_QUBITS = 20
MAX_DENSITY_QUBITS = 12

_SQRT2 = np.sqrt(2.0)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

ROTATIONS = ("RX", "RY", "RZ")
CONTROLLED_ROTATIONS = ("CRX", "CRY", "CRZ")
FIXED_GATES = ("H", "X", "CNOT", "CZ")
GATE_KINDS = ROTATIONS + ("Rot", "CRot", "PPR") + FIXED_GATES + CONTROLLED_ROTATIONS

_N_ANGLES = {"RX": 1, "RY": 1, "RZ": 1, "Rot": 3, "CRot": 3, "PPR": 1,
             "CRX": 1, "CRY": 1, "CRZ": 1}
_N_WIRES = {"RX": 1, "RY": 1, "RZ": 1, "Rot": 1, "H": 1, "X": 1,
            "CNOT": 2, "CZ": 2, "CRot": 2, "CRX": 2, "CRY": 2, "CRZ": 2}


class SimulationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.n_qubits < 1:
            raise SimulationError("a state needs at least one qubit")
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise SimulationError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = 2**self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise SimulationError(f"expected a {dim}x{dim} matrix, got {self.matrix.shape}")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-10:
            raise SimulationError("density matrix is not Hermitian")
        if abs(np.trace(self.matrix) - 1) > 1e-10:
            raise SimulationError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(self.matrix).min() < -1e-10:
            raise SimulationError("density matrix has a negative eigenvalue")

    def expectation(self, obs: "Observable") -> float:
        return float(np.real(np.trace(obs.matrix() @ self.matrix)))


@dataclass(frozen=True)
class Angle:
    """How one gate angle is bound.

    ``angle = const + coeff * x[feature] * x[feature2] * theta[scale] + theta[param]``
    where absent indices drop their factor (or their additive term).
    """

    const: float = 0.0
    feature: int | None = None
    feature2: int | None = None
    coeff: float = 1.0
    scale: int | None = None
    param: int | None = None

    @classmethod
    def literal(cls, value: float) -> "Angle":
        return cls(const=float(value))

    @classmethod
    def feat(cls, index: int, coeff: float = 1.0) -> "Angle":
        return cls(feature=index, coeff=coeff)

    @classmethod
    def par(cls, index: int) -> "Angle":
        return cls(param=index)


@dataclass(frozen=True)
class GateOp:
    kind: str
    wires: tuple[int, ...]
    angles: tuple[Angle, ...] = ()
    pauli: str | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        if len(set(self.wires)) != len(self.wires):
            raise SimulationError(f"{self.kind} wires must be distinct, got {self.wires}")
        if self.kind == "PPR":
            if self.pauli is None or len(self.pauli) != len(self.wires):
                raise SimulationError("PauliProductRotation needs one Pauli letter per wire")
            if set(self.pauli) - set("XYZ"):
                raise SimulationError(f"bad Pauli word {self.pauli!r}")
        elif len(self.wires) != _N_WIRES[self.kind]:
            raise SimulationError(f"{self.kind} acts on {_N_WIRES[self.kind]} wire(s)")
        if len(self.angles) != _N_ANGLES.get(self.kind, 0):
            raise SimulationError(f"{self.kind} takes {_N_ANGLES.get(self.kind, 0)} angle(s)")


def gate(kind: str, wires, *angles, pauli: str | None = None) -> GateOp:
    """Shorthand constructor; bare numbers become literal angles."""
    if isinstance(wires, int):
        wires = (wires,)
    bound = tuple(a if isinstance(a, Angle) else Angle.literal(a) for a in angles)
    return GateOp(kind, tuple(int(w) for w in wires), bound, pauli)


@dataclass
class Circuit:
    """Ordered gate list acting on ``|0...0>`` (or a supplied initial state)."""

    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    n_params: int = 0
    n_features: int = 0

    def __post_init__(self):
        self.ops = list(self.ops)
        self.validate()
        self._compiled = None

    def validate(self):
        for op in self.ops:
            if max(op.wires) >= self.n_qubits or min(op.wires) < 0:
                raise SimulationError(f"{op.kind} on wires {op.wires} outside {self.n_qubits} qubits")
            for a in op.angles:
                for idx in (a.param, a.scale):
                    if idx is not None and not 0 <= idx < self.n_params:
                        raise SimulationError(f"parameter index {idx} outside [0, {self.n_params})")
                for idx in (a.feature, a.feature2):
                    if idx is not None and not 0 <= idx < self.n_features:
                        raise SimulationError(f"feature index {idx} outside [0, {self.n_features})")

    def then(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise SimulationError("cannot compose circuits on different registers")
        return Circuit(self.n_qubits, self.ops + other.ops,
                       max(self.n_params, other.n_params),
                       max(self.n_features, other.n_features))

    def without_entanglement(self) -> "Circuit":
        """Drop every multi-qubit operation."""
        ops = [op for op in self.ops if len(op.wires) == 1]
        return Circuit(self.n_qubits, ops, self.n_params, self.n_features)

    @property
    def compiled(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled

    def angles(self, features, params) -> np.ndarray:
        """Bound angles, shape ``(B, n_slots)``."""
        return self.compiled.bind(features, params)


@dataclass
class Observable:
    terms: list[tuple[float, str]]

    def __post_init__(self):
        self.terms = [(float(c), w.upper()) for c, w in self.terms]
        if not self.terms:
            raise SimulationError("an observable needs at least one term")
        lengths = {len(w) for _, w in self.terms}
        if len(lengths) != 1:
            raise SimulationError("Pauli words must all have the same length")
        for c, w in self.terms:
            if not np.isfinite(c):
                raise SimulationError("observable coefficients must be finite")
            if set(w) - set("IXYZ"):
                raise SimulationError(f"bad Pauli word {w!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][1])

    @classmethod
    def z(cls, wire: int, n_qubits: int, coeff: float = 1.0) -> "Observable":
        return cls([(coeff, pauli_word({wire: "Z"}, n_qubits))])

    @property
    def is_diagonal(self) -> bool:
        return all(set(w) <= {"I", "Z"} for _, w in self.terms)

    def bound(self) -> float:
        return float(sum(abs(c) for c, _ in self.terms))

    def diagonal(self) -> np.ndarray:
        if not self.is_diagonal:
            raise SimulationError("observable is not diagonal")
        return sum(c * z_diagonal(w) for c, w in self.terms)

    def matrix(self) -> np.ndarray:
        return sum(c * pauli_matrix(w) for c, w in self.terms)


def pauli_word(letters: dict[int, str], n_qubits: int) -> str:
    return "".join(letters.get(i, "I") for i in range(n_qubits))


def pauli_matrix(word: str) -> np.ndarray:
    return reduce(np.kron, [PAULI[p] for p in word])


def z_diagonal(word: str) -> np.ndarray:
    """Diagonal of a Z/I word, as a real vector."""
    n = len(word)
    idx = np.arange(2**n)
    out = np.ones(2**n)
    for w, p in enumerate(word):
        if p == "Z":
            bit = (idx >> (n - 1 - w)) & 1
            out *= 1 - 2 * bit
        elif p != "I":
            raise SimulationError("z_diagonal only accepts I/Z words")
    return out


# ---------------------------------------------------------------------------
# Batched engine
# ---------------------------------------------------------------------------


class _Compiled:
    """Primitive op list plus vectorised angle binding for one circuit."""

    def __init__(self, circuit: Circuit):
        self.n = circuit.n_qubits
        self.n_params = circuit.n_params
        self.n_features = circuit.n_features
        prims = []
        slots: list[Angle] = []

        def slot(a: Angle) -> int:
            slots.append(a)
            return len(slots) - 1

        for op in circuit.ops:
            k = op.kind
            if k in ROTATIONS or k in CONTROLLED_ROTATIONS:
                prims.append((k, op.wires, slot(op.angles[0]), None))
            elif k == "Rot":
                phi, theta, omega = op.angles
                prims.append(("RZ", op.wires, slot(phi), None))
                prims.append(("RY", op.wires, slot(theta), None))
                prims.append(("RZ", op.wires, slot(omega), None))
            elif k == "CRot":
                phi, theta, omega = op.angles
                prims.append(("CRZ", op.wires, slot(phi), None))
                prims.append(("CRY", op.wires, slot(theta), None))
                prims.append(("CRZ", op.wires, slot(omega), None))
            elif k == "PPR":
                prims.append(("PPR", op.wires, slot(op.angles[0]), op.pauli))
            else:
                prims.append((k, op.wires, None, None))
        self.prims = prims
        self.slots = slots
        A = len(slots)
        self.n_slots = A
        self.const = np.array([a.const for a in slots], dtype=float)
        self.coeff = np.array([a.coeff for a in slots], dtype=float)
        self.feat = np.array([-1 if a.feature is None else a.feature for a in slots], dtype=int)
        self.feat2 = np.array([-1 if a.feature2 is None else a.feature2 for a in slots], dtype=int)
        self.scale = np.array([-1 if a.scale is None else a.scale for a in slots], dtype=int)
        self.param = np.array([-1 if a.param is None else a.param for a in slots], dtype=int)
        P, d = max(self.n_params, 1), max(self.n_features, 1)
        self._param_onehot = np.zeros((A, P))
        self._scale_onehot = np.zeros((A, P))
        self._feat_onehot = np.zeros((A, d))
        self._feat2_onehot = np.zeros((A, d))
        for i in range(A):
            if self.param[i] >= 0:
                self._param_onehot[i, self.param[i]] = 1.0
            if self.scale[i] >= 0:
                self._scale_onehot[i, self.scale[i]] = 1.0
            if self.feat[i] >= 0:
                self._feat_onehot[i, self.feat[i]] = 1.0
            if self.feat2[i] >= 0:
                self._feat2_onehot[i, self.feat2[i]] = 1.0
        self._has_feat = self.feat >= 0
        self._has_feat2 = self.feat2 >= 0
        self._has_scale = self.scale >= 0
        self._has_param = self.param >= 0
        self._cache = {}

    # -- angle binding -------------------------------------------------------

    def _factors(self, X, params):
        B = X.shape[0]
        fx = np.zeros((B, self.n_slots))
        if self._has_feat.any():
            fx[:, self._has_feat] = X[:, self.feat[self._has_feat]]
        fx2 = np.ones((B, self.n_slots))
        if self._has_feat2.any():
            fx2[:, self._has_feat2] = X[:, self.feat2[self._has_feat2]]
        sx = np.ones(self.n_slots)
        if self._has_scale.any():
            sx[self._has_scale] = params[self.scale[self._has_scale]]
        return fx, fx2, sx

    def bind(self, features, params) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if X.shape[1] != self.n_features and not (self.n_features == 0 and X.shape[1] == 0):
            raise SimulationError(f"circuit expects {self.n_features} features, got {X.shape[1]}")
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.n_params:
            raise SimulationError(f"circuit expects {self.n_params} parameters, got {params.size}")
        fx, fx2, sx = self._factors(X, params)
        theta = np.zeros(self.n_slots)
        if self._has_param.any():
            theta[self._has_param] = params[self.param[self._has_param]]
        return self.const + self.coeff * fx * fx2 * sx + theta

    def backprop_angles(self, d_angles, features, params):
        """Chain angle gradients ``(B, A)`` to (params ``(P,)``, features ``(B, d)``)."""
        X = np.atleast_2d(np.asarray(features, dtype=float))
        params = np.asarray(params, dtype=float).ravel()
        fx, fx2, sx = self._factors(X, params)
        g_param = d_angles.sum(axis=0) @ self._param_onehot
        g_scale = (d_angles * self.coeff * fx * fx2).sum(axis=0) @ self._scale_onehot
        d_params = (g_param + g_scale)[: self.n_params]
        base = d_angles * self.coeff * sx
        d_feat = (base * fx2) @ self._feat_onehot + (base * fx) @ self._feat2_onehot
        return d_params, d_feat[:, : self.n_features]

    # -- helpers ------------------------------------------------------------

    def perm(self, kind, wires):
        key = (kind, wires)
        if key not in self._cache:
            n = self.n
            idx = np.arange(2**n)
            bits = lambda w: (idx >> (n - 1 - w)) & 1  # noqa: E731
            if kind == "X":
                self._cache[key] = idx ^ (1 << (n - 1 - wires[0]))
            elif kind == "CNOT":
                c, t = wires
                self._cache[key] = np.where(bits(c) == 1, idx ^ (1 << (n - 1 - t)), idx)
            elif kind == "CZ":
                c, t = wires
                self._cache[key] = 1.0 - 2.0 * (bits(c) & bits(t))
        return self._cache[key]

    def pauli_action(self, wires, word):
        """Permutation and phase so that ``(P psi)[i] = phase[i] * psi[perm[i]]``."""
        key = ("P", wires, word)
        if key not in self._cache:
            n = self.n
            idx = np.arange(2**n)
            perm = idx.copy()
            phase = np.ones(2**n, dtype=complex)
            for w, p in zip(wires, word):
                mask = 1 << (n - 1 - w)
                bit = (idx & mask) > 0
                if p == "X":
                    perm = perm ^ mask
                elif p == "Y":
                    # Y|0> = i|1>, Y|1> = -i|0>; output bit b receives from 1-b
                    perm = perm ^ mask
                    phase = phase * np.where(bit, 1j, -1j)
                elif p == "Z":
                    phase = phase * np.where(bit, -1.0, 1.0)
            self._cache[key] = (perm, phase)
        return self._cache[key]

    def control_mask(self, c):
        key = ("ctrl", c)
        if key not in self._cache:
            idx = np.arange(2**self.n)
            self._cache[key] = ((idx >> (self.n - 1 - c)) & 1).astype(bool)
        return self._cache[key]


def _split(psi, n, w):
    B = psi.shape[0]
    v = psi.reshape(B, 2**w, 2, 2 ** (n - w - 1))
    return v[:, :, 0, :], v[:, :, 1, :]


def _rot1(psi, n, w, kind, a):
    """Apply a single-qubit rotation with per-row angles ``a`` (shape ``(B,)``)."""
    a0, a1 = _split(psi, n, w)
    c = np.cos(a / 2)[:, None, None]
    s = np.sin(a / 2)[:, None, None]
    out = np.empty_like(psi).reshape(psi.shape[0], 2**w, 2, 2 ** (n - w - 1))
    if kind == "RY":
        out[:, :, 0, :] = c * a0 - s * a1
        out[:, :, 1, :] = s * a0 + c * a1
    elif kind == "RX":
        out[:, :, 0, :] = c * a0 - 1j * s * a1
        out[:, :, 1, :] = -1j * s * a0 + c * a1
    else:
        e = np.exp(-0.5j * a)[:, None, None]
        out[:, :, 0, :] = e * a0
        out[:, :, 1, :] = np.conj(e) * a1
    return out.reshape(psi.shape)


def _hadamard(psi, n, w):
    a0, a1 = _split(psi, n, w)
    out = np.empty_like(psi).reshape(psi.shape[0], 2**w, 2, 2 ** (n - w - 1))
    out[:, :, 0, :] = (a0 + a1) / _SQRT2
    out[:, :, 1, :] = (a0 - a1) / _SQRT2
    return out.reshape(psi.shape)


def _generator_action(psi, n, kind, wires, word, comp):
    """``G psi`` for the generator of a rotation primitive."""
    if kind in ROTATIONS:
        return _apply_pauli(psi, comp, (wires[0],), kind[1])
    if kind == "PPR":
        return _apply_pauli(psi, comp, wires, word)
    c, t = wires
    g = _apply_pauli(psi, comp, (t,), kind[2])
    return g * comp.control_mask(c)


def _apply_pauli(psi, comp, wires, word):
    perm, phase = comp.pauli_action(tuple(wires), word)
    return psi[:, perm] * phase


def _apply_prim(psi, comp, prim, angles, inverse=False):
    kind, wires, s, word = prim
    n = comp.n
    if kind in ROTATIONS:
        a = angles[:, s]
        return _rot1(psi, n, wires[0], kind, -a if inverse else a)
    if kind == "PPR":
        a = angles[:, s]
        a = -a if inverse else a
        return np.cos(a / 2)[:, None] * psi - 1j * np.sin(a / 2)[:, None] * _apply_pauli(psi, comp, wires, word)
    if kind in CONTROLLED_ROTATIONS:
        a = angles[:, s]
        c, t = wires
        rotated = _rot1(psi, n, t, "R" + kind[2], -a if inverse else a)
        mask = comp.control_mask(c)
        return np.where(mask, rotated, psi)
    if kind == "H":
        return _hadamard(psi, n, wires[0])
    if kind in ("X", "CNOT"):
        return psi[:, comp.perm(kind, wires)]
    if kind == "CZ":
        return psi * comp.perm(kind, wires)
    raise SimulationError(kind)


def initial_batch(n_qubits: int, batch: int) -> np.ndarray:
    psi = np.zeros((batch, 2**n_qubits), dtype=complex)
    psi[:, 0] = 1.0
    return psi


def simulate_angles(circuit: Circuit, angles: np.ndarray, initial: np.ndarray | None = None) -> np.ndarray:
    """Run the circuit on a batch with explicit bound angles ``(B, n_slots)``."""
    comp = circuit.compiled
    angles = np.atleast_2d(angles)
    B = angles.shape[0]
    if circuit.n_qubits > MAX_STATE_QUBITS:
        raise SimulationError(f"{circuit.n_qubits} qubits exceeds the dense cap of {MAX_STATE_QUBITS}")
    psi = initial_batch(circuit.n_qubits, B) if initial is None else np.array(initial, dtype=complex)
    for prim in comp.prims:
        psi = _apply_prim(psi, comp, prim, angles)
    return psi


def simulate(circuit: Circuit, features=None, params=None, initial: np.ndarray | None = None) -> np.ndarray:
    """Batched simulation. ``features`` has shape ``(B, d)``; returns ``(B, 2**n)``."""
    features = np.zeros((1, 0)) if features is None else np.atleast_2d(np.asarray(features, dtype=float))
    if initial is not None and features.shape[0] == 1 and np.atleast_2d(initial).shape[0] > 1:
        features = np.repeat(features, np.atleast_2d(initial).shape[0], axis=0)
    params = np.zeros(0) if params is None else params
    return simulate_angles(circuit, circuit.angles(features, params), initial)


def adjoint_angles(circuit: Circuit, angles: np.ndarray, final: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Reverse pass: gradient of a real loss w.r.t. every bound angle.

    ``cotangent`` is ``dL/d conj(psi_final)`` (e.g. ``O psi`` for ``L = <psi|O|psi>``).
    Returns an array of shape ``(B, n_slots)``.
    """
    comp = circuit.compiled
    psi = np.array(final, dtype=complex)
    lam = np.array(cotangent, dtype=complex)
    grads = np.zeros((psi.shape[0], comp.n_slots))
    for prim in reversed(comp.prims):
        kind, wires, s, word = prim
        if s is not None:
            g_psi = _generator_action(psi, comp.n, kind, wires, word, comp)
            grads[:, s] = np.imag(np.einsum("bi,bi->b", np.conj(lam), g_psi))
        psi = _apply_prim(psi, comp, prim, angles, inverse=True)
        lam = _apply_prim(lam, comp, prim, angles, inverse=True)
    return grads


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def apply_circuit(circuit: Circuit, features=(), params=(), initial: StateVector | None = None) -> StateVector:
    """Run ``circuit`` on ``|0...0>`` with the given feature and parameter values."""
    features = np.asarray(features, dtype=float).ravel()
    params = np.asarray(params, dtype=float).ravel()
    if features.size != circuit.n_features:
        raise SimulationError(f"circuit expects {circuit.n_features} features, got {features.size}")
    if params.size != circuit.n_params:
        raise SimulationError(f"circuit expects {circuit.n_params} parameters, got {params.size}")
    init = None if initial is None else initial.amplitudes[None, :]
    psi = simulate(circuit, features[None, :], params, init)
    return StateVector(circuit.n_qubits, psi[0])


def circuit_unitary(circuit: Circuit, features=(), params=()) -> np.ndarray:
    """Dense matrix of the bound circuit (column j is the image of basis state j)."""
    dim = 2**circuit.n_qubits
    features = np.asarray(features, dtype=float).reshape(1, -1)
    angles = circuit.angles(features, params)
    cols = simulate_angles(circuit, np.repeat(angles, dim, axis=0), np.eye(dim, dtype=complex))
    return cols.T


def expectation_batch(psi: np.ndarray, obs: Observable) -> np.ndarray:
    if obs.is_diagonal:
        return (np.abs(psi) ** 2) @ obs.diagonal()
    n = obs.n_qubits
    comp = _Compiled(Circuit(n))
    total = np.zeros(psi.shape[0])
    for c, w in obs.terms:
        wires = tuple(i for i, p in enumerate(w) if p != "I")
        word = "".join(p for p in w if p != "I")
        ppsi = _apply_pauli(psi, comp, wires, word) if wires else psi
        total += c * np.real(np.einsum("bi,bi->b", np.conj(psi), ppsi))
    return total


def expectation(state: StateVector, obs: Observable) -> float:
    """``<psi|O|psi>`` for a Pauli-sum observable."""
    if state.n_qubits != obs.n_qubits:
        raise SimulationError(f"state has {state.n_qubits} qubits, observable {obs.n_qubits}")
    return float(expectation_batch(state.amplitudes[None, :], obs)[0])


def state_overlap(a: StateVector, b: StateVector) -> float:
    """Fidelity ``|<a|b>|**2`` of two pure states."""
    if a.n_qubits != b.n_qubits:
        raise SimulationError(f"overlap of {a.n_qubits}- and {b.n_qubits}-qubit states")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def amplitude_register_size(d: int) -> int:
    """Smallest n >= 1 with 2**n >= d."""
    return max(1, int(np.ceil(np.log2(max(d, 1)))))


def amplitude_embed_batch(X, n_qubits: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dim = 2**n_qubits
    if X.shape[1] == 0:
        raise SimulationError("cannot amplitude-embed an empty vector")
    if X.shape[1] > dim:
        raise SimulationError(f"{X.shape[1]} features do not fit in {n_qubits} qubits")
    out = np.full((X.shape[0], dim), 1.0 / dim)
    out[:, : X.shape[1]] = X
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out.astype(complex)


def amplitude_embed(x, n_qubits: int) -> StateVector:
    """Write ``x`` into the leading amplitudes, pad with ``1/2**n``, normalise."""
    x = np.asarray(x, dtype=float).ravel()
    return StateVector(n_qubits, amplitude_embed_batch(x[None, :], n_qubits)[0])


def sample_bitstrings(state: StateVector, shots: int, seed=None) -> list[str]:
    if shots < 1:
        raise SimulationError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    p = state.probabilities
    idx = rng.choice(p.size, size=shots, p=p / p.sum())
    return [format(i, f"0{state.n_qubits}b") for i in idx]


def most_probable_bitstring(state: StateVector) -> str:
    # np.argmax returns the first maximum, i.e. the lowest basis index on ties
    p = np.round(state.probabilities, 12)
    return format(int(np.argmax(p)), f"0{state.n_qubits}b")


def gibbs_state(hamiltonian: Observable, temperature: float) -> DensityMatrix:
    """``exp(-H/T) / Z`` through a Hermitian eigendecomposition."""
    if temperature <= 0:
        raise SimulationError("temperature must be positive")
    n = hamiltonian.n_qubits
    if n > MAX_DENSITY_QUBITS:
        raise SimulationError(f"{n} qubits exceeds the density-matrix cap of {MAX_DENSITY_QUBITS}")
    return DensityMatrix(n, gibbs_matrix(hamiltonian.matrix(), temperature))


def gibbs_matrix(H: np.ndarray, temperature: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(H)
    w = np.exp(-(evals - evals.min()) / temperature)
    w /= w.sum()
    rho = (evecs * w) @ evecs.conj().T
    return (rho + rho.conj().T) / 2


def reduced_density_matrix(state: StateVector, wire: int) -> DensityMatrix:
    """Single-qubit marginal obtained by tracing out every other wire."""
    n = state.n_qubits
    if not 0 <= wire < n:
        raise SimulationError(f"wire {wire} outside a {n}-qubit register")
    v = state.amplitudes.reshape(2**wire, 2, 2 ** (n - wire - 1))
    return DensityMatrix(1, np.einsum("lar,lbr->ab", v, np.conj(v)))


def single_qubit_paulis_batch(psi: np.ndarray, n: int) -> np.ndarray:
    """``(<X_k>, <Y_k>, <Z_k>)`` for every wire, shape ``(B, n, 3)``."""
    B = psi.shape[0]
    out = np.empty((B, n, 3))
    for k in range(n):
        v = psi.reshape(B, 2**k, 2, 2 ** (n - k - 1))
        rho01 = np.einsum("blr,blr->b", v[:, :, 0, :], np.conj(v[:, :, 1, :]))
        p0 = np.sum(np.abs(v[:, :, 0, :]) ** 2, axis=(1, 2))
        p1 = np.sum(np.abs(v[:, :, 1, :]) ** 2, axis=(1, 2))
        # rho = [[p0, rho01], [conj(rho01), p1]]; <X> = 2 Re rho01, <Y> = -2 Im rho01
        out[:, k, 0] = 2 * rho01.real
        out[:, k, 1] = -2 * rho01.imag
        out[:, k, 2] = p0 - p1
    return out


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------

TEMPLATE_KINDS = ("iqp_embedding", "qaoa_embedding", "strongly_entangling",
                  "random_layers", "cnot_ring", "cz_ladder")

QAOA_LATENT_ANGLE = np.pi / 2


def _ring_pairs(n):
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def build_template(kind: str, n_qubits: int | None = None, n_layers: int = 1, *,
                   n_features: int | None = None, feature_offset: int = 0,
                   param_offset: int = 0, seed=None, entangle: bool = True,
                   wires: Sequence[int] | None = None, total_qubits: int | None = None) -> Circuit:
    """Build one of the named circuit templates.

    ``iqp_embedding``
        Per repeat: H on every wire, ``RZ(x_i)`` on wire i, then
        ``exp(-i x_i x_j Z_i Z_j / 2)`` for every pair ``i < j``. Uses features only.
    ``qaoa_embedding``
        ``d`` features on ``d + 1`` wires. Per layer: ``RX(x_i)`` on wire i and
        ``RX(pi/2)`` on the latent wire, a ring of trainable ZZ rotations, then
        trainable ``RY`` on each wire; a final feature layer closes the circuit.
    ``strongly_entangling``
        Per layer l: ``Rot`` with three trainable angles on each wire, then
        ``CNOT(i, (i + r) mod n)`` with range ``r = l mod (n - 1) + 1``.
    ``random_layers``
        ``n_layers * n_qubits`` seeded draws from {RX, RY, RZ on a random wire
        with a random literal angle, CNOT on a random ordered pair}.
    ``cnot_ring`` / ``cz_ladder``
        Fixed entanglers: ``CNOT(i, i+1 mod n)`` ring, ``CZ(i, i+1)`` ladder.

    ``wires`` places the template on a subset of a ``total_qubits`` register.
    """
    if kind not in TEMPLATE_KINDS:
        raise SimulationError(f"unknown template {kind!r}")
    if n_layers < 1:
        raise SimulationError("n_layers must be >= 1")
    if kind == "qaoa_embedding":
        if n_features is None:
            n_features = (n_qubits - 1) if n_qubits is not None else None
        if n_features is None or n_features < 1:
            raise SimulationError("qaoa_embedding needs n_features >= 1")
        n_qubits = n_features + 1
    if n_qubits is None or n_qubits < 1:
        raise SimulationError("n_qubits must be >= 1")
    wires = list(range(n_qubits)) if wires is None else list(wires)
    total = total_qubits if total_qubits is not None else max(wires) + 1
    n = n_qubits
    ops: list[GateOp] = []
    n_params = param_offset
    n_feats = feature_offset

    if kind == "iqp_embedding":
        for _ in range(n_layers):
            for i in range(n):
                ops.append(gate("H", wires[i]))
            for i in range(n):
                ops.append(gate("RZ", wires[i], Angle.feat(feature_offset + i)))
            if entangle:
                for i in range(n):
                    for j in range(i + 1, n):
                        a = Angle(feature=feature_offset + i, feature2=feature_offset + j)
                        ops.append(gate("PPR", (wires[i], wires[j]), a, pauli="ZZ"))
        n_feats = feature_offset + n

    elif kind == "qaoa_embedding":
        d = n_features
        pairs = _ring_pairs(n) if entangle else []
        per_layer = len(pairs) + n
        p = param_offset

        def feature_layer():
            for i in range(d):
                ops.append(gate("RX", wires[i], Angle.feat(feature_offset + i)))
            ops.append(gate("RX", wires[d], QAOA_LATENT_ANGLE))

        for _ in range(n_layers):
            feature_layer()
            for (i, j) in pairs:
                ops.append(gate("PPR", (wires[i], wires[j]), Angle.par(p), pauli="ZZ"))
                p += 1
            for i in range(n):
                ops.append(gate("RY", wires[i], Angle.par(p)))
                p += 1
        feature_layer()
        n_params = param_offset + per_layer * n_layers
        n_feats = feature_offset + d

    elif kind == "strongly_entangling":
        p = param_offset
        for layer in range(n_layers):
            for i in range(n):
                ops.append(gate("Rot", wires[i], Angle.par(p), Angle.par(p + 1), Angle.par(p + 2)))
                p += 3
            if entangle and n > 1:
                r = layer % (n - 1) + 1
                for i in range(n):
                    ops.append(gate("CNOT", (wires[i], wires[(i + r) % n])))
        n_params = p

    elif kind == "random_layers":
        rng = np.random.default_rng(seed)
        menu = ["RX", "RY", "RZ"] + (["CNOT"] if n > 1 and entangle else [])
        for _ in range(n_layers * n):
            choice = menu[rng.integers(len(menu))]
            if choice == "CNOT":
                i, j = rng.choice(n, size=2, replace=False)
                ops.append(gate("CNOT", (wires[i], wires[j])))
            else:
                ops.append(gate(choice, wires[rng.integers(n)], float(rng.uniform(0, 2 * np.pi))))

    elif kind == "cnot_ring":
        if entangle:
            for (i, j) in _ring_pairs(n):
                ops.append(gate("CNOT", (wires[i], wires[j])))

    elif kind == "cz_ladder":
        if entangle:
            for i in range(n - 1):
                ops.append(gate("CZ", (wires[i], wires[i + 1])))

    return Circuit(total, ops, n_params, n_feats)


def product_state(states: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, states)
