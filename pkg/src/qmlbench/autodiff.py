"""Gradients of circuit expectations, the Adam optimizer and the stopping rule.

Three gradient routes are provided:

* :func:`parameter_shift_grad` and :func:`shift_angle_grads` -- two-term
  shift rule on every rotation whose generator has eigenvalues +-1
  (RX/RY/RZ, Rot components, Pauli-product rotations); other coordinates
  fall back to central differences and are reported.
* :func:`finite_diff_grad` -- black-box central differences, used as an oracle.
* :func:`diag_backprop` and :func:`state_backprop` -- the adjoint (reverse)
  pass over a batch, used for training. They compute the same derivative as
  the shift rule at the cost of about three circuit evaluations in total.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sim import (
    ROTATIONS,
    Circuit,
    Observable,
    adjoint_angles,
    expectation_batch,
    simulate_angles,
)

WINDOW = 400
HALF = WINDOW // 2
DEFAULT_MAX_STEPS = 10_000


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Gradient routes
# ---------------------------------------------------------------------------


@dataclass
class ShiftInfo:
    fallback_params: list[int] = field(default_factory=list)


def _shift_eligible(circuit: Circuit) -> np.ndarray:
    """Per angle slot: True where the generator has eigenvalues +-1/2."""
    comp = circuit.compiled
    ok = np.zeros(comp.n_slots, dtype=bool)
    for kind, _, s, _ in comp.prims:
        if s is not None:
            ok[s] = kind in ROTATIONS or kind == "PPR"
    return ok


def shift_angle_grads(circuit: Circuit, angles, value_fn, initial=None, h: float = 1e-5):
    """Derivative of a per-row value with respect to every bound angle.

    ``value_fn(psi)`` maps a batch of final states ``(B, 2**n)`` to ``(B,)``
    and must be an expectation value (linear in each row's density matrix).
    Eligible slots use ``(v(a + pi/2) - v(a - pi/2)) / 2``; controlled
    rotations use central differences with step ``h``. Returns ``(B, n_slots)``.
    """
    comp = circuit.compiled
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    eligible = _shift_eligible(circuit)
    out = np.zeros(angles.shape)
    for s in range(comp.n_slots):
        step = np.pi / 2 if eligible[s] else h
        plus, minus = angles.copy(), angles.copy()
        plus[:, s] += step
        minus[:, s] -= step
        vp = value_fn(simulate_angles(circuit, plus, initial))
        vm = value_fn(simulate_angles(circuit, minus, initial))
        out[:, s] = (vp - vm) / (2.0 if eligible[s] else 2 * h)
    return out


def parameter_shift_grad(circuit: Circuit, obs: Observable, features, params,
                         h: float = 1e-5, return_info: bool = False):
    """Gradient of ``<O>`` w.r.t. the circuit parameters via the shift rule.

    Each gate angle ``a`` is shifted by ``+-pi/2`` and
    ``(f(a + pi/2) - f(a - pi/2)) / 2`` is chained onto the parameters that
    feed it (an angle ``x * w + b`` passes ``x`` times that derivative to ``w``).
    """
    comp = circuit.compiled
    features = np.asarray(features, dtype=float).reshape(1, -1)
    params = np.asarray(params, dtype=float).ravel()
    angles = circuit.angles(features, params)
    d_angles = shift_angle_grads(circuit, angles, lambda psi: expectation_batch(psi, obs), h=h)
    grad, _ = comp.backprop_angles(d_angles, features, params)
    if return_info:
        eligible = _shift_eligible(circuit)
        fallback = sorted({int(i) for s in np.flatnonzero(~eligible)
                           for i in (comp.param[s], comp.scale[s]) if i >= 0})
        return grad, ShiftInfo(fallback)
    return grad


def finite_diff_grad(loss: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(L(p + h e_k) - L(p - h e_k)) / 2h`` per coordinate."""
    if h <= 0:
        raise ValueError("step h must be positive")
    params = np.asarray(params, dtype=float).ravel()
    grad = np.zeros_like(params)
    for k in range(params.size):
        e = np.zeros_like(params)
        e[k] = h
        grad[k] = (loss(params + e) - loss(params - e)) / (2 * h)
    return grad


def diag_forward(circuit: Circuit, X, params, diags, initial=None):
    """Simulate a batch and return ``(angles, psi, E)`` with ``E[b, k] = <psi_b|D_k|psi_b>``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    angles = circuit.angles(X, params)
    psi = simulate_angles(circuit, angles, initial)
    E = (np.abs(psi) ** 2) @ np.atleast_2d(diags).T
    return angles, psi, E


def diag_backprop(circuit: Circuit, X, params, angles, psi, dE, diags):
    """Given ``dL/dE`` for diagonal observables, return ``(dL/dparams, dL/dX)``."""
    cot = psi * (np.atleast_2d(dE) @ np.atleast_2d(diags))
    return state_backprop(circuit, X, params, angles, psi, cot)


def state_backprop(circuit: Circuit, X, params, angles, psi, cotangent):
    """Reverse pass from an arbitrary cotangent ``dL/d conj(psi)``."""
    d_angles = adjoint_angles(circuit, angles, psi, cotangent)
    return circuit.compiled.backprop_angles(d_angles, np.atleast_2d(X), params)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int, learning_rate: float) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, learning_rate)


def adam_step(state: AdamState, params, grad) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient at step {state.step}: {grad}")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.learning_rate, state.beta1, state.beta2, state.eps)


# ---------------------------------------------------------------------------
# Convergence
# ---------------------------------------------------------------------------


class LossWindow:
    """The most recent 400 loss values."""

    capacity = WINDOW

    def __init__(self, values=()):
        self.values: deque[float] = deque(maxlen=WINDOW)
        self.step = 0
        for v in values:
            self.push(v)

    def push(self, loss: float):
        self.values.append(float(loss))
        self.step += 1

    @property
    def full(self) -> bool:
        return len(self.values) == WINDOW

    def __len__(self):
        return len(self.values)


def has_converged(window: LossWindow) -> bool:
    """Compare the means of the older and newer 200 losses.

    Converged when ``|mu_old - mu_new| < sigma_new / (2 sqrt(200))`` with the
    population standard deviation of the newer half. A flat newer half counts
    as converged when both means agree.
    """
    if not window.full:
        return False
    vals = np.fromiter(window.values, dtype=float)
    old, new = vals[:HALF], vals[HALF:]
    mu1, mu2 = old.mean(), new.mean()
    sigma2 = new.std()
    if sigma2 == 0.0:
        return bool(mu1 == mu2)
    return bool(abs(mu1 - mu2) < sigma2 / (2 * np.sqrt(HALF)))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: np.ndarray
    loss_history: list[float]
    converged: bool
    steps: int


def minimize(loss_and_grad: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]],
             params, *, learning_rate: float, n_samples: int, batch_size: int = 32,
             max_steps: int = DEFAULT_MAX_STEPS, rng=None) -> TrainResult:
    """Minibatch Adam until the loss window converges or ``max_steps`` is hit.

    ``loss_and_grad(params, batch_indices)`` returns the mean batch loss and
    its gradient. The convergence test runs at every step once 400 losses are
    stored.
    """
    rng = np.random.default_rng(rng)
    params = np.array(params, dtype=float)
    state = AdamState.init(params.size, learning_rate)
    window = LossWindow()
    history: list[float] = []
    converged = False
    replace = n_samples < batch_size
    for _ in range(max_steps):
        idx = rng.choice(n_samples, size=batch_size, replace=replace)
        loss, grad = loss_and_grad(params, idx)
        if not np.isfinite(loss):
            raise TrainingError(f"loss became {loss} at step {state.step}")
        params, state = adam_step(state, params, grad)
        history.append(float(loss))
        window.push(loss)
        if has_converged(window):
            converged = True
            break
    return TrainResult(params, history, converged, state.step)
