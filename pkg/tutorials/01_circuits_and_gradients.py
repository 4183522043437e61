"""
Circuits, expectations and gradients
====================================

Build a small parametrised circuit, evaluate an observable, and compare the
three gradient routes: parameter shift, adjoint and finite differences.
"""

import numpy as np

from qmlbench.autodiff import finite_diff_grad, parameter_shift_grad
from qmlbench.sim import (Angle, Circuit, Observable, apply_circuit, build_template,
                          expectation, gate)

# one feature on each wire, then two strongly entangling layers
n = 3
embed = Circuit(n, [gate("RY", q, Angle.feat(q)) for q in range(n)], 0, n)
circuit = embed.then(build_template("strongly_entangling", n, n_layers=2))
print("trainable parameters:", circuit.n_params)

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, n)
theta = rng.uniform(0, 2 * np.pi, circuit.n_params)

# <Z_0 Z_1> on the final state
obs = Observable([(1.0, "ZZI")])


def f(params):
    return expectation(apply_circuit(circuit, x, params), obs)


print("<Z0 Z1> =", f(theta))

# The shift rule is exact for these gates, so it should agree with central
# differences up to the truncation error of the latter.
shift = parameter_shift_grad(circuit, obs, x, theta)
fd = finite_diff_grad(f, theta)
print("max |shift - fd| =", np.max(np.abs(shift - fd)))

# The statevector is a plain numpy array, wire 0 being the leading bit.
psi = apply_circuit(circuit, x, theta)
print("most likely basis state:", np.binary_repr(np.argmax(np.abs(psi.amplitudes) ** 2), n))
