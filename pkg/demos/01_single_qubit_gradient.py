"""A single rotated qubit, measured three ways.

Run with ``python demos/01_single_qubit_gradient.py``.
"""
# %%
import numpy as np

from hdqnn import PqcConfig, exact_layer_map, run_quantum_layer
from hdqnn.grad_oracle import finite_diff_jacobian, parameter_shift_jacobian

one = PqcConfig(num_qubits=1, num_layers=1, shots=1000)
theta = np.pi / 3
q = np.array([theta, 0.0, 0.0, 0.0])  # [theta | phi | p, k]

# %% The probability of reading 1 is sin^2(theta/2).
print("exact p(1):      ", exact_layer_map(q, one)[0], " closed form:", np.sin(theta / 2) ** 2)

rng = np.random.default_rng(0)
estimates = [run_quantum_layer(q, one, rng)[0] for _ in range(20)]
print("1000-shot mean:  ", np.mean(estimates), "+-", np.std(estimates))

# %% Two ways to get dp/dtheta, both against sin(theta)/2.
print("parameter shift: ", parameter_shift_jacobian(q, one)[0, 0])
print("finite diff:     ", finite_diff_jacobian(q, one)[0, 0])
print("closed form:     ", np.sin(theta) / 2)

# %% A shift of pi/4 instead of pi/2 gives a visibly wrong answer.
print("wrong shift:     ", parameter_shift_jacobian(q, one, shift=np.pi / 4)[0, 0])

# %% Sweep the angle; the shift rule stays exact everywhere.
grid = np.linspace(-np.pi, np.pi, 9)
shift = np.array([parameter_shift_jacobian(np.array([t, 0, 0, 0]), one)[0, 0] for t in grid])
print(np.column_stack([grid, shift, np.sin(grid) / 2]).round(6))
