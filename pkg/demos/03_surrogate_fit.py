"""Fit a qtDNN to a frozen 5-qubit circuit and compare it with the true map.

The surrogate only has to be right inside a small ball around the current
controls. Within that ball it should track both the outputs and their
gradients.
"""
# %%
import numpy as np

from hdqnn import PqcConfig, QtDnn, exact_layer_map
from hdqnn.pqc_layer import encode_controls
from hdqnn.surrogate import fidelity_report, fit_surrogate, sample_angle_ball

cfg = PqcConfig(num_qubits=5, num_layers=5)
rng = np.random.default_rng(0)
center = encode_controls(rng.standard_normal(cfg.control_dim), cfg)
x = sample_angle_ball(center, cfg, 0.1, 256, rng)
y = np.array([exact_layer_map(v, cfg) for v in x])

qt = QtDnn(cfg, 64, rng, lr=1e-3)
probe_rng = lambda: np.random.default_rng(100)
before = fidelity_report(qt, cfg, center, 0.1, 64, probe_rng())
print(f"untrained  eps1 {before.eps1:.4f}  cosine {before.mean_cosine:.3f}")

# %% Fit in chunks and watch eps1 fall. The BCE floor is the entropy of y, not 0.
floor = -np.mean(y * np.log(y) + (1 - y) * np.log(1 - y))
for chunk in range(6):
    trace = fit_surrogate(qt, x, y, n_tiny=5000, tiny_batch_size=64, rng=rng)
    rep = fidelity_report(qt, cfg, center, 0.1, 64, probe_rng())
    print(f"{(chunk + 1) * 5000:6d} steps  bce {np.mean(trace[-200:]):.4f} (floor {floor:.4f})"
          f"  eps1 {rep.eps1:.4f}  cosine {rep.mean_cosine:.3f}")
