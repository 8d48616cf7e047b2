"""Reference Jacobians of the noiseless layer map and the shift-rule cost model.

Only the ``2NM`` angle controls are differentiated. The entangler index
controls go through a rounding step and are piecewise constant.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .pqc_layer import PqcConfig, exact_layer_map

SHIFT = np.pi / 2


def _shifted_columns(q_i, config: PqcConfig, step: float) -> tuple[np.ndarray, np.ndarray]:
    q_i = np.asarray(q_i, dtype=float)
    n_out, n_ang = config.num_qubits, config.angle_dim
    plus = np.empty((n_out, n_ang))
    minus = np.empty((n_out, n_ang))
    for j in range(n_ang):
        shifted = q_i.copy()
        shifted[j] += step
        plus[:, j] = exact_layer_map(shifted, config)
        shifted[j] -= 2 * step
        minus[:, j] = exact_layer_map(shifted, config)
    return plus, minus


def finite_diff_jacobian(q_i, config: PqcConfig, h: float = 1e-4) -> np.ndarray:
    """Central differences; shape ``(N, 2NM)``."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    plus, minus = _shifted_columns(q_i, config, h)
    return (plus - minus) / (2 * h)


def parameter_shift_jacobian(q_i, config: PqcConfig, shift: float = SHIFT) -> np.ndarray:
    """Shift rule ``[Q(x + s e_j) - Q(x - s e_j)] / 2`` with ``s = pi/2``.

    Exact for half-angle Pauli rotations. ``shift`` is exposed only so a
    corrupted rule can be injected when testing the verification harness.
    """
    plus, minus = _shifted_columns(q_i, config, shift)
    return (plus - minus) / 2.0


@dataclass(frozen=True)
class ShiftCostReport:
    I: int
    O: int
    S: int
    N_b: int
    K: int
    per_shot_time: float
    total_shots_per_update: int
    total_seconds_per_update: float
    total_seconds_full_run: float
    qtdnn_pqc_calls: int
    qtdnn_shots: int
    shift_extra_shots: int

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), **kwargs)


def shift_cost_report(I: int, O: int, S: int, N_b: int, K: int = 1, per_shot_time: float = 0.5e-6) -> ShiftCostReport:
    """Circuit cost of estimating layer gradients by parameter shift.

    Counts are Python ints so nothing overflows; times are seconds.
    """
    for name, value in (("I", I), ("O", O), ("S", S), ("N_b", N_b), ("K", K)):
        if int(value) != value or value <= 0:
            raise ValueError(f"{name} must be a positive integer, got {value}")
    if not per_shot_time > 0:
        raise ValueError(f"per_shot_time must be positive, got {per_shot_time}")
    I, O, S, N_b, K = (int(v) for v in (I, O, S, N_b, K))
    shots = I * O * S * N_b
    # decimal product, so 563_200_000 * 0.5e-6 is 281.6 and not 281.59999...
    seconds = float(Fraction(shots) * Fraction(repr(float(per_shot_time))))
    return ShiftCostReport(
        I=I,
        O=O,
        S=S,
        N_b=N_b,
        K=K,
        per_shot_time=per_shot_time,
        total_shots_per_update=shots,
        total_seconds_per_update=seconds,
        total_seconds_full_run=float(Fraction(repr(seconds)) * K),
        qtdnn_pqc_calls=K,
        qtdnn_shots=S * K,
        shift_extra_shots=shots * K,
    )
