"""State-vector simulation for the rotation + CZ circuit family.

Conventions
-----------
* Qubit 0 is the least-significant bit of a basis index.
* ``R(theta, phi) = Rz(phi) @ Rx(theta)`` with half-angle rotations
  ``Rx(t) = exp(-i t X / 2)`` and ``Rz(t) = exp(-i t Z / 2)``.
* Gate noise is simulated with Monte-Carlo Pauli trajectories: after every
  gate each touched qubit independently suffers X with probability
  ``bit_flip_rate`` and Z with probability ``phase_flip_rate``.

Amplitudes may carry a leading batch axis (one row per trajectory), which
lets noisy shots run as a single vectorised batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_QUBITS = 24


class ConfigurationError(ValueError):
    """Raised for invalid circuit or noise configuration."""


@dataclass(frozen=True)
class NoiseConfig:
    bit_flip_rate: float = 0.0
    phase_flip_rate: float = 0.0

    def __post_init__(self):
        for name in ("bit_flip_rate", "phase_flip_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {rate}")

    @property
    def is_noiseless(self) -> bool:
        return self.bit_flip_rate == 0.0 and self.phase_flip_rate == 0.0


NOISELESS = NoiseConfig()


class StateVector:
    """Amplitudes of an ``num_qubits`` register, optionally batched.

    ``amplitudes`` has shape ``(2**N,)`` or ``(B, 2**N)``. Gate methods act
    in place and return ``self`` so calls can be chained.
    """

    def __init__(self, num_qubits: int, amplitudes: np.ndarray):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape[-1] != 2**num_qubits:
            raise ConfigurationError(
                f"expected {2**num_qubits} amplitudes, got {amplitudes.shape[-1]}"
            )
        self.num_qubits = num_qubits
        self.amplitudes = amplitudes

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm_squared(self) -> np.ndarray | float:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def _check(self, qubit: int) -> None:
        if not 0 <= qubit < self.num_qubits:
            raise IndexError(f"qubit {qubit} out of range for N={self.num_qubits}")

    def apply_1q(self, qubit: int, matrix: np.ndarray) -> "StateVector":
        self._check(qubit)
        # view as (high bits, target bit, low bits); batch rows fold into high bits
        low = 1 << qubit
        view = self.amplitudes.reshape(-1, 2, low)
        self.amplitudes = np.matmul(matrix, view).reshape(self.amplitudes.shape)
        return self

    def _bit_mask(self, qubit: int) -> np.ndarray:
        idx = np.arange(2**self.num_qubits)
        return ((idx >> qubit) & 1).astype(bool)

    def apply_x_where(self, qubit: int, rows: np.ndarray) -> "StateVector":
        """Bit-flip ``qubit`` on the selected batch rows (boolean mask)."""
        if not np.any(rows):
            return self
        idx = np.arange(2**self.num_qubits) ^ (1 << qubit)
        self.amplitudes[rows] = self.amplitudes[rows][:, idx]
        return self

    def apply_z_where(self, qubit: int, rows: np.ndarray) -> "StateVector":
        if not np.any(rows):
            return self
        mask = self._bit_mask(qubit)
        sub = self.amplitudes[rows]
        sub[:, mask] *= -1
        self.amplitudes[rows] = sub
        return self


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def rz_matrix(phi: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * phi), 0.0], [0.0, np.exp(0.5j * phi)]], dtype=np.complex128
    )


def rotation_matrix(theta: float, phi: float) -> np.ndarray:
    """``Rz(phi) @ Rx(theta)``: X rotation first, then Z."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    em, ep = np.exp(-0.5j * phi), np.exp(0.5j * phi)
    return np.array([[em * c, -1j * em * s], [-1j * ep * s, ep * c]], dtype=np.complex128)


def init_zero_state(num_qubits: int, batch: int | None = None) -> StateVector:
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(
            f"num_qubits must be an integer in [1, {MAX_QUBITS}], got {num_qubits!r}"
        )
    dim = 2**num_qubits
    shape = (dim,) if batch is None else (batch, dim)
    amps = np.zeros(shape, dtype=np.complex128)
    amps[..., 0] = 1.0
    return StateVector(int(num_qubits), amps)


def apply_rotation(sv: StateVector, qubit: int, theta: float, phi: float) -> StateVector:
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError("rotation angles must be finite")
    return sv.apply_1q(qubit, rotation_matrix(theta, phi))


def apply_cz(sv: StateVector, p: int, k: int) -> StateVector:
    """Controlled-Z on ``(p, k)``; identity when ``p == k``."""
    sv._check(p)
    sv._check(k)
    if p == k:
        return sv
    idx = np.arange(2**sv.num_qubits)
    both = (((idx >> p) & 1) & ((idx >> k) & 1)).astype(bool)
    sv.amplitudes[..., both] *= -1
    return sv


PAULI_TAGS = ("none", "X", "Z", "XZ")


def sample_pauli_error(noise: NoiseConfig, rng: np.random.Generator, size=None):
    """Draw Pauli error tag(s) for one gate.

    X fires with probability ``bit_flip_rate`` and, independently, Z with
    ``phase_flip_rate``. Returns a tag string, or an array of tags when
    ``size`` is given.
    """
    x = rng.random(size) < noise.bit_flip_rate
    z = rng.random(size) < noise.phase_flip_rate
    code = np.asarray(x, dtype=int) + 2 * np.asarray(z, dtype=int)
    tags = np.array(PAULI_TAGS)[code]
    return str(tags) if size is None else tags


def apply_pauli_noise(
    sv: StateVector, qubit: int, noise: NoiseConfig, rng: np.random.Generator
) -> StateVector:
    """Insert independent X/Z errors on ``qubit`` for every batch row."""
    if noise.is_noiseless:
        return sv
    rows = sv.amplitudes.shape[0] if sv.batched else None
    x = rng.random(rows) < noise.bit_flip_rate
    z = rng.random(rows) < noise.phase_flip_rate
    if not sv.batched:
        # promote to a 1-row batch so the masked helpers apply
        tmp = StateVector(sv.num_qubits, sv.amplitudes[None, :])
        tmp.apply_x_where(qubit, np.atleast_1d(x))
        tmp.apply_z_where(qubit, np.atleast_1d(z))
        sv.amplitudes = tmp.amplitudes[0]
        return sv
    sv.apply_x_where(qubit, x)
    sv.apply_z_where(qubit, z)
    return sv


def exact_marginals(sv: StateVector) -> np.ndarray:
    """Probability of reading 1 on each qubit (last axis indexes qubits)."""
    probs = sv.probabilities()
    idx = np.arange(2**sv.num_qubits)
    bits = (idx[:, None] >> np.arange(sv.num_qubits)[None, :]) & 1
    return np.clip(probs @ bits, 0.0, 1.0)


@dataclass
class ShotRecord:
    bitstrings: np.ndarray  # (S, N) uint8, column l is qubit l

    def __post_init__(self):
        self.bitstrings = np.asarray(self.bitstrings, dtype=np.uint8)
        if self.bitstrings.ndim != 2:
            raise ValueError("bitstrings must be a 2-D (shots, qubits) array")

    @property
    def shots(self) -> int:
        return self.bitstrings.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.bitstrings.shape[1]

    def basis_indices(self) -> np.ndarray:
        weights = 1 << np.arange(self.num_qubits, dtype=np.int64)
        return self.bitstrings.astype(np.int64) @ weights


def indices_to_bits(indices: np.ndarray, num_qubits: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    return ((indices[:, None] >> np.arange(num_qubits)[None, :]) & 1).astype(np.uint8)


def _draw_index(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # inverse-CDF draw, one sample per row
    cdf = np.cumsum(prob_rows, axis=-1)
    cdf /= cdf[..., -1:]
    u = rng.random(cdf.shape[0])
    return np.minimum((cdf < u[:, None]).sum(axis=-1), cdf.shape[-1] - 1)


Executor = Callable[..., StateVector]


def sample_shots(
    executor: Executor,
    shots: int,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> ShotRecord:
    """Measure ``shots`` bit-strings from a circuit.

    ``executor(batch, noise, rng)`` must return the final ``StateVector``;
    with ``batch=None`` it runs a single noiseless pass. When noise is active
    every shot is its own trajectory with fresh Pauli draws.
    """
    if shots < 1:
        raise ValueError(f"shot count must be >= 1, got {shots}")
    if noise.is_noiseless:
        sv = executor(None, noise, rng)
        probs = sv.probabilities()
        idx = rng.choice(probs.size, size=shots, p=probs / probs.sum())
    else:
        sv = executor(shots, noise, rng)
        idx = _draw_index(sv.probabilities(), rng)
    return ShotRecord(indices_to_bits(idx, sv.num_qubits))


def empirical_marginals(record: ShotRecord) -> np.ndarray:
    """Per-qubit fraction of shots that read 1."""
    if record.shots == 0:
        raise ValueError("empty shot record")
    return record.bitstrings.mean(axis=0)


def expectation_view(marginals: np.ndarray) -> np.ndarray:
    """Pauli-Z expectations ``1 - 2p`` matching a marginal vector."""
    return 1.0 - 2.0 * np.asarray(marginals)
