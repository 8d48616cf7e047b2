"""The quantum layer: control encoding, circuit execution, call accounting.

A control vector for ``N`` qubits and ``M`` layers has ``(2N + 2) M`` entries
laid out as ``[theta | phi | index controls]``. ``theta[j*N + i]`` and
``phi[j*N + i]`` drive qubit ``i`` in layer ``j``; the index controls hold
the raw ``(p_j, k_j)`` precursors interleaved as ``p_0, k_0, p_1, k_1, ...``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

import numpy as np

from .quantum_core import (
    NOISELESS,
    ConfigurationError,
    NoiseConfig,
    ShotRecord,
    StateVector,
    apply_cz,
    apply_pauli_noise,
    apply_rotation,
    empirical_marginals,
    exact_marginals,
    init_zero_state,
    rotation_matrix,
    sample_shots,
)

OUTPUT_MODES = ("marginal", "most_probable_bitstring")


@dataclass(frozen=True)
class PqcConfig:
    num_qubits: int = 5
    num_layers: int = 5
    shots: int = 100
    noise: NoiseConfig = NOISELESS
    output_mode: str = "marginal"

    def __post_init__(self):
        if self.num_qubits < 1 or self.num_layers < 1 or self.shots < 1:
            raise ConfigurationError("num_qubits, num_layers and shots must all be >= 1")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigurationError(f"output_mode must be one of {OUTPUT_MODES}")

    @property
    def control_dim(self) -> int:
        return (2 * self.num_qubits + 2) * self.num_layers

    @property
    def angle_dim(self) -> int:
        return 2 * self.num_qubits * self.num_layers

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "num_layers": self.num_layers,
            "shots": self.shots,
            "bit_flip_rate": self.noise.bit_flip_rate,
            "phase_flip_rate": self.noise.phase_flip_rate,
            "output_mode": self.output_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PqcConfig":
        return cls(
            num_qubits=int(d["num_qubits"]),
            num_layers=int(d["num_layers"]),
            shots=int(d["shots"]),
            noise=NoiseConfig(float(d.get("bit_flip_rate", 0.0)), float(d.get("phase_flip_rate", 0.0))),
            output_mode=d.get("output_mode", "marginal"),
        )


@dataclass
class CallCounter:
    pqc_calls: int = 0
    shot_executions: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, shots: int) -> None:
        with self._lock:
            self.pqc_calls += 1
            self.shot_executions += shots


def encode_controls(raw, config: PqcConfig) -> np.ndarray:
    """Squash angle entries to ``[-pi, pi]`` with ``pi * tanh``.

    Index controls pass through untouched; rounding happens in
    :func:`decode_entangler`. Accepts a single vector or a batch of rows.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != config.control_dim:
        raise ValueError(f"expected {config.control_dim} raw controls, got {raw.shape[-1]}")
    out = raw.copy()
    a = config.angle_dim
    out[..., :a] = np.pi * np.tanh(raw[..., :a])
    return out


def encode_controls_grad(raw, config: PqcConfig) -> np.ndarray:
    """Elementwise derivative of :func:`encode_controls`."""
    raw = np.asarray(raw, dtype=float)
    d = np.ones_like(raw)
    a = config.angle_dim
    d[..., :a] = np.pi * (1.0 - np.tanh(raw[..., :a]) ** 2)
    return d


def _round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def decode_entangler(index_controls, num_qubits: int) -> tuple[int, int]:
    top = num_qubits - 1
    pair = []
    for raw in index_controls:
        scaled = top * (np.tanh(raw) + 1.0) / 2.0
        pair.append(_round_half_away(float(np.clip(scaled, 0.0, top))))
    return pair[0], pair[1]


@dataclass(frozen=True)
class Circuit:
    """Decoded circuit: per-layer angle arrays and entangler pairs."""

    num_qubits: int
    thetas: np.ndarray  # (M, N)
    phis: np.ndarray  # (M, N)
    pairs: tuple[tuple[int, int], ...]

    @property
    def num_layers(self) -> int:
        return len(self.pairs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "qubits": self.num_qubits,
                "layers": self.num_layers,
                "rotation": "Rz(phi)*Rx(theta)",
                "theta": self.thetas.tolist(),
                "phi": self.phis.tolist(),
                "entanglers": [list(p) for p in self.pairs],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        d = json.loads(text)
        return cls(
            num_qubits=int(d["qubits"]),
            thetas=np.asarray(d["theta"], dtype=float),
            phis=np.asarray(d["phi"], dtype=float),
            pairs=tuple((int(p), int(k)) for p, k in d["entanglers"]),
        )

    def run(self, batch=None, noise: NoiseConfig = NOISELESS, rng=None) -> StateVector:
        sv = init_zero_state(self.num_qubits, batch)
        noisy = not noise.is_noiseless
        for j in range(self.num_layers):
            for i in range(self.num_qubits):
                if noisy:
                    sv.apply_1q(i, rotation_matrix(self.thetas[j, i], self.phis[j, i]))
                    apply_pauli_noise(sv, i, noise, rng)
                else:
                    apply_rotation(sv, i, self.thetas[j, i], self.phis[j, i])
            p, k = self.pairs[j]
            if p != k:
                apply_cz(sv, p, k)
                if noisy:
                    apply_pauli_noise(sv, p, noise, rng)
                    apply_pauli_noise(sv, k, noise, rng)
        return sv


def build_circuit(q_i, config: PqcConfig) -> Circuit:
    q_i = np.asarray(q_i, dtype=float)
    if q_i.shape != (config.control_dim,):
        raise ValueError(f"control vector must have shape ({config.control_dim},), got {q_i.shape}")
    n, m = config.num_qubits, config.num_layers
    thetas = q_i[: n * m].reshape(m, n)
    phis = q_i[n * m : 2 * n * m].reshape(m, n)
    idx = q_i[2 * n * m :].reshape(m, 2)
    pairs = tuple(decode_entangler(idx[j], n) for j in range(m))
    return Circuit(n, thetas, phis, pairs)


def modal_bitstring(record: ShotRecord) -> np.ndarray:
    """Most frequent sampled bit-string; ties go to the lowest basis index."""
    idx = record.basis_indices()
    values, counts = np.unique(idx, return_counts=True)  # values sorted ascending
    best = values[np.argmax(counts)]
    return ((best >> np.arange(record.num_qubits)) & 1).astype(float)


def run_quantum_layer(
    q_i,
    config: PqcConfig,
    rng: np.random.Generator,
    counter: CallCounter | None = None,
) -> np.ndarray:
    """One PQC call: ``S`` shots, returned as marginals or the modal string."""
    circuit = build_circuit(q_i, config)
    record = sample_shots(
        lambda batch, noise, r: circuit.run(batch, noise, r),
        config.shots,
        config.noise,
        rng,
    )
    if counter is not None:
        counter.record(config.shots)
    if config.output_mode == "most_probable_bitstring":
        return modal_bitstring(record)
    return empirical_marginals(record)


def exact_layer_map(q_i, config: PqcConfig) -> np.ndarray:
    """Noiseless infinite-shot marginals; the differentiable reference map."""
    return exact_marginals(build_circuit(q_i, config).run())
