"""Shared fixtures and an independent dense-matrix circuit oracle.

The oracle builds every gate as a full ``2**N x 2**N`` matrix with Kronecker
products, which shares no code with the strided state-vector kernels under
test.
"""

from __future__ import annotations

import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def expm_pauli(pauli: np.ndarray, angle: float) -> np.ndarray:
    """``exp(-i angle P / 2)`` for a Pauli ``P`` (which squares to identity)."""
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * pauli


def full_1q(gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    # kron order puts the highest qubit leftmost, so qubit 0 is the LSB
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, gate if q == qubit else I2)
    return out


def full_cz(p: int, k: int, n: int) -> np.ndarray:
    diag = np.ones(2**n, dtype=complex)
    if p != k:
        for b in range(2**n):
            if (b >> p) & 1 and (b >> k) & 1:
                diag[b] = -1
    return np.diag(diag)


def oracle_state(thetas, phis, pairs, n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for j, (p, k) in enumerate(pairs):
        for i in range(n):
            gate = expm_pauli(Z, phis[j][i]) @ expm_pauli(X, thetas[j][i])
            psi = full_1q(gate, i, n) @ psi
        psi = full_cz(p, k, n) @ psi
    return psi


def oracle_marginals(psi: np.ndarray, n: int) -> np.ndarray:
    probs = np.abs(psi) ** 2
    return np.array([sum(probs[b] for b in range(2**n) if (b >> i) & 1) for i in range(n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    """A run config small enough for end-to-end checks in seconds."""
    return {
        "env": "pendulum",
        "variant": "pqc",
        "pqc": {"num_qubits": 2, "num_layers": 1, "shots": 10},
        "agent": {"batch_size": 8, "warmup_steps": 10, "hidden": 16, "d_clink": 2, "replay_capacity": 500},
        "qt": {"hidden": 16, "n_tiny": 2, "tiny_batch_size": 8, "buffer_capacity": 50},
        "seeds": [0, 1],
        "total_steps": 40,
        "eval_interval": 10,
        "eval_episodes": 1,
    }
