"""qtDNN: a classical stand-in for the quantum layer during backpropagation.

The surrogate is an MLP ``[I, L_h, N]`` (LeakyReLU hidden, sigmoid output)
refit on every update epoch from recorded ``(q_i, q_o)`` pairs, then frozen
while the actor backpropagates through it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .grad_oracle import parameter_shift_jacobian
from .neural import DenseNet, Optimizer, bce_loss
from .pqc_layer import PqcConfig, exact_layer_map


class QtBuffer:
    """FIFO store of ``(q_i, q_o)`` pairs for one quantum layer."""

    def __init__(self, capacity: int, control_dim: int, num_qubits: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.control_dim = control_dim
        self.num_qubits = num_qubits
        self._q_i = np.zeros((capacity, control_dim))
        self._q_o = np.zeros((capacity, num_qubits))
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    def _slot(self, i: int) -> int:
        if not -self._size <= i < self._size:
            raise IndexError(i)
        oldest = (self._next - self._size) % self.capacity
        return (oldest + i % self._size) % self.capacity

    def __getitem__(self, i):
        j = self._slot(i)
        return self._q_i[j].copy(), self._q_o[j].copy()

    def record_pair(self, q_i, q_o) -> None:
        q_i = np.asarray(q_i, dtype=float)
        q_o = np.asarray(q_o, dtype=float)
        if q_i.shape != (self.control_dim,) or q_o.shape != (self.num_qubits,):
            raise ValueError(
                f"pair shapes {q_i.shape}, {q_o.shape} do not match "
                f"({self.control_dim},), ({self.num_qubits},)"
            )
        self._q_i[self._next] = q_i
        self._q_o[self._next] = q_o
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """All stored pairs, oldest first."""
        order = [self._slot(i) for i in range(self._size)]
        return self._q_i[order], self._q_o[order]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, self._size, size=n)
        return self._q_i[idx], self._q_o[idx]


def record_pair(buffer: QtBuffer, q_i, q_o) -> None:
    buffer.record_pair(q_i, q_o)


def surrogate_param_count(num_qubits: int, num_layers: int, hidden: int) -> int:
    if min(num_qubits, num_layers, hidden) < 1:
        raise ValueError("all arguments must be positive")
    inputs = (2 * num_qubits + 2) * num_layers
    return inputs * hidden + hidden + hidden * num_qubits + num_qubits


class QtDnn:
    def __init__(self, config: PqcConfig, hidden: int = 2048, rng=None, lr: float = 3e-4):
        self.config = config
        self.hidden = hidden
        self.net = DenseNet([config.control_dim, hidden, config.num_qubits], rng, output_activation="sigmoid")
        self.optimizer = Optimizer(self.net, lr=lr)

    def __call__(self, q_i) -> np.ndarray:
        return self.net(q_i)

    def forward(self, q_i):
        return self.net.forward(q_i)

    def backward(self, tape, upstream) -> np.ndarray:
        """Input gradient only; the surrogate's own weights stay frozen."""
        return self.net.backward(tape, upstream)[1]

    def jacobian(self, q_i) -> np.ndarray:
        """``d output / d q_i`` over all ``I`` controls, shape ``(N, I)``."""
        n = self.config.num_qubits
        q = np.asarray(q_i, dtype=float)
        _, tape = self.net.forward(np.repeat(q[None, :], n, axis=0))
        return self.net.backward(tape, np.eye(n))[1]


def fit_surrogate(
    qtdnn: QtDnn,
    batch_q_i,
    batch_q_o,
    n_tiny: int = 32,
    tiny_batch_size: int = 64,
    rng: np.random.Generator | None = None,
    buffer: QtBuffer | None = None,
    buffer_fraction: float = 0.5,
) -> list[float]:
    """Take ``n_tiny`` Adam steps on BCE over tiny-batches.

    Each tiny-batch draws ``buffer_fraction`` of its rows from ``buffer`` (when
    given and non-empty) and the rest from the current mini-batch. Returns
    the per-step loss trace.
    """
    batch_q_i = np.asarray(batch_q_i, dtype=float)
    batch_q_o = np.asarray(batch_q_o, dtype=float)
    if batch_q_i.shape[0] == 0:
        raise ValueError("empty fit batch")
    rng = rng if rng is not None else np.random.default_rng()
    n_buf = 0
    if buffer is not None and len(buffer) > 0:
        n_buf = int(round(buffer_fraction * tiny_batch_size))
    n_cur = tiny_batch_size - n_buf
    trace = []
    for _ in range(n_tiny):
        idx = rng.integers(0, batch_q_i.shape[0], size=n_cur)
        x, y = batch_q_i[idx], batch_q_o[idx]
        if n_buf:
            bx, by = buffer.sample(n_buf, rng)
            x, y = np.concatenate([x, bx]), np.concatenate([y, by])
        pred, tape = qtdnn.net.forward(x)
        loss, grad = bce_loss(pred, y)
        grads, _ = qtdnn.net.backward(tape, grad)
        qtdnn.optimizer.step(grads)
        trace.append(loss)
    return trace


@dataclass(frozen=True)
class FidelityReport:
    eps1: float
    eps2: float
    radius: float
    num_probes: int
    center: list
    mean_cosine: float

    def to_dict(self) -> dict:
        return asdict(self)


def sample_angle_ball(center, config: PqcConfig, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from the radius ball in the angle subspace around ``center``.

    Index controls are copied from ``center`` so the entangler routing is fixed.
    """
    center = np.asarray(center, dtype=float)
    d = config.angle_dim
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    out = np.repeat(center[None, :], n, axis=0)
    out[:, :d] += direction * r[:, None]
    return out


def fidelity_report(
    qtdnn: QtDnn,
    config: PqcConfig,
    center,
    radius: float,
    num_probes: int,
    rng: np.random.Generator,
) -> FidelityReport:
    """Output and Jacobian gaps between the surrogate and the exact layer map.

    ``eps1`` is the largest Euclidean output gap, ``eps2`` the largest
    Frobenius gap between Jacobians over the angle controls. ``mean_cosine``
    averages, over probes, the cosine between the two gradients of a random
    linear readout ``w . Q(x)``.
    """
    if num_probes < 1:
        raise ValueError("num_probes must be >= 1")
    probes = sample_angle_ball(center, config, radius, num_probes, rng)
    d = config.angle_dim
    eps1 = eps2 = 0.0
    cosines = []
    for x in probes:
        eps1 = max(eps1, float(np.linalg.norm(qtdnn(x) - exact_layer_map(x, config))))
        j_sur = qtdnn.jacobian(x)[:, :d]
        j_ref = parameter_shift_jacobian(x, config)
        eps2 = max(eps2, float(np.linalg.norm(j_sur - j_ref)))
        w = rng.standard_normal(config.num_qubits)
        g_sur, g_ref = w @ j_sur, w @ j_ref
        denom = np.linalg.norm(g_sur) * np.linalg.norm(g_ref)
        cosines.append(float(g_sur @ g_ref / denom) if denom > 0 else 0.0)
    return FidelityReport(
        eps1=eps1,
        eps2=eps2,
        radius=float(radius),
        num_probes=int(num_probes),
        center=np.asarray(center, dtype=float).tolist(),
        mean_cosine=float(np.mean(cosines)),
    )
