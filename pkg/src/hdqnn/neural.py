"""Small feed-forward networks with hand-written reverse mode and Adam.

Everything works on row batches: ``x`` has shape ``(batch, n_in)`` (a 1-D
input is treated as a batch of one and returned 1-D).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.01
BCE_CLAMP = 1e-7
ACTIVATIONS = ("linear", "tanh", "sigmoid", "leaky_relu")


class StaleTapeError(RuntimeError):
    """A tape was reused, or the network changed after it was recorded."""


def _activate(name: str, z: np.ndarray, slope: float) -> np.ndarray:
    if name == "linear":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "leaky_relu":
        return np.maximum(z, slope * z)  # valid for slope < 1
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, y: np.ndarray, slope: float) -> np.ndarray:
    if name == "linear":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "leaky_relu":
        return (z > 0) * (1.0 - slope) + slope
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class GradientTape:
    inputs: list  # input to each affine layer
    pre: list  # pre-activations
    outs: list  # post-activations
    version: int
    squeeze: bool
    consumed: bool = False


class DenseNet:
    """Affine layers with LeakyReLU between them and a chosen output activation."""

    def __init__(
        self,
        layer_sizes,
        rng: np.random.Generator | None = None,
        output_activation: str = "linear",
        hidden_activation: str = "leaky_relu",
        slope: float = LEAKY_SLOPE,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        for name in (output_activation, hidden_activation):
            if name not in ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.output_activation = output_activation
        self.hidden_activation = hidden_activation
        self.slope = slope
        self.version = 0
        rng = rng if rng is not None else np.random.default_rng()
        params = []
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(n_in)
            params.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            params.append(rng.uniform(-bound, bound, size=n_out))
        self._bind(np.concatenate([p.ravel() for p in params]))

    def _bind(self, flat: np.ndarray) -> None:
        # every entry of self.params is a view into the single flat buffer
        self.flat = flat
        self.params = []
        offset = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.params.append(flat[offset : offset + n_in * n_out].reshape(n_in, n_out))
            offset += n_in * n_out
            self.params.append(flat[offset : offset + n_out])
            offset += n_out

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def param_count(self) -> int:
        return int(self.flat.size)

    def activation(self, layer: int) -> str:
        return self.output_activation if layer == self.num_layers - 1 else self.hidden_activation

    def touch(self) -> None:
        """Mark parameters as modified; outstanding tapes become stale."""
        self.version += 1

    def forward(self, x) -> tuple[np.ndarray, GradientTape]:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected input dim {self.layer_sizes[0]}, got {h.shape[1]}")
        inputs, pre, outs = [], [], []
        for layer in range(self.num_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            inputs.append(h)
            z = h @ W + b
            h = _activate(self.activation(layer), z, self.slope)
            pre.append(z)
            outs.append(h)
        tape = GradientTape(inputs, pre, outs, self.version, squeeze)
        return (h[0] if squeeze else h), tape

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, tape: GradientTape, upstream) -> tuple[list, np.ndarray]:
        if tape.consumed or tape.version != self.version:
            raise StaleTapeError("tape is stale; run forward again")
        tape.consumed = True
        g = np.asarray(upstream, dtype=float)
        if tape.squeeze:
            g = g[None, :]
        grads = [None] * len(self.params)
        for layer in reversed(range(self.num_layers)):
            act = self.activation(layer)
            g = g * _activation_grad(act, tape.pre[layer], tape.outs[layer], self.slope)
            grads[2 * layer] = tape.inputs[layer].T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self.params[2 * layer].T
        return grads, (g[0] if tape.squeeze else g)

    def copy(self) -> "DenseNet":
        twin = DenseNet.__new__(DenseNet)
        twin.layer_sizes = list(self.layer_sizes)
        twin.output_activation = self.output_activation
        twin.hidden_activation = self.hidden_activation
        twin.slope = self.slope
        twin.version = 0
        twin._bind(self.flat.copy())
        return twin

    def same_topology(self, other: "DenseNet") -> bool:
        return (
            self.layer_sizes == other.layer_sizes
            and self.output_activation == other.output_activation
            and self.hidden_activation == other.hidden_activation
        )

    def flat_params(self) -> np.ndarray:
        return self.flat.copy()

    def flatten_grads(self, grads: list) -> np.ndarray:
        return np.concatenate([g.ravel() for g in grads])

    def set_flat_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.param_count:
            raise ValueError(f"expected {self.param_count} values, got {flat.size}")
        self.flat[:] = flat
        self.touch()

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "output_activation": self.output_activation,
            "hidden_activation": self.hidden_activation,
            "slope": self.slope,
            "params": self.flat_params().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        net = cls(
            d["layer_sizes"],
            np.random.default_rng(0),
            output_activation=d["output_activation"],
            hidden_activation=d["hidden_activation"],
            slope=d["slope"],
        )
        net.set_flat_params(d["params"])
        return net


def net_forward(net: DenseNet, x):
    return net.forward(x)


def net_backward(net: DenseNet, tape: GradientTape, upstream):
    return net.backward(tape, upstream)


def bce_loss(pred, target, clamp: float = BCE_CLAMP) -> tuple[float, np.ndarray]:
    """Factorised binary cross-entropy, averaged over qubits and batch rows.

    Returns the loss and its gradient with respect to ``pred``. Predictions
    are clamped to ``[clamp, 1 - clamp]``; the gradient is zero where the
    clamp is active.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    p = np.clip(pred, clamp, 1.0 - clamp)
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    grad = (p - target) / (p * (1.0 - p)) / pred.size
    grad = np.where((pred < clamp) | (pred > 1.0 - clamp), 0.0, grad)
    return float(loss), grad


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    diff = pred - np.asarray(target, dtype=float)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 3e-4, **kwargs) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "m": [a.tolist() for a in self.m],
            "v": [a.tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(
            lr=d["lr"],
            beta1=d["beta1"],
            beta2=d["beta2"],
            eps=d["eps"],
            step=d["step"],
            m=[np.asarray(a, dtype=float) for a in d["m"]],
            v=[np.asarray(a, dtype=float) for a in d["v"]],
        )


def adam_step(params: list, grads: list, state: AdamState) -> list:
    """Bias-corrected Adam update, applied in place. Returns ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.eps
        p -= (state.lr / c1) * m / denom
    return params


class Optimizer:
    """Adam over a network's flat parameter buffer; bumps its version per step."""

    def __init__(self, net: DenseNet, lr: float = 3e-4):
        self.net = net
        self.state = AdamState.for_params([net.flat], lr=lr)

    def step(self, grads: list) -> None:
        adam_step([self.net.flat], [self.net.flatten_grads(grads)], self.state)
        self.net.touch()


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> DenseNet:
    """``target <- tau * online + (1 - tau) * target`` per parameter."""
    if not target.same_topology(online):
        raise ValueError("soft_update needs identical topologies")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    target.flat *= 1.0 - tau
    target.flat += tau * online.flat
    target.touch()
    return target


def relative_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    # Central differences at h=1e-5 carry ~1e-11 absolute roundoff, so
    # gradients far below the floor are compared absolutely instead.
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def gradient_check(net: DenseNet, x, rng: np.random.Generator, probes: int = 100, h: float = 1e-5) -> float:
    """Worst relative error of ``net_backward`` against central differences.

    The scalar probed is ``w . net(x)`` for a random readout ``w``. ``probes``
    parameter coordinates and up to ``probes`` input coordinates are drawn at
    random; parameters are restored afterwards.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = rng.standard_normal((x.shape[0], net.layer_sizes[-1]))

    def scalar(inp) -> float:
        return float(np.sum(w * net(inp)))

    _, tape = net.forward(x)
    grads, dx = net.backward(tape, w)
    flat_grad = net.flatten_grads(grads)
    worst = 0.0
    for j in rng.choice(net.param_count, size=min(probes, net.param_count), replace=False):
        saved = net.flat[j]
        net.flat[j] = saved + h
        up = scalar(x)
        net.flat[j] = saved - h
        down = scalar(x)
        net.flat[j] = saved
        worst = max(worst, float(relative_error(flat_grad[j], (up - down) / (2 * h))))
    for j in rng.choice(x.size, size=min(probes, x.size), replace=False):
        xp, xm = x.copy(), x.copy()
        xp.flat[j] += h
        xm.flat[j] -= h
        worst = max(worst, float(relative_error(dx.flat[j], (scalar(xp) - scalar(xm)) / (2 * h))))
    net.touch()
    return worst
