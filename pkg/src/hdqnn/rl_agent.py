"""TD3 with a hybrid actor whose middle block can be swapped.

Actor: ``PreDNN -> middle block -> PostDNN`` with ``d_clink`` bypass features
routed from the tail of the PreDNN output straight into the PostDNN. The
middle block is a shot-sampled quantum layer (backpropagated through its
qtDNN surrogate), a dense layer, a random bit generator, or a zero layer.
"""

from __future__ import annotations

import copy
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .envs import Env
from .neural import DenseNet, Optimizer, mse_loss, soft_update
from .pqc_layer import CallCounter, PqcConfig, encode_controls, encode_controls_grad, run_quantum_layer
from .quantum_core import NOISELESS
from .surrogate import QtBuffer, QtDnn, fit_surrogate

VARIANTS = ("pqc", "fc", "rbg", "zero")
CHECKPOINT_VERSION = 1


@dataclass
class AgentConfig:
    gamma: float = 0.99
    tau: float = 5e-3
    lr: float = 3e-4
    batch_size: int = 256
    actor_delay: int = 2
    exploration_sigma: float = 0.05  # fraction of the half action range
    target_noise: float = 0.1  # fraction of the full action range
    target_clip: float = 0.25  # fraction of the full action range
    warmup_steps: int = 1000
    replay_capacity: int = 1_000_000
    hidden: int = 256
    d_clink: int = 10

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.actor_delay < 1:
            raise ValueError("actor_delay must be >= 1")


@dataclass
class QtConfig:
    hidden: int = 2048
    n_tiny: int = 32
    tiny_batch_size: int = 64
    buffer_capacity: int = 10_000
    buffer_fraction: float = 0.5


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    q_i: np.ndarray
    q_o: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer of transitions with uniform sampling."""

    FIELDS = ("s", "a", "q_i", "q_o", "r", "s_next", "done")

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, qi_dim: int = 0, qo_dim: int = 0):
        self.capacity = capacity
        self.size = 0
        self.pos = 0
        self.data = {
            "s": np.zeros((capacity, obs_dim)),
            "a": np.zeros((capacity, act_dim)),
            "q_i": np.zeros((capacity, qi_dim)),
            "q_o": np.zeros((capacity, qo_dim)),
            "r": np.zeros(capacity),
            "s_next": np.zeros((capacity, obs_dim)),
            "done": np.zeros(capacity),
        }

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        for name in self.FIELDS:
            self.data[name][self.pos] = getattr(t, name)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict:
        if n > self.size:
            raise ValueError(f"cannot sample {n} from {self.size} transitions")
        idx = rng.integers(0, self.size, size=n)
        return {name: arr[idx] for name, arr in self.data.items()}

    def state_arrays(self) -> dict:
        return {f"replay_{k}": v[: self.size] for k, v in self.data.items()}

    def load_arrays(self, arrays: dict, pos: int) -> None:
        for k in self.FIELDS:
            v = arrays[f"replay_{k}"]
            self.data[k][: len(v)] = v
            self.size = len(v)
        self.pos = pos


# -- middle blocks ---------------------------------------------------------


class MiddleBlock:
    """Maps an encoded control vector to an ``N``-vector."""

    variant = ""
    trainable = False

    def __init__(self, pqc: PqcConfig):
        self.pqc = pqc

    def run(self, q_i, rng, counter) -> np.ndarray:
        """Forward used while acting in the environment."""
        return self.forward(np.asarray(q_i)[None, :], rng)[0][0]

    def forward(self, q_i, rng):
        """Batched forward used during updates. Returns ``(out, cache)``."""
        raise NotImplementedError

    def backward(self, cache, upstream):
        """Returns ``(param_grads or None, d/d q_i)``."""
        raise NotImplementedError


class QuantumBlock(MiddleBlock):
    variant = "pqc"

    def __init__(self, pqc: PqcConfig, qt: QtConfig, rng):
        super().__init__(pqc)
        self.qt = qt
        self.qtdnn = QtDnn(pqc, qt.hidden, rng)
        self.buffer = QtBuffer(qt.buffer_capacity, pqc.control_dim, pqc.num_qubits)

    def run(self, q_i, rng, counter):
        return run_quantum_layer(q_i, self.pqc, rng, counter)

    def forward(self, q_i, rng):
        return self.qtdnn.forward(q_i)

    def backward(self, cache, upstream):
        return None, self.qtdnn.backward(cache, upstream)


class DenseBlock(MiddleBlock):
    variant = "fc"
    trainable = True

    def __init__(self, pqc: PqcConfig, width: int, rng):
        super().__init__(pqc)
        self.net = DenseNet([pqc.control_dim, width, pqc.num_qubits], rng, output_activation="sigmoid")

    def run(self, q_i, rng, counter):
        return self.net(q_i)

    def forward(self, q_i, rng):
        return self.net.forward(q_i)

    def backward(self, cache, upstream):
        return self.net.backward(cache, upstream)


class RandomBitBlock(MiddleBlock):
    variant = "rbg"

    def run(self, q_i, rng, counter):
        return rng.integers(0, 2, self.pqc.num_qubits).astype(float)

    def forward(self, q_i, rng):
        return rng.integers(0, 2, (len(q_i), self.pqc.num_qubits)).astype(float), len(q_i)

    def backward(self, cache, upstream):
        return None, np.zeros((cache, self.pqc.control_dim))


class ZeroBlock(MiddleBlock):
    variant = "zero"

    def run(self, q_i, rng, counter):
        return np.zeros(self.pqc.num_qubits)

    def forward(self, q_i, rng):
        return np.zeros((len(q_i), self.pqc.num_qubits)), len(q_i)

    def backward(self, cache, upstream):
        return None, np.zeros((cache, self.pqc.control_dim))


def make_middle(variant: str, pqc: PqcConfig, qt: QtConfig, rng) -> MiddleBlock:
    if variant == "pqc":
        return QuantumBlock(pqc, qt, rng)
    if variant == "fc":
        return DenseBlock(pqc, qt.hidden, rng)
    if variant == "rbg":
        return RandomBitBlock(pqc)
    if variant == "zero":
        return ZeroBlock(pqc)
    raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")


# -- actor and critics -----------------------------------------------------


class HybridActor:
    def __init__(self, obs_dim: int, act_dim: int, action_low, action_high, middle: MiddleBlock, hidden: int, d_clink: int, rng):
        self.pqc = middle.pqc
        self.middle = middle
        self.d_clink = d_clink
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        n_ctrl = self.pqc.control_dim
        self.pre = DenseNet([obs_dim, hidden, n_ctrl + d_clink], rng)
        self.post = DenseNet([self.pqc.num_qubits + d_clink, hidden, act_dim], rng, output_activation="tanh")

    @property
    def half_range(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    def _scale(self, y):
        return self.action_low + (y + 1.0) * self.half_range

    def trainable_nets(self) -> list[DenseNet]:
        nets = [self.pre, self.post]
        if self.middle.trainable:
            nets.append(self.middle.net)
        return nets

    def act(self, s, rng, counter=None):
        """Real-layer forward for one state. Returns ``(action, q_i, q_o)``."""
        raw = self.pre(s)
        n_ctrl = self.pqc.control_dim
        q_i = encode_controls(raw[:n_ctrl], self.pqc)
        q_o = self.middle.run(q_i, rng, counter)
        y = self.post(np.concatenate([q_o, raw[n_ctrl:]]))
        return self._scale(y), q_i, q_o

    def forward(self, states, rng):
        """Differentiable batched forward (surrogate in place of the PQC)."""
        n_ctrl = self.pqc.control_dim
        raw, pre_tape = self.pre.forward(states)
        q_i = encode_controls(raw[:, :n_ctrl], self.pqc)
        mid, mid_cache = self.middle.forward(q_i, rng)
        y, post_tape = self.post.forward(np.concatenate([mid, raw[:, n_ctrl:]], axis=1))
        cache = (raw, pre_tape, mid_cache, post_tape)
        return self._scale(y), cache

    def backward(self, cache, d_action) -> dict:
        raw, pre_tape, mid_cache, post_tape = cache
        n_ctrl, n_q = self.pqc.control_dim, self.pqc.num_qubits
        post_grads, d_z = self.post.backward(post_tape, d_action * self.half_range)
        mid_grads, d_qi = self.middle.backward(mid_cache, d_z[:, :n_q])
        d_raw = np.concatenate([d_qi * encode_controls_grad(raw[:, :n_ctrl], self.pqc), d_z[:, n_q:]], axis=1)
        pre_grads, _ = self.pre.backward(pre_tape, d_raw)
        grads = {"pre": pre_grads, "post": post_grads}
        if mid_grads is not None:
            grads["middle"] = mid_grads
        return grads

    def copy_for_target(self) -> "HybridActor":
        twin = object.__new__(HybridActor)
        twin.__dict__.update(self.__dict__)
        twin.pre = self.pre.copy()
        twin.post = self.post.copy()
        if self.middle.trainable:
            middle = object.__new__(type(self.middle))
            middle.__dict__.update(self.middle.__dict__)
            middle.net = self.middle.net.copy()
            twin.middle = middle
        return twin


class Critic:
    """Two-block critic: state trunk, then a head on ``[trunk(s) | a]``."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, rng):
        self.trunk = DenseNet([obs_dim, hidden], rng, output_activation="leaky_relu")
        self.head = DenseNet([hidden + act_dim, hidden, 1], rng)

    @property
    def nets(self) -> list[DenseNet]:
        return [self.trunk, self.head]

    def __call__(self, s, a) -> np.ndarray:
        return self.head(np.concatenate([self.trunk(s), a], axis=1))[:, 0]

    def forward(self, s, a):
        h, t1 = self.trunk.forward(s)
        q, t2 = self.head.forward(np.concatenate([h, a], axis=1))
        return q[:, 0], (t1, t2, h.shape[1])

    def backward(self, cache, d_q):
        t1, t2, width = cache
        head_grads, d_in = self.head.backward(t2, np.asarray(d_q)[:, None])
        trunk_grads, _ = self.trunk.backward(t1, d_in[:, :width])
        return [trunk_grads, head_grads], d_in[:, width:]

    def copy(self) -> "Critic":
        twin = object.__new__(Critic)
        twin.trunk = self.trunk.copy()
        twin.head = self.head.copy()
        return twin


# -- agent -----------------------------------------------------------------

STREAMS = ("init", "env", "explore", "pqc", "replay", "qt", "target", "middle")


class TD3Agent:
    def __init__(self, env: Env, variant: str, pqc: PqcConfig, agent: AgentConfig, qt: QtConfig, seed: int = 0):
        self.variant = variant
        self.config = agent
        self.qt_config = qt
        self.pqc = pqc
        seqs = np.random.SeedSequence(seed).spawn(len(STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}
        init = self.rngs["init"]
        obs, act = env.obs_dim, env.act_dim
        middle = make_middle(variant, pqc, qt, init)
        self.actor = HybridActor(obs, act, env.action_low, env.action_high, middle, agent.hidden, agent.d_clink, init)
        self.critics = [Critic(obs, act, agent.hidden, init) for _ in range(2)]
        self.actor_target = self.actor.copy_for_target()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opts = [Optimizer(n, agent.lr) for n in self.actor.trainable_nets()]
        self.critic_opts = [[Optimizer(n, agent.lr) for n in c.nets] for c in self.critics]
        is_pqc = variant == "pqc"
        self.replay = ReplayBuffer(
            agent.replay_capacity, obs, act,
            pqc.control_dim if is_pqc else 0, pqc.num_qubits if is_pqc else 0,
        )
        self.counter = CallCounter()
        self.eval_counter = CallCounter()
        self.update_quantum_calls = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self.fit_records: list[dict] = []

    @property
    def qtdnn(self) -> QtDnn | None:
        return getattr(self.actor.middle, "qtdnn", None)

    @property
    def action_range(self) -> np.ndarray:
        return self.actor.action_high - self.actor.action_low

    # phase 1
    def explore_step(self, env: Env, s, warmup: bool = False):
        """Act with Gaussian exploration (uniform actions during warm-up)."""
        a_det, q_i, q_o = self.actor.act(s, self.rngs["pqc"], self.counter)
        rng = self.rngs["explore"]
        if warmup:
            a = rng.uniform(env.action_low, env.action_high)
        else:
            sigma = self.config.exploration_sigma * self.actor.half_range
            a = a_det + sigma * rng.standard_normal(a_det.shape)
        a = env.clip_action(a)
        s_next, r, done = env.step(a)
        keep_q = self.variant == "pqc"
        t = Transition(
            s=np.asarray(s), a=a,
            q_i=q_i if keep_q else np.zeros(0), q_o=q_o if keep_q else np.zeros(0),
            r=r, s_next=s_next, done=done,
        )
        self.replay.add(t)
        if keep_q:
            self.actor.middle.buffer.record_pair(q_i, q_o)
        return t

    # phase 2
    def fit_qtdnn(self, batch) -> list[float]:
        qt = self.qt_config
        trace = fit_surrogate(
            self.qtdnn, batch["q_i"], batch["q_o"], qt.n_tiny, qt.tiny_batch_size,
            self.rngs["qt"], self.actor.middle.buffer, qt.buffer_fraction,
        )
        if trace:
            center = batch["q_i"].mean(axis=0)
            radius = float(np.max(np.linalg.norm(batch["q_i"][:, : self.pqc.angle_dim] - center[: self.pqc.angle_dim], axis=1)))
            self.fit_records = (self.fit_records + [{"center": center.tolist(), "radius": radius, "bce": float(np.mean(trace)), "update": self.critic_updates}])[-4:]
        return trace

    def target_values(self, batch) -> np.ndarray:
        cfg = self.config
        rng = self.rngs["target"]
        s2 = batch["s_next"]
        a2, _ = self.actor_target.forward(s2, self.rngs["middle"])
        rng_ = self.action_range
        noise = np.clip(cfg.target_noise * rng_ * rng.standard_normal(a2.shape), -cfg.target_clip * rng_, cfg.target_clip * rng_)
        a2 = np.clip(a2 + noise, self.actor.action_low, self.actor.action_high)
        q_next = np.minimum(self.critic_targets[0](s2, a2), self.critic_targets[1](s2, a2))
        return batch["r"] + cfg.gamma * (1.0 - batch["done"]) * q_next

    # phase 3
    def critic_update(self, batch) -> tuple[float, float]:
        y = self.target_values(batch)
        losses = []
        for critic, opts in zip(self.critics, self.critic_opts):
            q, cache = critic.forward(batch["s"], batch["a"])
            loss, d_q = mse_loss(q, y)
            grads, _ = critic.backward(cache, d_q)
            for opt, g in zip(opts, grads):
                opt.step(g)
            losses.append(loss)
        self.critic_updates += 1
        return losses[0], losses[1]

    # phase 4
    def actor_update(self, batch) -> float:
        if self.variant == "pqc" and self.qtdnn is None:
            raise RuntimeError("surrogate missing for the quantum variant")
        before = self.counter.pqc_calls
        s = batch["s"]
        a, cache = self.actor.forward(s, self.rngs["middle"])
        q, c_cache = self.critics[0].forward(s, a)
        loss = -float(np.mean(q))
        _, d_a = self.critics[0].backward(c_cache, np.full(len(q), -1.0 / len(q)))
        grads = self.actor.backward(cache, d_a)
        ordered = [grads["pre"], grads["post"]] + ([grads["middle"]] if "middle" in grads else [])
        for opt, g in zip(self.actor_opts, ordered):
            opt.step(g)
        self.update_quantum_calls += self.counter.pqc_calls - before
        self.actor_updates += 1
        return loss

    def soft_update_targets(self) -> None:
        tau = self.config.tau
        for tgt, net in zip(self.actor_target.trainable_nets(), self.actor.trainable_nets()):
            soft_update(tgt, net, tau)
        for tgt, c in zip(self.critic_targets, self.critics):
            soft_update(tgt.trunk, c.trunk, tau)
            soft_update(tgt.head, c.head, tau)

    def update(self) -> dict:
        batch = self.replay.sample(self.config.batch_size, self.rngs["replay"])
        record = {"critic_loss_0": None, "critic_loss_1": None, "policy_loss": None, "bce": None}
        if self.variant == "pqc":
            trace = self.fit_qtdnn(batch)
            record["bce"] = float(np.mean(trace)) if trace else None
        record["critic_loss_0"], record["critic_loss_1"] = self.critic_update(batch)
        if self.critic_updates % self.config.actor_delay == 0:
            record["policy_loss"] = self.actor_update(batch)
            self.soft_update_targets()
        return record

    # persistence
    def _nets(self) -> dict[str, DenseNet]:
        nets = {"actor.pre": self.actor.pre, "actor.post": self.actor.post,
                "target.pre": self.actor_target.pre, "target.post": self.actor_target.post}
        if self.actor.middle.trainable:
            nets["actor.middle"] = self.actor.middle.net
            nets["target.middle"] = self.actor_target.middle.net
        if self.qtdnn is not None:
            nets["qtdnn"] = self.qtdnn.net
        for j in range(2):
            nets[f"critic{j}.trunk"] = self.critics[j].trunk
            nets[f"critic{j}.head"] = self.critics[j].head
            nets[f"critic_target{j}.trunk"] = self.critic_targets[j].trunk
            nets[f"critic_target{j}.head"] = self.critic_targets[j].head
        return nets

    def _optimizers(self) -> dict:
        opts = {f"actor{j}": o for j, o in enumerate(self.actor_opts)}
        for j, pair in enumerate(self.critic_opts):
            for k, o in enumerate(pair):
                opts[f"critic{j}.{k}"] = o
        if self.qtdnn is not None:
            opts["qtdnn"] = self.qtdnn.optimizer
        return opts

    def state_dict(self) -> tuple[dict, dict]:
        """JSON-able metadata plus named arrays."""
        arrays = {f"net:{k}": n.flat_params() for k, n in self._nets().items()}
        adam = {}
        for k, o in self._optimizers().items():
            st = o.state
            adam[k] = {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps, "step": st.step}
            for i, (m, v) in enumerate(zip(st.m, st.v)):
                arrays[f"adam:{k}:m{i}"] = m
                arrays[f"adam:{k}:v{i}"] = v
        arrays.update(self.replay.state_arrays())
        if self.qtdnn is not None:
            buf = self.actor.middle.buffer
            arrays["qtbuf_qi"], arrays["qtbuf_qo"] = buf.arrays()
        meta = {
            "adam": adam,
            "rngs": {k: r.bit_generator.state for k, r in self.rngs.items()},
            "counter": [self.counter.pqc_calls, self.counter.shot_executions],
            "eval_counter": [self.eval_counter.pqc_calls, self.eval_counter.shot_executions],
            "update_quantum_calls": self.update_quantum_calls,
            "critic_updates": self.critic_updates,
            "actor_updates": self.actor_updates,
            "replay_pos": self.replay.pos,
            "fit_records": self.fit_records,
        }
        return meta, arrays

    def load_state_dict(self, meta: dict, arrays: dict) -> None:
        for k, n in self._nets().items():
            n.set_flat_params(arrays[f"net:{k}"])
        for k, o in self._optimizers().items():
            st = o.state
            for attr, val in meta["adam"][k].items():
                setattr(st, attr, val)
            st.m = [np.array(arrays[f"adam:{k}:m{i}"]) for i in range(len(st.m))]
            st.v = [np.array(arrays[f"adam:{k}:v{i}"]) for i in range(len(st.v))]
        for k, state in meta["rngs"].items():
            self.rngs[k].bit_generator.state = state
        self.counter.pqc_calls, self.counter.shot_executions = meta["counter"]
        self.eval_counter.pqc_calls, self.eval_counter.shot_executions = meta["eval_counter"]
        self.update_quantum_calls = meta["update_quantum_calls"]
        self.critic_updates = meta["critic_updates"]
        self.actor_updates = meta["actor_updates"]
        self.fit_records = meta["fit_records"]
        self.replay.load_arrays(arrays, meta["replay_pos"])
        if "qtbuf_qi" in arrays:
            buf = self.actor.middle.buffer
            buf._size = buf._next = 0
            for qi, qo in zip(arrays["qtbuf_qi"], arrays["qtbuf_qo"]):
                buf.record_pair(qi, qo)


def actor_forward(actor: HybridActor, s, mode: str, rng, counter=None):
    """One-state actor evaluation.

    ``mode="real_pqc"`` runs the middle block as deployed (PQC calls are
    counted); ``mode="surrogate"`` routes through the frozen qtDNN.
    """
    if mode == "real_pqc":
        return actor.act(s, rng, counter)
    if mode != "surrogate":
        raise ValueError(f"unknown mode {mode!r}")
    a, cache = actor.forward(np.asarray(s)[None, :], rng)
    raw = cache[0][0]
    q_i = encode_controls(raw[: actor.pqc.control_dim], actor.pqc)
    mid = actor.middle.forward(q_i[None, :], rng)[0][0]
    return a[0], q_i, mid


def noiseless_view(actor: HybridActor) -> HybridActor:
    """Shallow actor copy whose quantum layer runs without gate noise."""
    clean = replace(actor.pqc, noise=NOISELESS)
    middle = copy.copy(actor.middle)
    middle.pqc = clean
    twin = copy.copy(actor)
    twin.middle, twin.pqc = middle, clean
    return twin


def evaluate(actor: HybridActor, env: Env, episodes: int = 10, seed: int = 0, counter: CallCounter | None = None) -> tuple[float, float]:
    """Deterministic-policy returns over ``episodes`` seeded episodes."""
    seeds = np.random.SeedSequence(seed).spawn(episodes + 1)
    pqc_rng = np.random.default_rng(seeds[-1])
    returns = []
    for ep in range(episodes):
        s = env.reset(seed=seeds[ep])
        total, done = 0.0, False
        while not done and not env.time_limit_reached:
            a, _, _ = actor.act(s, pqc_rng, counter)
            s, r, done = env.step(a)
            total += r
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns))


# -- training loop ---------------------------------------------------------


@dataclass
class TrainSettings:
    total_steps: int = 50_000
    eval_interval: int = 1000
    eval_episodes: int = 10
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints
    record_wall_time: bool = False
    eval_noiseless: bool = False  # default: evaluate under the training noise regime


class MetricsStream:
    """Collects metric records and optionally mirrors them to a JSONL file."""

    def __init__(self, path: Path | None = None):
        self.records: list[dict] = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def emit(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def of_type(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["type"] == kind]


@dataclass
class LoopState:
    step: int = 0
    episode: int = 0
    episode_step: int = 0
    obs: list | None = None
    env_state: dict | None = None


def save_checkpoint(path, agent: TD3Agent, loop: LoopState, env: Env, extra: dict | None = None) -> None:
    meta, arrays = agent.state_dict()
    meta.update(
        version=CHECKPOINT_VERSION,
        variant=agent.variant,
        pqc=agent.pqc.to_dict(),
        agent=asdict(agent.config),
        qt=asdict(agent.qt_config),
        loop={"step": loop.step, "episode": loop.episode, "episode_step": loop.episode_step,
              "obs": None if loop.obs is None else list(map(float, loop.obs))},
        env_id=env.env_id,
        env_state=env.get_state(),
        extra=extra or {},
    )
    buf = io.BytesIO()
    np.savez_compressed(buf, __meta__=np.array(json.dumps(meta)), **arrays)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    return meta, arrays


def agent_from_checkpoint(meta: dict, arrays: dict, env: Env) -> TD3Agent:
    agent = TD3Agent(env, meta["variant"], PqcConfig.from_dict(meta["pqc"]), AgentConfig(**meta["agent"]), QtConfig(**meta["qt"]))
    agent.load_state_dict(meta, arrays)
    return agent


def train(
    env: Env,
    variant: str,
    pqc: PqcConfig,
    agent_config: AgentConfig,
    qt: QtConfig,
    settings: TrainSettings,
    seed: int = 0,
    metrics: MetricsStream | None = None,
    checkpoint_path=None,
    resume_from=None,
    on_eval: Callable[[dict], None] | None = None,
) -> TD3Agent:
    """Run the collect / fit / critic / delayed-actor / target loop.

    Emits one ``update`` record per update epoch and one ``eval`` record per
    evaluation. On an exception a checkpoint is written (when a path is
    given) before re-raising.
    """
    metrics = metrics if metrics is not None else MetricsStream()
    if resume_from is not None:
        meta, arrays = read_checkpoint(resume_from)
        agent = agent_from_checkpoint(meta, arrays, env)
        lp = meta["loop"]
        loop = LoopState(lp["step"], lp["episode"], lp["episode_step"], lp["obs"])
        env.set_state(meta["env_state"])
        s = None if loop.obs is None else np.asarray(loop.obs)
    else:
        agent = TD3Agent(env, variant, pqc, agent_config, qt, seed)
        loop = LoopState()
        s = None
    cfg = agent.config
    eval_env = copy.deepcopy(env)  # evaluation never disturbs the training episode
    t0 = time.perf_counter()
    env_seeds = agent.rngs["env"]
    try:
        while loop.step < settings.total_steps:
            if s is None:
                s = env.reset(seed=int(env_seeds.integers(2**31)))
                loop.episode_step = 0
            t = agent.explore_step(env, s, warmup=loop.step < cfg.warmup_steps)
            loop.step += 1
            loop.episode_step += 1
            s = t.s_next
            if t.done or env.time_limit_reached:
                s = None
                loop.episode += 1
            if loop.step >= cfg.warmup_steps and len(agent.replay) >= cfg.batch_size:
                rec = agent.update()
                rec = {"type": "update", "step": loop.step, "episode": loop.episode, **rec,
                       "pqc_calls": agent.counter.pqc_calls}
                if settings.record_wall_time:
                    rec["wall_time"] = time.perf_counter() - t0
                metrics.emit(rec)
            if settings.eval_interval and loop.step % settings.eval_interval == 0:
                eval_actor = noiseless_view(agent.actor) if settings.eval_noiseless else agent.actor
                mean, std = evaluate(eval_actor, eval_env, settings.eval_episodes, seed=10_000 + loop.step, counter=agent.eval_counter)
                rec = {"type": "eval", "step": loop.step, "episode": loop.episode, "mean_return": mean,
                       "std_return": std, "pqc_calls": agent.counter.pqc_calls,
                       "eval_pqc_calls": agent.eval_counter.pqc_calls}
                metrics.emit(rec)
                if on_eval is not None:
                    on_eval({**rec, "minutes": (time.perf_counter() - t0) / 60.0})
            if checkpoint_path and settings.checkpoint_interval and loop.step % settings.checkpoint_interval == 0:
                loop.obs = None if s is None else list(s)
                save_checkpoint(checkpoint_path, agent, loop, env)
    except Exception:
        if checkpoint_path:
            loop.obs = None if s is None else list(s)
            save_checkpoint(checkpoint_path, agent, loop, env, extra={"crashed": True})
        raise
    if checkpoint_path:
        loop.obs = None if s is None else list(s)
        save_checkpoint(checkpoint_path, agent, loop, env)
    agent.elapsed_minutes = (time.perf_counter() - t0) / 60.0
    return agent

