"""Small continuous-control environments with a uniform step contract.

``reset(seed)`` returns an observation. ``step(action)`` clips the action to
the bounds and returns ``(obs, reward, done)`` where ``done`` marks a true
terminal state. Episodes also end when ``time_limit_reached`` turns true;
that is a truncation and does not cut off bootstrapping.
"""

from __future__ import annotations

import numpy as np


class Env:
    env_id = ""
    obs_dim: int
    act_dim: int
    max_steps: int

    def __init__(self, action_low, action_high, max_steps: int):
        self.action_low = np.asarray(action_low, dtype=float)
        self.action_high = np.asarray(action_high, dtype=float)
        self.max_steps = max_steps
        self.t = 0
        self._rng = np.random.default_rng()

    @property
    def time_limit_reached(self) -> bool:
        return self.t >= self.max_steps

    def clip_action(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=float), self.action_low, self.action_high)

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.t = 0
        self._reset_state()
        return self._obs()

    def step(self, action):
        a = self.clip_action(action)
        self.t += 1
        reward, done = self._advance(a)
        return self._obs(), float(reward), bool(done)

    def get_state(self) -> dict:
        return {"t": self.t, "rng": self._rng.bit_generator.state, "state": self._state_values()}

    def set_state(self, state: dict) -> None:
        self.t = state["t"]
        self._rng = np.random.default_rng()
        self._rng.bit_generator.state = state["rng"]
        self._load_state_values(state["state"])

    def _reset_state(self): ...
    def _advance(self, a): ...
    def _obs(self): ...
    def _state_values(self) -> list: ...
    def _load_state_values(self, values) -> None: ...


def _wrap_angle(x: float) -> float:
    return ((x + np.pi) % (2 * np.pi)) - np.pi


class PendulumEnv(Env):
    """Torque-limited pendulum swing-up; observation ``(cos th, sin th, th_dot)``."""

    env_id = "pendulum"
    obs_dim = 3
    act_dim = 1
    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    mass = 1.0
    length = 1.0

    def __init__(self, max_steps: int = 200):
        super().__init__([-self.max_torque], [self.max_torque], max_steps)
        self.theta = 0.0
        self.theta_dot = 0.0

    def _reset_state(self):
        self.theta = self._rng.uniform(-np.pi, np.pi)
        self.theta_dot = self._rng.uniform(-1.0, 1.0)

    def _advance(self, a):
        u = float(a[0])
        th, thdot = self.theta, self.theta_dot
        cost = _wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
        thdot = thdot + (3 * self.g / (2 * self.length) * np.sin(th) + 3.0 / (self.mass * self.length**2) * u) * self.dt
        thdot = float(np.clip(thdot, -self.max_speed, self.max_speed))
        self.theta = th + thdot * self.dt
        self.theta_dot = thdot
        return -cost, False

    def _obs(self):
        return np.array([np.cos(self.theta), np.sin(self.theta), self.theta_dot])

    def _state_values(self):
        return [self.theta, self.theta_dot]

    def _load_state_values(self, values):
        self.theta, self.theta_dot = (float(v) for v in values)


class PointMassReacher(Env):
    """Drive a damped point mass to a random target in the unit square.

    Observation is ``(target - position, velocity)``. The episode terminates
    once the mass sits within ``tolerance`` of the target.
    """

    env_id = "reacher"
    obs_dim = 4
    act_dim = 2
    dt = 0.1
    damping = 0.5
    tolerance = 0.05

    def __init__(self, max_steps: int = 200):
        super().__init__([-1.0, -1.0], [1.0, 1.0], max_steps)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = np.zeros(2)

    def _reset_state(self):
        self.pos = self._rng.uniform(-1.0, 1.0, 2)
        self.vel = np.zeros(2)
        self.target = self._rng.uniform(-1.0, 1.0, 2)

    def _advance(self, a):
        self.vel = (1.0 - self.damping * self.dt) * self.vel + a * self.dt
        self.pos = np.clip(self.pos + self.vel * self.dt, -1.5, 1.5)
        dist = float(np.linalg.norm(self.target - self.pos))
        reward = -dist - 0.01 * float(a @ a)
        return reward, dist < self.tolerance

    def _obs(self):
        return np.concatenate([self.target - self.pos, self.vel])

    def _state_values(self):
        return [*self.pos, *self.vel, *self.target]

    def _load_state_values(self, values):
        v = np.asarray(values, dtype=float)
        self.pos, self.vel, self.target = v[0:2], v[2:4], v[4:6]


class ConstantRewardEnv(Env):
    """Stub with a fixed reward per step; never terminates early."""

    env_id = "constant"

    def __init__(self, reward: float = 0.0, obs_dim: int = 3, act_dim: int = 1, max_steps: int = 200):
        super().__init__(-np.ones(act_dim), np.ones(act_dim), max_steps)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.reward = reward
        self.state = np.zeros(obs_dim)

    def _reset_state(self):
        self.state = self._rng.standard_normal(self.obs_dim)

    def _advance(self, a):
        self.state = np.tanh(self.state + 0.1 * a.mean())
        return self.reward, False

    def _obs(self):
        return self.state.copy()

    def _state_values(self):
        return self.state.tolist()

    def _load_state_values(self, values):
        self.state = np.asarray(values, dtype=float)


ENVIRONMENTS = {
    "pendulum": PendulumEnv,
    "reacher": PointMassReacher,
}


def make_env(env_id: str, **kwargs) -> Env:
    try:
        return ENVIRONMENTS[env_id](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}") from None
