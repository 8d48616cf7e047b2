"""Hybrid quantum-classical TD3 agents trained through a classical surrogate.

A shot-sampled quantum layer sits between two dense networks in the actor.
Gradients never pass through the circuit itself: a small network (the qtDNN)
is refit on recorded ``(q_i, q_o)`` pairs every update and backpropagated in
its place.
"""

from .grad_oracle import finite_diff_jacobian, parameter_shift_jacobian, shift_cost_report
from .neural import DenseNet, adam_step, bce_loss, soft_update
from .pqc_layer import CallCounter, PqcConfig, exact_layer_map, run_quantum_layer
from .quantum_core import NoiseConfig, StateVector, init_zero_state
from .rl_agent import AgentConfig, QtConfig, TD3Agent, TrainSettings, evaluate, train
from .surrogate import QtBuffer, QtDnn, fidelity_report, fit_surrogate, surrogate_param_count

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CallCounter",
    "DenseNet",
    "NoiseConfig",
    "PqcConfig",
    "QtBuffer",
    "QtConfig",
    "QtDnn",
    "StateVector",
    "TD3Agent",
    "TrainSettings",
    "adam_step",
    "bce_loss",
    "evaluate",
    "exact_layer_map",
    "fidelity_report",
    "finite_diff_jacobian",
    "fit_surrogate",
    "init_zero_state",
    "parameter_shift_jacobian",
    "run_quantum_layer",
    "shift_cost_report",
    "soft_update",
    "surrogate_param_count",
    "train",
]
