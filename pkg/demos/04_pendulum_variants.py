"""Short pendulum runs of every middle-block variant.

Only a smoke-scale budget; the configs/ directory holds the real ones.
"""
# %%
import numpy as np

from hdqnn.envs import PendulumEnv
from hdqnn.pqc_layer import PqcConfig
from hdqnn.rl_agent import VARIANTS, AgentConfig, MetricsStream, QtConfig, TrainSettings, train

pqc = PqcConfig(num_qubits=3, num_layers=2, shots=50)
agent_cfg = AgentConfig(hidden=32, warmup_steps=500)
qt = QtConfig(hidden=32, n_tiny=8)
settings = TrainSettings(total_steps=3000, eval_interval=1000, eval_episodes=3)

# %%
for variant in VARIANTS:
    metrics = MetricsStream()
    agent = train(PendulumEnv(), variant, pqc, agent_cfg, qt, settings, seed=0, metrics=metrics)
    returns = [round(r["mean_return"], 1) for r in metrics.of_type("eval")]
    bce = [r["bce"] for r in metrics.of_type("update") if r["bce"] is not None]
    print(f"{variant:5s} returns {returns}  pqc_calls {agent.counter.pqc_calls}"
          f"  calls during updates {agent.update_quantum_calls}"
          + (f"  last bce {np.mean(bce[-50:]):.3f}" if bce else ""))
