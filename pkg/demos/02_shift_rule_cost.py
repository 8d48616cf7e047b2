"""Why backpropagating through a circuit with the shift rule is expensive."""
# %%
from hdqnn.grad_oracle import shift_cost_report

# 220 controls, 10 outputs, a 256-row mini-batch
light = shift_cost_report(220, 10, 10, 256, per_shot_time=0.5e-6)
heavy = shift_cost_report(220, 10, 1000, 256, per_shot_time=0.5e-6)
print(f"S=10:   {light.total_shots_per_update:,} shots, {light.total_seconds_per_update} s per update")
print(f"S=1000: {heavy.total_shots_per_update:,} shots, {heavy.total_seconds_per_update} s per update")

# %% A million updates at S=1000 is roughly nine years of circuit time.
full = shift_cost_report(220, 10, 1000, 256, K=1_000_000, per_shot_time=0.5e-6)
print(f"{full.total_seconds_full_run / 86400 / 365:.1f} years")
print("the surrogate path needs", full.qtdnn_pqc_calls, "circuit calls instead")
