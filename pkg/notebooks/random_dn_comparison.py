# %% [markdown]
# # Random networks: how much does unawareness cost?
#
# We compare three agents on random decision networks:
#
# * `full-vocab` knows every variable from the start.
# * `default` starts with a partial vocabulary and learns the rest through the dialogue.
# * `baseline` never updates its vocabulary.
#
# The numbers here are small so the script runs in a few minutes. The
# acceptance suite runs the full-size version.

# %%
import numpy as np

from dnaware.agent import AgentConfig
from dnaware.simulation import ExperimentConfig, generate_random_dn, run_once

agents = ("full-vocab", "default", "baseline")
steps = 1000
final = {a: [] for a in agents}

# %%
for seed in (11, 12):
    dn = generate_random_dn(seed, 5, 5, 5)
    for a in agents:
        for run in range(2):
            exp = ExperimentConfig(steps=steps, seed=seed, pe_period=steps, timing=False)
            rows = run_once(dn, AgentConfig.preset(a), exp, run).rows
            final[a].append(rows[-1].policy_error)

# %%
for a in agents:
    print(f"{a:>10}: mean final policy error {np.mean(final[a]):.3f}  ({np.round(final[a], 2)})")
