# %% [markdown]
# # Barley: learning with an expert
#
# The learner starts with a partial model of the crop problem. It does not
# know every action, before variable or outcome that matters. A simulated
# expert watches its trials, gives advice when the learner keeps acting
# badly, and answers the learner's questions. Here we run the default agent
# and the baseline (which ignores the expert) side by side.

# %%
import numpy as np

from dnaware.agent import AgentConfig
from dnaware.network import builtin
from dnaware.simulation import ExperimentConfig, run_once

dn = builtin("barley")
print("actions:", dn.actions)
print("befores:", dn.befores)
print("reward domain:", dn.reward_domain)

# %% [markdown]
# One run per agent, 3000 steps, with policy error measured every 100 steps.

# %%
exp = ExperimentConfig(steps=3000, seed=11, pe_period=100, timing=False)
runs = {name: run_once(dn, AgentConfig.preset(name), exp, 0) for name in ("default", "baseline")}

for name, res in runs.items():
    pe = [(r.step, round(r.policy_error, 3)) for r in res.rows if r.policy_error is not None]
    print(name, pe[:6], "...", pe[-1])

# %% [markdown]
# The first few lines of the dialogue. Each expert message uses up one step
# that would otherwise have been a trial.

# %%
for line in runs["default"].transcript[:12]:
    print(line)

# %% [markdown]
# The learned network's vocabulary, compared with the true one.

# %%
learned = runs["default"].learner.dn
print("learned actions:", learned.actions)
print("learned befores:", learned.befores)
print("learned reward domain:", learned.reward_domain)
print("questions asked:", runs["default"].questions)

# %%
final = {n: [r.policy_error for r in res.rows if r.policy_error is not None][-1] for n, res in runs.items()}
print(final)
