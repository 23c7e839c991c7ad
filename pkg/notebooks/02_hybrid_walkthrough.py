# coding: utf-8

# # Hybrid DRL + RA allocation
#
# The agent predicts which nodes will be active next slot and grants them
# blocks directly (N1 of them); everyone else falls back to RA on the
# remaining N2 = N - N1 blocks. Here we train on a fairly regular pattern,
# harvest prediction statistics, pick N1 from the closed form, and compare
# with plain RA on held-out slots.

# In[1]:

import numpy as np

from drlra.activity import SyntheticParams, gen_synthetic
from drlra.agent import AgentConfig, EnsembleAgent
from drlra.core import average_packet_rate, genie_rate, make_rng
from drlra.harness import evaluate_ra
from drlra.hybrid import HybridConfig, analytic_hybrid_rate, estimate_eps_stats, run_hybrid, select_n1


# In[2]:

K, N = 20, 10
tr = gen_synthetic(SyntheticParams(0.1, K, 3000), make_rng(0))
train, held = tr.slice(0, 2400), tr.slice(2400, 3000)

agent = EnsembleAgent(K, AgentConfig(), make_rng(1))
run = run_hybrid(agent, train, HybridConfig(N, N // 2), make_rng(2))
r = run.rewards.sum(axis=1) / K
print("reward first/last 200 slots:", r[:200].mean().round(3), r[-200:].mean().round(3))
print("epsilon now", round(agent.eps.eps, 4))


# Greedy replay gives per-slot counts of correct and wrong predictions.
# The analytic rate as a function of N1:

# In[3]:

agent.freeze()
stats = estimate_eps_stats(agent, train, HybridConfig(N, N // 2), make_rng(3))
for n1 in range(N + 1):
    print(n1, round(analytic_hybrid_rate(stats, HybridConfig(N, n1), K).mean, 4))
n1 = select_n1(stats, N, 54, K)
print("chosen N1 =", n1)


# At K=20, N=10 the cell is overloaded in even slots whatever the agent
# predicts, so direct grants rarely beat RA and the sweep can land on N1=0.
# Held-out comparison:

# In[4]:

ev = run_hybrid(agent, held, HybridConfig(N, n1), make_rng(4), learn=False, history=run.history)
ra = average_packet_rate(evaluate_ra(held, N, 54, make_rng(5)), K)
print("hybrid", round(ev.rate(K).mean, 4), "RA", round(ra.mean, 4), "genie", round(genie_rate(held, N).mean, 4))


# Where do the blocks go? Count wasted grants (predicted but silent) and
# nodes pushed into RA.

# In[5]:

wasted = np.array([o.wasted_rbs for o in ev.outcomes])
ra_load = np.array([len(o.ra_attempted) for o in ev.outcomes])
print("wasted grants per slot", wasted.mean().round(3), " RA contenders per slot", ra_load.mean().round(3))
