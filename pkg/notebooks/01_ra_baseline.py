# coding: utf-8

# # Random access on its own
#
# Every active node picks one of M preambles at random. The AP can decode a
# node only if nobody else picked the same preamble, and it has N resource
# blocks to hand out. We look at how the delivered fraction falls as the cell
# gets busier.

# In[1]:

import numpy as np

from drlra.activity import SyntheticParams, gen_synthetic
from drlra.core import average_packet_rate, genie_rate, make_rng
from drlra.ra import RaConfig, analytic_ra_rate, expected_ra_deliveries, simulate_ra_contention


# One slot, ten contenders, the LTE-like 54 preambles:

# In[2]:

rng = make_rng(0)
o = simulate_ra_contention(set(range(10)), RaConfig(54, 10), rng)
print(sorted(o.ra_delivered), sorted(o.ra_collided))


# The exact mean number of deliveries for K^a contenders, against the cap N=10:

# In[3]:

for ka in (1, 5, 10, 20, 40, 60):
    print(ka, round(expected_ra_deliveries(ka, 54, 10), 3))


# Simulated versus closed-form rate on a synthetic trace (K=20, N=10).

# In[4]:

K, N = 20, 10
tr = gen_synthetic(SyntheticParams(0.3, K, 2000), make_rng(1))
cfg = RaConfig(54, N)
out = [simulate_ra_contention(tr.active_set(t), cfg, rng, slot=t) for t in range(tr.t_slots)]
print("simulated", average_packet_rate(out, K).mean)
print("analytic ", analytic_ra_rate(tr.counts(), cfg, K).mean)
print("genie    ", genie_rate(tr, N).mean)


# The RA rate depends only on how many nodes are active per slot. The mean
# load is about K/2 for every delta, but at small delta the pattern packs all
# nodes into even slots (overloading N there and idling odd slots), so the
# rate climbs as delta spreads the load out.

# In[5]:

for delta in (0.1, 0.5, 0.9):
    tr = gen_synthetic(SyntheticParams(delta, K, 2000), make_rng(2))
    print(delta, round(analytic_ra_rate(tr.counts(), cfg, K).mean, 4), tr.counts().mean())
