# coding: utf-8

# # Pretraining on artificial traffic
#
# Pretrain on a CMMPP trace, then fine-tune on a small slice of the live
# (periodic) trace, and compare with an agent trained from scratch on the
# same slice. Rewards are scored on held-out live slots as a percentage of
# the from-scratch agent trained on the full live budget. Small sizes here;
# configs/transfer.cfg holds the full-scale run.

# In[1]:

import tempfile

from drlra.config import ExperimentConfig, TrafficSpec, TransferSpec
from drlra.harness import run_transfer


# In[2]:

spec = TransferSpec(pretrain_slots=1500, fractions=(0.0, 0.2, 1.0), max_live_slots=2000, eval_slots=500)
cfg = ExperimentConfig(name="transfer_demo", kind="transfer", k_nodes=12, n_total=8, n_drl=5,
                       traffic=TrafficSpec("periodic", periods=(1, 2, 3, 4)), seeds=(0,),
                       out_dir=tempfile.mkdtemp(), transfer=spec)
res = run_transfer(cfg, spec)
print(",".join(res.header))
for row in res.rows:
    print(f"{row[0]:.1f}  pretrained {row[1]:6.1f}%  scratch {row[2]:6.1f}%")


# With a fast optimizer the from-scratch agent catches up quickly on periodic
# traffic, and the CMMPP prior (memoryless per node) has nothing periodic to
# transfer, so the pretrained curve need not sit above the control.
