# %% [markdown]
# # Loss and weighting ablation on the desk benchmark
# 600 users, 1000 items, LightGCN with two layers. Each row trains from the
# same initialisation and reports test nDCG@20. Takes a few minutes.

# %%
import numpy as np

from dregn.experiments import ABLATIONS, ablation_run, benchmark_dataset

SEEDS = [0, 1]
names = ["pu", "dre_uniform", "uniform_full", "popularity", "static", "full", "bpr"]
table = {n: [] for n in names}
for seed in SEEDS:
    ds, _ = benchmark_dataset(seed)
    for n in names:
        rep, log = ablation_run(n, seed, ds)
        table[n].append(rep.ndcg_at_k)
        print(seed, n, round(rep.ndcg_at_k, 4), "stopped at iteration", log.records[-1]["iteration"])

# %%
for n in names:
    cfg = ABLATIONS[n]
    weighting = "-" if cfg.family == "bpr" else cfg.weighting
    print(f"{n:13} {cfg.family:14} {weighting:14} nDCG@20 {np.mean(table[n]):.4f}")

# %% [markdown]
# PU regression has no lower bound once a positive's curvature goes negative,
# so early stopping halts it almost at once. Static weights are frozen from a
# uniform model and the positive term then pulls already-high scores further up.
