# %% [markdown]
# # Batches built from a union of positives
# Items enter a batch only through the sampled users, so popular items show
# up more often. `item_inclusion_prob` gives the exact rate.

# %%
import numpy as np

from dregn.sampler import EpochSampler, inclusion_probs, sample_batch
from dregn.synth import make_corpus

ds = make_corpus(50, 30, 6, seed=0, test_fraction=0.0).dataset
s = inclusion_probs(ds, 10)

rng = np.random.default_rng(0)
hits = np.zeros(ds.num_items)
for _ in range(5000):
    hits[sample_batch(ds, 10, rng).items] += 1

order = np.argsort(ds.item_popularity)
for i in order[::5]:
    print(f"item {i:2d} popularity {ds.item_popularity[i]:2d}  s={s[i]:.3f}  empirical={hits[i] / 5000:.3f}")

# %% [markdown]
# One epoch is a shuffled pass over users with at least one positive.

# %%
sampler = EpochSampler(ds, 16, np.random.default_rng(1))
[len(b.users) for b in sampler.epoch()], [len(b.items) for b in sampler.epoch()]
