"""Synthetic implicit-feedback corpora with a known preference model."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import InteractionDataset, write_adjacency


@dataclass
class SyntheticCorpus:
    dataset: InteractionDataset
    preference: np.ndarray  # p(i | u, y=+1), rows sum to 1

    @property
    def ratio(self):
        """p(i|u,+) / p(i|u) with the uniform item marginal p(i|u) = 1/|I|."""
        return self.preference * self.preference.shape[1]


def make_corpus(num_users, num_items, positives_per_user, rank=4, scale=2.0,
                item_bias=1.0, activity_spread=0.0, test_fraction=0.2, seed=0):
    """Draw a corpus from low-rank logits.

    ``p(i|u,+)`` is the softmax over items of ``scale * <a_u, b_i> / sqrt(rank)
    + item_bias * c_i`` with standard normal factors. Each user's positives are
    drawn without replacement proportionally to that distribution; a
    ``test_fraction`` share of them is held out as test positives.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((num_users, rank))
    b = rng.standard_normal((num_items, rank))
    c = rng.standard_normal(num_items)
    logits = scale * (a @ b.T) / np.sqrt(rank) + item_bias * c[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    pref = np.exp(logits)
    pref /= pref.sum(axis=1, keepdims=True)

    if activity_spread > 0:
        sizes = np.rint(positives_per_user * np.exp(
            activity_spread * rng.standard_normal(num_users) - activity_spread ** 2 / 2))
        sizes = np.clip(sizes, 1 if positives_per_user else 0, num_items).astype(int)
    else:
        sizes = np.full(num_users, min(positives_per_user, num_items), dtype=int)

    train, test = {}, {}
    for u in range(num_users):
        n = int(sizes[u])
        if n == 0:
            continue
        drawn = rng.choice(num_items, size=n, replace=False, p=pref[u])
        n_test = int(round(test_fraction * n)) if n > 1 else 0
        test[u] = drawn[:n_test].tolist()
        train[u] = drawn[n_test:].tolist()
    ds = InteractionDataset.from_sets(train, num_users=num_users, num_items=num_items,
                                      test=test)
    return SyntheticCorpus(ds, pref)


def write_corpus(corpus, out_dir):
    """Write ``train.txt``/``test.txt`` (adjacency-text) and ``ratio.csv``.

    ``ratio.csv`` has one row per user holding the ground-truth density ratio
    for every item; ``preference.npy`` stores p(i|u,+) at full precision.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = corpus.dataset
    write_adjacency(out / "train.txt", ds.positives)
    write_adjacency(out / "test.txt", ds.test_positives)
    np.savetxt(out / "ratio.csv", corpus.ratio, delimiter=",", fmt="%.10g")
    np.save(out / "preference.npy", corpus.preference)
    return out
