"""User-based mini-batches: sampled users plus the union of their positives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln


@dataclass
class MiniBatch:
    users: np.ndarray
    items: np.ndarray
    pos_mask: np.ndarray
    priors: np.ndarray
    item_sampling_prob: np.ndarray

    @property
    def shape(self):
        return self.pos_mask.shape


def _log_falling(n, b):
    # log of n! / (n - b)!
    return gammaln(n + 1.0) - gammaln(n - b + 1.0)


def inclusion_probs(ds, batch_users):
    """s(i) for every item under uniform sampling of ``batch_users`` eligible users."""
    if batch_users < 1:
        raise ValueError("batch_users must be >= 1")
    n = len(ds.eligible_users)
    m = n - ds.item_popularity.astype(np.float64)
    s = np.ones(ds.num_items)
    ok = m >= batch_users
    ratio = np.exp(_log_falling(m[ok], batch_users) - _log_falling(float(n), batch_users))
    s[ok] = 1.0 - ratio
    return s


def item_inclusion_prob(ds, i, batch_users):
    """Probability that item ``i`` lands in a batch of ``batch_users`` users.

    With ``m`` eligible users lacking ``i`` and ``n`` eligible users in total
    this is ``1 - C(m, b) / C(n, b)``, or 1 when ``m < b``.
    """
    n = len(ds.eligible_users)
    m = n - int(ds.item_popularity[i])
    if batch_users < 1:
        raise ValueError("batch_users must be >= 1")
    if m < batch_users:
        return 1.0
    return float(-math.expm1(_log_falling(m, batch_users) - _log_falling(n, batch_users)))


def build_batch(ds, users, s_all=None):
    """Assemble the batch block for an explicit user list."""
    users = np.asarray(users, dtype=np.int64)
    pos = [ds.positives[u] for u in users]
    items = np.unique(np.concatenate(pos)) if len(pos) else np.zeros(0, dtype=np.int64)
    mask = np.zeros((len(users), len(items)), dtype=bool)
    for row, p in enumerate(pos):
        mask[row, np.searchsorted(items, p)] = True
    if s_all is None:
        s_all = inclusion_probs(ds, max(len(users), 1))
    return MiniBatch(users, items, mask, ds.user_prior[users].astype(np.float64), s_all[items])


def sample_batch(ds, batch_users, rng):
    """Draw ``batch_users`` eligible users uniformly without replacement."""
    eligible = ds.eligible_users
    if not 1 <= batch_users <= len(eligible):
        raise ValueError(
            f"batch_users={batch_users} outside [1, {len(eligible)}] eligible users")
    users = np.sort(rng.choice(eligible, size=batch_users, replace=False))
    return build_batch(ds, users)


class EpochSampler:
    """Shuffled pass over eligible users in consecutive blocks.

    Each epoch has ``ceil(n_eligible / batch_users)`` batches and visits every
    eligible user once; the last block may be short. A ``batch_users`` larger
    than the pool is capped to full-batch training.
    """

    def __init__(self, ds, batch_users, rng):
        self.ds = ds
        self.eligible = ds.eligible_users
        if batch_users < 1 or len(self.eligible) == 0:
            raise ValueError("need batch_users >= 1 and at least one eligible user")
        self.batch_users = min(batch_users, len(self.eligible))
        self.rng = rng
        self._probs = lru_cache(maxsize=4)(lambda b: inclusion_probs(ds, b))

    def __len__(self):
        return math.ceil(len(self.eligible) / self.batch_users)

    def epoch(self):
        perm = self.rng.permutation(self.eligible)
        for start in range(0, len(perm), self.batch_users):
            users = np.sort(perm[start:start + self.batch_users])
            yield build_batch(self.ds, users, self._probs(len(users)))
