"""User-averaged top-K ranking metrics with train-positive exclusion."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    recall_at_k: float
    ndcg_at_k: float
    K: int
    users_evaluated: int

    def as_dict(self):
        return asdict(self)


def recall_at_k(ranked, relevant, K):
    relevant = set(relevant)
    if not relevant:
        raise ValueError("recall is undefined for an empty relevant set")
    hits = sum(1 for x in list(ranked)[:K] if x in relevant)
    return hits / len(relevant)


def _discounts(n):
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at_k(ranked, relevant, K):
    """Binary-gain nDCG with the ideal list truncated at ``min(K, |relevant|)``."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("nDCG is undefined for an empty relevant set")
    top = list(ranked)[:K]
    disc = _discounts(K)
    dcg = sum(disc[p] for p, x in enumerate(top) if x in relevant)
    idcg = disc[: min(K, len(relevant))].sum()
    return float(dcg / idcg)


def candidate_mask(ds, users, split):
    """Boolean (len(users), num_items) mask of items eligible for ranking."""
    mask = np.ones((len(users), ds.num_items), dtype=bool)
    for row, u in enumerate(users):
        mask[row, ds.positives[u]] = False
        if split == "test":
            mask[row, ds.val_positives[u]] = False
    return mask


def top_k(scores, mask, K):
    """Row-wise top-K column ids among masked-in entries, ties by ascending id."""
    s = np.where(mask, scores, -np.inf)
    n = s.shape[1]
    k = min(K, n)
    if k < n:
        part = np.argpartition(-s, k - 1, axis=1)[:, :k]
        # keep every column tied with the k-th score so the id tie-break is exact
        kth = np.take_along_axis(s, part, 1).min(axis=1, keepdims=True)
        out = []
        for row in range(len(s)):
            cand = np.flatnonzero(s[row] >= kth[row])
            order = np.lexsort((cand, -s[row, cand]))
            out.append(cand[order[:k]])
        return out
    return [np.lexsort((np.arange(n), -row)) for row in s]


def evaluate(user_out, item_out, ds, split="validation", K=20, chunk=2048):
    """Average Recall@K and nDCG@K over users with a non-empty ``split``.

    Candidates exclude each user's train positives, and for ``split="test"``
    also the validation positives.
    """
    target = ds.val_positives if split == "validation" else ds.test_positives
    if split not in ("validation", "test"):
        raise ValueError(f"unknown split {split!r}")
    users = np.array([u for u in range(ds.num_users) if len(target[u])], dtype=np.int64)
    if len(users) == 0:
        raise ValueError(f"{split} split is empty")
    recalls, ndcgs = [], []
    for start in range(0, len(users), chunk):
        block = users[start:start + chunk]
        scores = user_out[block] @ item_out.T
        mask = candidate_mask(ds, block, split)
        for u, row, avail in zip(block, top_k(scores, mask, K), mask):
            ranked = row[avail[row]]
            recalls.append(recall_at_k(ranked, target[u].tolist(), K))
            ndcgs.append(ndcg_at_k(ranked, target[u].tolist(), K))
    return MetricReport(float(np.mean(recalls)), float(np.mean(ndcgs)), K, len(users))
