"""Class-dependent sample weights (w+, w-) for a user x item batch block."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .model import propagate, score_block


class WeightMatrices(NamedTuple):
    weights_pos: np.ndarray
    weights_neg: np.ndarray


def uniform_weights(shape):
    return WeightMatrices(np.ones(shape), np.ones(shape))


def popularity_weights(popularity, items, c0=64.0, alpha=0.5, n_rows=1):
    """w+ = 1 and w- = c0 pop(i)^alpha / sum_j pop(j)^alpha.

    ``popularity`` covers the whole corpus, so the normaliser runs over every
    item, not just the batch columns.
    """
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    pop = np.asarray(popularity, dtype=np.float64)
    # 0 ** 0 == 1 keeps alpha = 0 well defined for unseen items
    powered = np.power(pop, alpha)
    total = powered.sum()
    if not total > 0:
        raise ValueError("popularity counts are all zero")
    col = c0 * powered[np.asarray(items, dtype=np.int64)] / total
    neg = np.tile(col, (n_rows, 1))
    return WeightMatrices(np.ones_like(neg), neg)


def hard_sample_weights(scores):
    """w+ = 1/r and w- = r, from a score block that is treated as a constant."""
    r = np.array(scores, dtype=np.float64, copy=True)
    if np.any(~(r > 0)):
        raise ValueError("hard-sample weights need strictly positive scores")
    return WeightMatrices(1.0 / r, r)


class StaticHardWeights:
    """Hard-sample weights read from a frozen model.

    The frozen model's outputs are computed once at construction, so the
    weights for any (user, item) pair stay fixed while another model trains.
    """

    def __init__(self, frozen_model, graph=None):
        if frozen_model is None:
            raise ValueError("static weighting needs a frozen checkpoint")
        user_out, item_out = propagate(frozen_model, graph)
        self.user_out = user_out.copy()
        self.item_out = item_out.copy()

    def __call__(self, users, items):
        return hard_sample_weights(score_block(self.user_out, self.item_out, users, items))


def static_hard_weights(frozen_scores):
    if frozen_scores is None:
        raise ValueError("static weighting needs frozen checkpoint scores")
    return hard_sample_weights(frozen_scores)
