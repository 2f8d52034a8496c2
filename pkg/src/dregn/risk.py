"""Density-ratio risks for positive-only feedback.

Every batch loss comes in a ``*_loss`` form (value only) and shares a private
routine that also returns the gradient with respect to the score matrix.
Weight matrices and inclusion probabilities are constants of the batch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .model import sigmoid, softplus

FAMILIES = ("ranking_ulsif", "pu_regression", "bpr")
WEIGHTINGS = ("uniform", "popularity", "hard_adaptive", "hard_static")


class RiskError(ValueError):
    """A batch that violates a loss precondition."""


@dataclass(frozen=True)
class BregmanGenerator:
    name: str
    f: Callable
    df: Callable
    lower: float = 0.0  # domain is [lower, inf)
    div: Callable | None = None  # closed form, avoids cancellation near t == t_hat

    def check(self, *ts):
        for t in ts:
            if not np.all(np.isfinite(t)) or np.any(np.asarray(t) < self.lower):
                raise ValueError(f"{self.name}: argument outside [{self.lower}, inf)")


ULSIF = BregmanGenerator("ulsif", lambda t: 0.5 * (t - 1.0) ** 2, lambda t: t - 1.0,
                        div=lambda t, t_hat: 0.5 * (t - t_hat) ** 2)


def bregman_div(gen, t, t_hat):
    """``f(t) - f(t_hat) - f'(t_hat) (t - t_hat)``; vectorised over arrays."""
    t = np.asarray(t, dtype=np.float64)
    t_hat = np.asarray(t_hat, dtype=np.float64)
    gen.check(t, t_hat)
    if gen.div is not None:
        out = np.asarray(gen.div(t, t_hat))
    else:
        out = gen.f(t) - gen.f(t_hat) - gen.df(t_hat) * (t - t_hat)
    return float(out) if out.ndim == 0 else out


def pointwise_losses(gen, r_hat):
    """Return ``(ell_pos, ell_all)`` = ``(-f'(r), f'(r) r - f(r))``."""
    r = np.asarray(r_hat, dtype=np.float64)
    ell_pos = -gen.df(r)
    ell_all = gen.df(r) * r - gen.f(r)
    if ell_pos.ndim == 0:
        return float(ell_pos), float(ell_all)
    return ell_pos, ell_all


@dataclass(frozen=True)
class RiskConfig:
    family: str = "ranking_ulsif"
    weighting: str = "hard_adaptive"
    is_correction: bool = True
    nn_correction: bool = True
    d_bar: float = 50.0
    l2_lambda: float = 0.05
    c0: float = 64.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown risk family {self.family!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.nn_correction and not self.d_bar > 0:
            raise ValueError("d_bar must be positive when nn_correction is on")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    # flat key file: "lambda" is the on-disk name of l2_lambda
    _FILE_KEYS = {"l2_lambda": "lambda"}

    def to_dict(self):
        return {self._FILE_KEYS.get(k, k): v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        inv = {v: k for k, v in cls._FILE_KEYS.items()}
        names = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, val in d.items():
            name = inv.get(key, key)
            if name not in names:
                raise KeyError(f"unknown risk config key {key!r}")
            default = getattr(cls, name)
            if isinstance(default, bool):
                val = val if isinstance(val, bool) else str(val).strip().lower() in (
                    "1", "true", "yes", "on")
            elif isinstance(default, float):
                val = float(val)
            kw[name] = val
        return cls(**kw)

    def dumps(self):
        return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                       for k, v in self.to_dict().items())

    @classmethod
    def loads(cls, text):
        d = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            d[k.strip()] = v.strip()
        return cls.from_dict(d)


@dataclass
class BatchLossInput:
    scores: np.ndarray
    pos_mask: np.ndarray
    priors: np.ndarray
    weights_pos: np.ndarray
    weights_neg: np.ndarray
    item_sampling_prob: np.ndarray | None = None


def _positive_counts(b):
    n_pos = b.pos_mask.sum(axis=1)
    if np.any(n_pos == 0):
        bad = np.flatnonzero(n_pos == 0).tolist()
        raise RiskError(f"batch rows {bad} have no positive item")
    return n_pos


def _nonzero(total, what):
    if np.any(total <= 0):
        raise RiskError(f"zero weight total in {what} for rows {np.flatnonzero(total <= 0).tolist()}")
    return total


def _ranking_ulsif(b, cfg, need_grad):
    _positive_counts(b)
    r = np.asarray(b.scores, dtype=np.float64)
    r2 = r * r
    pos = b.pos_mask.astype(np.float64)
    pi = np.asarray(b.priors, dtype=np.float64)
    wp = b.weights_pos * pos
    wn_pos = b.weights_neg * pos
    v = b.weights_neg
    if cfg.is_correction:
        if b.item_sampling_prob is None:
            raise RiskError("importance-sampling correction needs item_sampling_prob")
        v = v / np.asarray(b.item_sampling_prob)[None, :]

    s_wp = _nonzero(wp.sum(1), "positive weights")
    s_wn = _nonzero(wn_pos.sum(1), "negative weights on positives")
    s_v = _nonzero(v.sum(1), "unlabelled weights")

    r1 = pi * (wp * r2).sum(1) / (2 * s_wp)
    r2_ = pi * (wn_pos * r2).sum(1) / (2 * s_wn)
    r3 = (wp * r).sum(1) / s_wp
    rpm = (v * r2).sum(1) / (2 * s_v)
    terms = {"r_pos1": r1, "r_pos2": r2_, "r_pos3": r3, "r_unl": rpm}
    if cfg.nn_correction:
        rcor = (wp * r2).sum(1) / (2 * cfg.d_bar * s_wp)
        gap = rpm - rcor
        per_user = r1 - r2_ - r3 + rcor + np.maximum(gap, 0.0)
        terms["r_cor"] = rcor
    else:
        per_user = r1 - r2_ - r3 + rpm
    terms["per_user"] = per_user
    n = len(per_user)
    loss = float(per_user.mean())
    if not need_grad:
        return loss, terms, None

    g_r1 = (pi / s_wp)[:, None] * wp * r
    g_r2 = (pi / s_wn)[:, None] * wn_pos * r
    g_r3 = wp / s_wp[:, None]
    g_rpm = v * r / s_v[:, None]
    grad = g_r1 - g_r2 - g_r3
    if cfg.nn_correction:
        g_rcor = wp * r / (cfg.d_bar * s_wp)[:, None]
        active = (gap > 0).astype(np.float64)[:, None]
        grad = grad + g_rcor + active * (g_rpm - g_rcor)
    else:
        grad = grad + g_rpm
    return loss, terms, grad / n


def ranking_ulsif_loss(b, cfg):
    """Self-normalised ranking-uLSIF risk averaged over batch users.

    Returns ``(loss, terms)`` where ``terms`` maps ``r_pos1``, ``r_pos2``,
    ``r_pos3``, ``r_unl`` (and ``r_cor`` under the non-negative correction)
    plus ``per_user`` to per-row arrays.
    """
    loss, terms, _ = _ranking_ulsif(b, cfg, False)
    return loss, terms


def _pu_regression(b, cfg, need_grad):
    n_pos = _positive_counts(b)
    r = np.asarray(b.scores, dtype=np.float64)
    pos = b.pos_mask.astype(np.float64)
    pi = np.asarray(b.priors, dtype=np.float64)
    wp, wn = b.weights_pos, b.weights_neg
    n_items = r.shape[1]
    coef = (pi / n_pos)[:, None]
    per_user = (coef * pos * ((wp - wn) * r * r - 2 * wp * r)).sum(1) + (wn * r * r).sum(1) / n_items
    loss = float(per_user.mean())
    if not need_grad:
        return loss, None
    grad = coef * pos * (2 * (wp - wn) * r - 2 * wp) + 2 * wn * r / n_items
    return loss, grad / len(per_user)


def pu_regression_loss(b, cfg=None):
    """Weighted PU-regression (WMF-style) risk, averaged over batch users."""
    return _pu_regression(b, cfg, False)[0]


def bpr_loss(pos_scores, neg_scores):
    """Mean ``-log sigmoid(pos - neg)`` over paired raw inner products."""
    diff = np.asarray(pos_scores, dtype=np.float64) - np.asarray(neg_scores, dtype=np.float64)
    return float(softplus(-diff).mean())


def bpr_loss_grad(pos_scores, neg_scores):
    """Loss and its gradient with respect to the positive score of each pair.

    The gradient with respect to the negative score is the negation.
    """
    diff = np.asarray(pos_scores, dtype=np.float64) - np.asarray(neg_scores, dtype=np.float64)
    n = len(diff)
    return float(softplus(-diff).mean()), -sigmoid(-diff) / n


def batch_loss_grad(b, cfg):
    """``(loss, d loss / d scores)`` for the pointwise families."""
    if cfg.family == "ranking_ulsif":
        loss, _, grad = _ranking_ulsif(b, cfg, True)
        return loss, grad
    if cfg.family == "pu_regression":
        return _pu_regression(b, cfg, True)
    raise ValueError(f"{cfg.family} is not a score-matrix loss")


def l2_penalty(model, batch, lam):
    """``lam/2`` times the squared norm of the layer-0 rows touched by the batch."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    u = model.user_embed[np.asarray(batch.users, dtype=np.int64)]
    i = model.item_embed[np.asarray(batch.items, dtype=np.int64)]
    return float(0.5 * lam * ((u * u).sum() + (i * i).sum()))
