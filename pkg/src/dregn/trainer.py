"""Mini-batch training loop for the density-ratio and BPR objectives."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import evaluate
from .model import PropagationGraph, propagate, propagate_backward, sigmoid, softplus
from .risk import BatchLossInput, batch_loss_grad, bpr_loss_grad, l2_penalty
from .sampler import EpochSampler
from .weighting import (
    StaticHardWeights,
    hard_sample_weights,
    popularity_weights,
    uniform_weights,
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.01
    epochs: int = 100
    eval_every: int = 1
    early_stop_patience: int = 10
    seed: int = 0
    batch_users: int = 256
    K: int = 20

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.eval_every < 1 or self.epochs < 0 or self.batch_users < 1:
            raise ValueError("eval_every, epochs and batch_users must be positive")


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_epoch: int | None = None

    def append(self, **rec):
        self.records.append(rec)

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    def write_csv(self, path):
        cols = ["epoch", "iteration", "seconds", "train_loss", "recall", "ndcg"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(self.records)

    @classmethod
    def read_jsonl(cls, path):
        log = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed log record") from exc
                missing = {"iteration", "recall", "ndcg"} - set(rec)
                if missing:
                    raise ValueError(f"{path}:{lineno}: missing fields {sorted(missing)}")
                log.records.append(rec)
        return log


def estimate_priors(ds):
    """Per-user class prior |I_u+| / |I| from train positives."""
    return ds.user_prior.copy()


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


def batch_weights(risk_cfg, ds, batch, scores, static=None):
    if risk_cfg.weighting == "uniform":
        return uniform_weights(scores.shape)
    if risk_cfg.weighting == "popularity":
        return popularity_weights(ds.item_popularity, batch.items, risk_cfg.c0,
                                  risk_cfg.alpha, n_rows=len(batch.users))
    if risk_cfg.weighting == "hard_adaptive":
        return hard_sample_weights(scores)
    if static is None:
        raise ValueError("hard_static weighting needs a frozen model")
    return static(batch.users, batch.items)


def _l2_grads(model, users, items, lam):
    gu = np.zeros_like(model.user_embed)
    gi = np.zeros_like(model.item_embed)
    if lam:
        gu[users] += lam * model.user_embed[users]
        gi[items] += lam * model.item_embed[items]
    return gu, gi


def pointwise_objective(model, graph, batch, risk_cfg, weights=None, ds=None, static=None):
    """Loss (risk + L2) and gradients on the layer-0 tables for one batch.

    ``weights`` overrides the configured strategy, which lets callers freeze
    them. Returns ``(total, risk_value, (grad_user, grad_item), weights)``.
    """
    user_out, item_out = propagate(model, graph)
    ub, ib = user_out[batch.users], item_out[batch.items]
    logits = ub @ ib.T
    scores = softplus(logits)
    if weights is None:
        weights = batch_weights(risk_cfg, ds, batch, scores, static)
    b = BatchLossInput(scores, batch.pos_mask, batch.priors, weights.weights_pos,
                       weights.weights_neg, batch.item_sampling_prob)
    risk, g_scores = batch_loss_grad(b, risk_cfg)
    g_logits = g_scores * sigmoid(logits)
    g_uo = np.zeros_like(user_out)
    g_io = np.zeros_like(item_out)
    g_uo[batch.users] = g_logits @ ib
    g_io[batch.items] = g_logits.T @ ub
    gu, gi = propagate_backward(model, graph, g_uo, g_io)
    lam = risk_cfg.l2_lambda
    ru, ri = _l2_grads(model, batch.users, batch.items, lam)
    total = risk + l2_penalty(model, batch, lam)
    return total, risk, (gu + ru, gi + ri), weights


def sample_negatives(ds, users, rng):
    """One uniformly drawn non-positive item per (user, positive) pair."""
    pu, pi, ni = [], [], []
    for u in users:
        pos = ds.positives[u]
        if len(pos) >= ds.num_items:
            continue
        neg = rng.integers(0, ds.num_items, size=len(pos))
        bad = np.isin(neg, pos)
        while bad.any():
            neg[bad] = rng.integers(0, ds.num_items, size=int(bad.sum()))
            bad = np.isin(neg, pos)
        pu.append(np.full(len(pos), u))
        pi.append(pos)
        ni.append(neg)
    cat = lambda xs: np.concatenate(xs).astype(np.int64) if xs else np.zeros(0, np.int64)
    return cat(pu), cat(pi), cat(ni)


class _Rows:
    def __init__(self, users, items):
        self.users, self.items = users, items


def bpr_objective(model, graph, triples, lam):
    """BPR loss + L2 and table gradients for (user, pos, neg) triples."""
    u, i, j = triples
    user_out, item_out = propagate(model, graph)
    eu, ei, ej = user_out[u], item_out[i], item_out[j]
    xp = (eu * ei).sum(1)
    xn = (eu * ej).sum(1)
    loss, g = bpr_loss_grad(xp, xn)
    g_uo = np.zeros_like(user_out)
    g_io = np.zeros_like(item_out)
    np.add.at(g_uo, u, g[:, None] * (ei - ej))
    np.add.at(g_io, i, g[:, None] * eu)
    np.add.at(g_io, j, -g[:, None] * eu)
    gu, gi = propagate_backward(model, graph, g_uo, g_io)
    rows = _Rows(np.unique(u), np.unique(np.concatenate([i, j])))
    ru, ri = _l2_grads(model, rows.users, rows.items, lam)
    return loss + l2_penalty(model, rows, lam), loss, (gu + ru, gi + ri)


def train(ds, model, risk_cfg, train_cfg, *, frozen=None, callback=None):
    """Train ``model`` in place and return ``(best_model, log)``.

    Validation nDCG@K is checked every ``eval_every`` epochs; training stops
    after ``early_stop_patience`` checks without improvement. The returned
    model is a copy taken at the best check (the final model when there is no
    validation split).
    """
    if ds.num_interactions == 0:
        raise ValueError("dataset has no train interactions")
    rng = np.random.default_rng(train_cfg.seed)
    sampler = EpochSampler(ds, train_cfg.batch_users, rng)
    graph = PropagationGraph.from_dataset(ds)
    opt = make_optimizer(train_cfg)
    static = None
    if risk_cfg.family != "bpr" and risk_cfg.weighting == "hard_static":
        static = StaticHardWeights(frozen, graph)
    has_val = any(len(v) for v in ds.val_positives)

    log = TrainLog()
    best, best_ndcg, stale = model.copy(), -np.inf, 0
    iteration = 0
    t0 = time.perf_counter()
    for epoch in range(1, train_cfg.epochs + 1):
        losses = []
        for batch in sampler.epoch():
            if not (np.isfinite(model.user_embed).all() and np.isfinite(model.item_embed).all()):
                raise TrainingDiverged(
                    f"non-finite parameters before step {iteration + 1} (epoch {epoch})")
            if risk_cfg.family == "bpr":
                triples = sample_negatives(ds, batch.users, rng)
                total, risk, grads = bpr_objective(model, graph, triples, risk_cfg.l2_lambda)
            else:
                total, risk, grads, _ = pointwise_objective(
                    model, graph, batch, risk_cfg, ds=ds, static=static)
            iteration += 1
            if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(
                    f"non-finite objective at step {iteration} (epoch {epoch}): "
                    f"total={total!r} risk={risk!r}")
            opt.step([model.user_embed, model.item_embed], grads)
            losses.append(total)
            log.step_losses.append(total)
        if epoch % train_cfg.eval_every and epoch != train_cfg.epochs:
            continue
        rec = {"epoch": epoch, "iteration": iteration,
               "seconds": time.perf_counter() - t0, "train_loss": float(np.mean(losses))}
        if has_val:
            rep = evaluate(*propagate(model, graph), ds, "validation", train_cfg.K)
            rec.update(recall=rep.recall_at_k, ndcg=rep.ndcg_at_k)
        log.append(**rec)
        if callback is not None:
            callback(rec)
        if not has_val:
            continue
        if rec["ndcg"] > best_ndcg:
            best, best_ndcg, stale = model.copy(), rec["ndcg"], 0
            log.best_epoch = epoch
        else:
            stale += 1
            if stale >= train_cfg.early_stop_patience:
                break
    if not has_val:
        best = model.copy()
        log.best_epoch = log.records[-1]["epoch"] if log.records else None
    return best, log
