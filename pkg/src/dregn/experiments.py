"""Desk-scale benchmark corpus and the ablation presets used across the repo."""

from __future__ import annotations

import numpy as np

from .data import split_holdout
from .metrics import evaluate
from .model import PropagationGraph, ScorerModel, propagate
from .risk import RiskConfig
from .synth import make_corpus
from .trainer import TrainConfig, train

BENCHMARK = dict(num_users=600, num_items=1000, positives_per_user=30, rank=8, scale=3.0,
                 item_bias=1.0, activity_spread=0.5, test_fraction=0.2)

# Per-row L2 sums are large relative to a per-user mean risk at these batch
# sizes, so the desk benchmark uses a much smaller lambda than a GPU run would.
DESK_LAMBDA = 1e-5

ABLATIONS = {
    "pu": RiskConfig(family="pu_regression", weighting="uniform", is_correction=False,
                     nn_correction=False, l2_lambda=DESK_LAMBDA),
    "dre_uniform": RiskConfig(weighting="uniform", is_correction=False, nn_correction=False,
                              l2_lambda=DESK_LAMBDA),
    "uniform_full": RiskConfig(weighting="uniform", l2_lambda=DESK_LAMBDA),
    "popularity": RiskConfig(weighting="popularity", l2_lambda=DESK_LAMBDA),
    "static": RiskConfig(weighting="hard_static", l2_lambda=DESK_LAMBDA),
    "full": RiskConfig(weighting="hard_adaptive", l2_lambda=DESK_LAMBDA),
    "bpr": RiskConfig(family="bpr", l2_lambda=DESK_LAMBDA),
}


def benchmark_dataset(seed=0, val_fraction=0.1, **overrides):
    """Synthetic corpus with a per-user 9:1 train/validation split."""
    params = {**BENCHMARK, **overrides}
    corpus = make_corpus(seed=seed, **params)
    return split_holdout(corpus.dataset, val_fraction, seed), corpus


def desk_train_config(seed=0, **overrides):
    kw = dict(optimizer="adam", learning_rate=0.005, epochs=100, eval_every=5,
              early_stop_patience=6, seed=seed, batch_users=100, K=20)
    kw.update(overrides)
    return TrainConfig(**kw)


def fit(ds, risk_cfg, train_cfg, *, d=32, backbone="lightgc", num_layers=2, frozen=None):
    model = ScorerModel.init(ds.num_users, ds.num_items, d=d, backbone=backbone,
                             num_layers=num_layers, seed=train_cfg.seed)
    return train(ds, model, risk_cfg, train_cfg, frozen=frozen)


def test_metrics(model, ds, K=20):
    return evaluate(*propagate(model, PropagationGraph.from_dataset(ds)), ds, "test", K)


def iterations_to_fraction(log, metric="recall", fraction=0.95):
    """First logged iteration at which ``metric`` reaches ``fraction`` of its final value."""
    recs = log.records if hasattr(log, "records") else log
    final = recs[-1][metric]
    for rec in recs:
        if rec[metric] >= fraction * final:
            return rec["iteration"]
    return recs[-1]["iteration"]


def ablation_run(name, seed=0, dataset=None, **train_overrides):
    """Train one ablation preset and return ``(test MetricReport, log)``.

    ``static`` first trains a uniform-weighting model and freezes it for
    weighting.
    """
    ds = dataset if dataset is not None else benchmark_dataset(seed)[0]
    tc = desk_train_config(seed, **train_overrides)
    frozen = None
    if name == "static":
        frozen, _ = fit(ds, ABLATIONS["uniform_full"], tc)
    model, log = fit(ds, ABLATIONS[name], tc, frozen=frozen)
    return test_metrics(model, ds, tc.K), log


def seed_means(names, seeds, **train_overrides):
    out = {n: [] for n in names}
    for seed in seeds:
        ds = benchmark_dataset(seed)[0]
        for n in names:
            out[n].append(ablation_run(n, seed, ds, **train_overrides)[0].ndcg_at_k)
    return {n: np.array(v) for n, v in out.items()}
