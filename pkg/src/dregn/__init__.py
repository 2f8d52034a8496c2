"""Top-K recommendation from implicit feedback via density-ratio estimation."""

from .data import InteractionDataset, load_interactions, split_holdout, stats
from .metrics import MetricReport, evaluate, ndcg_at_k, recall_at_k
from .model import PropagationGraph, ScorerModel, propagate, rank_items, score_block
from .risk import ULSIF, RiskConfig, bpr_loss, pu_regression_loss, ranking_ulsif_loss
from .sampler import MiniBatch, item_inclusion_prob, sample_batch
from .trainer import TrainConfig, TrainLog, estimate_priors, train

__version__ = "0.1.0"
