"""Embedding scorers: matrix factorisation and light graph convolution.

Scores are non-negative density-ratio estimates ``softplus(<e_u, e_i>)``.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

CHECKPOINT_VERSION = 1
BACKBONES = ("mf", "lightgc")


class CheckpointError(RuntimeError):
    pass


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(eq=False)
class ScorerModel:
    user_embed: np.ndarray
    item_embed: np.ndarray
    backbone: str = "lightgc"
    num_layers: int = 3

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.user_embed.shape[1] != self.item_embed.shape[1]:
            raise ValueError("user and item embeddings differ in width")

    @classmethod
    def init(cls, num_users, num_items, d=64, backbone="lightgc", num_layers=3, seed=0,
             std=0.1):
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, std, size=(num_users, d)),
            rng.normal(0.0, std, size=(num_items, d)),
            backbone,
            num_layers,
        )

    @property
    def d(self):
        return self.user_embed.shape[1]

    @property
    def num_users(self):
        return self.user_embed.shape[0]

    @property
    def num_items(self):
        return self.item_embed.shape[0]

    def copy(self):
        return ScorerModel(self.user_embed.copy(), self.item_embed.copy(), self.backbone,
                           self.num_layers)

    def outputs(self, graph=None):
        """Final user / item representations (raw tables for ``mf``)."""
        if self.backbone == "mf":
            return self.user_embed, self.item_embed
        if graph is None:
            raise ValueError("lightgc backbone needs a PropagationGraph")
        return propagate(self, graph)


@dataclass(eq=False)
class PropagationGraph:
    """Symmetrically normalised user-item adjacency over train edges.

    ``users``/``items``/``weights`` hold the edge list; ``matrix`` is the
    (U+I)x(U+I) operator with users first.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    weights: np.ndarray
    matrix: sp.csr_matrix

    @classmethod
    def from_dataset(cls, ds):
        users = np.concatenate(
            [np.full(len(p), u, dtype=np.int64) for u, p in enumerate(ds.positives)]
            or [np.zeros(0, dtype=np.int64)]
        )
        items = np.concatenate(list(ds.positives) or [np.zeros(0, dtype=np.int64)])
        return cls.from_edges(ds.num_users, ds.num_items, users, items)

    @classmethod
    def from_edges(cls, num_users, num_items, users, items):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        deg_u = np.bincount(users, minlength=num_users).astype(np.float64)
        deg_i = np.bincount(items, minlength=num_items).astype(np.float64)
        w = 1.0 / np.sqrt(deg_u[users] * deg_i[items])
        n = num_users + num_items
        rows = np.concatenate([users, items + num_users])
        cols = np.concatenate([items + num_users, users])
        mat = sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))
        return cls(num_users, num_items, users, items, w, mat)

    def smooth(self, stacked, num_layers):
        """Mean of ``A^k @ stacked`` for k = 0..num_layers."""
        acc = stacked.copy()
        cur = stacked
        for _ in range(num_layers):
            cur = self.matrix @ cur
            acc += cur
        return acc / (num_layers + 1)


def propagate(model, graph):
    """Layer-mean light graph convolution; identity for ``mf``."""
    if model.backbone == "mf":
        return model.user_embed, model.item_embed
    emb = np.vstack([model.user_embed, model.item_embed])
    out = graph.smooth(emb, model.num_layers)
    return out[: model.num_users], out[model.num_users:]


def propagate_backward(model, graph, grad_user_out, grad_item_out):
    """Pull output-embedding gradients back onto the layer-0 tables.

    The smoothing operator is symmetric, so its adjoint is itself.
    """
    if model.backbone == "mf":
        return grad_user_out, grad_item_out
    g = np.vstack([grad_user_out, grad_item_out])
    out = graph.smooth(g, model.num_layers)
    return out[: model.num_users], out[model.num_users:]


def score_block(user_out, item_out, users, items):
    """``softplus`` of the inner products for every (user, item) pair."""
    return softplus(user_out[users] @ item_out[items].T)


def rank_items(user_out, item_out, u, exclude=(), K=20):
    """Top-``K`` items for user ``u`` by raw inner product, ties by ascending id."""
    if K < 1:
        raise ValueError("K must be >= 1")
    scores = item_out @ user_out[u]
    keep = np.ones(len(scores), dtype=bool)
    keep[np.asarray(list(exclude), dtype=np.int64)] = False
    cand = np.flatnonzero(keep)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:K]].tolist()


def _checksum(arrays, meta):
    h = hashlib.sha256(json.dumps(meta, sort_keys=True).encode())
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def save_checkpoint(model, path):
    """Write an ``.npz`` checkpoint.

    Layout: ``meta`` (JSON string with format version, backbone, d,
    num_layers), ``user_embed``, ``item_embed`` (float64) and ``sha256`` over
    meta plus both tables.
    """
    meta = {"version": CHECKPOINT_VERSION, "backbone": model.backbone, "d": model.d,
            "num_layers": model.num_layers}
    digest = _checksum([model.user_embed, model.item_embed], meta)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)),
                 user_embed=model.user_embed, item_embed=model.item_embed,
                 sha256=np.array(digest))


def load_checkpoint(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            ue = z["user_embed"]
            ie = z["item_embed"]
            digest = str(z["sha256"])
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, EOFError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    if _checksum([ue, ie], meta) != digest:
        raise CheckpointError(f"checksum mismatch in {path}")
    return ScorerModel(ue, ie, meta["backbone"], meta["num_layers"])
