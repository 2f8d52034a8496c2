"""Positive-only interaction datasets: loading, splitting and corpus statistics."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """Raised for a malformed line in an interaction file."""

    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def _freeze(sets, num_users):
    out = []
    for u in range(num_users):
        items = sets.get(u, ())
        out.append(np.array(sorted(set(items)), dtype=np.int64))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Binary user-item feedback with train / validation / test splits.

    Each split is a tuple indexed by user id holding a sorted int64 array of
    item ids. The dataset is treated as immutable once built.
    """

    num_users: int
    num_items: int
    positives: tuple
    val_positives: tuple = ()
    test_positives: tuple = ()
    item_popularity: np.ndarray = field(init=False, repr=False)
    user_prior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        empty = tuple(np.zeros(0, dtype=np.int64) for _ in range(self.num_users))
        if not self.val_positives:
            object.__setattr__(self, "val_positives", empty)
        if not self.test_positives:
            object.__setattr__(self, "test_positives", empty)
        for name in ("positives", "val_positives", "test_positives"):
            split = getattr(self, name)
            if len(split) != self.num_users:
                raise ValueError(f"{name} has {len(split)} rows, expected {self.num_users}")
        pop = np.zeros(self.num_items, dtype=np.int64)
        for items in self.positives:
            pop[items] += 1
        object.__setattr__(self, "item_popularity", pop)
        counts = np.array([len(p) for p in self.positives], dtype=np.int64)
        if self.num_items:
            prior = counts / self.num_items
        else:
            prior = np.zeros(self.num_users)
        object.__setattr__(self, "user_prior", prior)

    def __eq__(self, other):
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        if (self.num_users, self.num_items) != (other.num_users, other.num_items):
            return False
        return all(
            np.array_equal(a, b)
            for name in ("positives", "val_positives", "test_positives")
            for a, b in zip(getattr(self, name), getattr(other, name))
        )

    __hash__ = None

    @classmethod
    def from_sets(cls, train, num_users=None, num_items=None, val=None, test=None):
        """Build from ``{user: iterable-of-items}`` mappings."""
        maps = [m or {} for m in (train, val, test)]
        max_u = max((u for m in maps for u in m), default=-1)
        max_i = max((i for m in maps for items in m.values() for i in items), default=-1)
        nu = max_u + 1 if num_users is None else num_users
        ni = max_i + 1 if num_items is None else num_items
        return cls(nu, ni, _freeze(maps[0], nu), _freeze(maps[1], nu), _freeze(maps[2], nu))

    @property
    def num_interactions(self):
        return int(sum(len(p) for p in self.positives))

    @property
    def train_counts(self):
        return np.array([len(p) for p in self.positives], dtype=np.int64)

    @property
    def eligible_users(self):
        """Users with at least one train positive."""
        return np.flatnonzero(self.train_counts > 0)

    @property
    def empty_users(self):
        return np.flatnonzero(self.train_counts == 0)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(f"{self.num_users},{self.num_items}".encode())
        for split in (self.positives, self.val_positives, self.test_positives):
            for items in split:
                h.update(items.tobytes())
                h.update(b"|")
            h.update(b"#")
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "train": self.num_interactions,
            "validation": int(sum(len(p) for p in self.val_positives)),
            "test": int(sum(len(p) for p in self.test_positives)),
            "sha256": h.hexdigest(),
        }


def _read_adjacency(path):
    rows = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = [int(t) for t in tokens]
            except ValueError:
                raise ParseError(path, lineno, f"non-integer token in {line.strip()!r}") from None
            if min(ids) < 0:
                raise ParseError(path, lineno, "negative id")
            rows.setdefault(ids[0], set()).update(ids[1:])
    return rows


def _read_csv(path):
    rows = {}
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < 2:
                raise ParseError(path, lineno, "expected 'user,item'")
            try:
                u, i = int(rec[0]), int(rec[1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(path, lineno, f"non-integer field in {rec!r}") from None
            if u < 0 or i < 0:
                raise ParseError(path, lineno, "negative id")
            rows.setdefault(u, set()).add(i)
    return rows


def read_interactions(path, format="adjacency-text"):
    """Parse a file into a ``{user: set(items)}`` map."""
    if format == "adjacency-text":
        return _read_adjacency(path)
    if format == "triple-csv":
        return _read_csv(path)
    raise ValueError(f"unknown format {format!r}")


def load_interactions(path, format="adjacency-text", *, val_path=None, test_path=None,
                      compact=False):
    """Load a positive-only log into an :class:`InteractionDataset`.

    Ids are kept as given, so ``num_users``/``num_items`` are the maximum id
    plus one over all supplied files. ``compact=True`` remaps both id spaces
    densely (in ascending order of the original ids).
    """
    train = read_interactions(path, format)
    val = read_interactions(val_path, format) if val_path else {}
    test = read_interactions(test_path, format) if test_path else {}
    if compact:
        users = sorted({u for m in (train, val, test) for u in m})
        items = sorted({i for m in (train, val, test) for s in m.values() for i in s})
        umap = {u: k for k, u in enumerate(users)}
        imap = {i: k for k, i in enumerate(items)}
        train, val, test = (
            {umap[u]: {imap[i] for i in s} for u, s in m.items()} for m in (train, val, test)
        )
    # held-out items that also occur in train are dropped from the held-out split
    for m in (val, test):
        for u, s in m.items():
            s.difference_update(train.get(u, ()))
    for u, s in test.items():
        s.difference_update(val.get(u, ()))
    return InteractionDataset.from_sets(train, val=val, test=test)


def load_directory(path, val_fraction=0.1, seed=0):
    """Load a ``train.txt``/``test.txt`` directory in adjacency-text layout.

    A ``val.txt`` is used when present; otherwise a per-user holdout of
    ``val_fraction`` is drawn from train.
    """
    path = Path(path)
    val = path / "val.txt"
    ds = load_interactions(
        path / "train.txt",
        val_path=val if val.exists() else None,
        test_path=path / "test.txt" if (path / "test.txt").exists() else None,
    )
    if not val.exists() and val_fraction > 0:
        ds = split_holdout(ds, val_fraction, seed)
    return ds


def write_adjacency(path, split, num_users=None):
    """Write one split in adjacency-text; users with no items get a bare id line."""
    n = len(split) if num_users is None else num_users
    with open(path, "w") as fh:
        for u in range(n):
            fh.write(" ".join(str(x) for x in (u, *split[u].tolist())) + "\n")


def split_holdout(ds, val_fraction, seed):
    """Move ``ceil(val_fraction * |I_u|)`` train positives per user to validation.

    Users with a single positive keep it in train. Existing validation items
    are kept and the new ones merged in.
    """
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for u in range(ds.num_users):
        items = ds.positives[u]
        n_val = math.ceil(val_fraction * len(items)) if len(items) > 1 else 0
        n_val = min(n_val, len(items) - 1) if len(items) else 0
        picked = rng.choice(items, size=n_val, replace=False) if n_val else items[:0]
        train.append(np.setdiff1d(items, picked))
        val.append(np.union1d(ds.val_positives[u], picked).astype(np.int64))
    return InteractionDataset(ds.num_users, ds.num_items, tuple(train), tuple(val),
                              ds.test_positives)


def stats(ds, include_heldout=True):
    """Corpus counts and density, as in a dataset-statistics table."""
    n = ds.num_interactions
    if include_heldout:
        n += sum(len(p) for p in ds.val_positives) + sum(len(p) for p in ds.test_positives)
    cells = ds.num_users * ds.num_items
    return {
        "users": ds.num_users,
        "items": ds.num_items,
        "interactions": int(n),
        "density": n / cells if cells else 0.0,
    }
