"""Quadruplet margin ranking loss, similarity precision, and the training loop.

The loss pushes the four patch embeddings of a quadruplet into the rank order
d(a,p) < d(a,p') < d(a,n) through three hinge terms with decreasing margins:

    L = max(0, d(a,p') - d(a,n) + mu1)
      + max(0, d(p,p') - d(p,n) + mu2)
      + max(0, d(a,p) - d(a,p') + mu3)

A fourth (a, p, n) term would be redundant: when all three hinges are
satisfied, d(a,p) < d(a,p') < d(a,n) already holds transitively.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field

import numpy as np
import torch

from .embednet import EmbeddingNet, build_network, patches_to_tensor
from .errors import InvalidConfigError, ShapeError, UndefinedMetricError
from .quadgen import split_indices_by_anchor_image


@dataclass(frozen=True)
class MarginSet:
    """Hinge margins, largest for the coarsest ranking constraint."""

    mu1: float = 0.10
    mu2: float = 0.05
    mu3: float = 0.01

    def __post_init__(self):
        if not self.mu1 > self.mu2 > self.mu3 > 0:
            raise InvalidConfigError(f"margins must satisfy mu1 > mu2 > mu3 > 0, got {self}")
        for mu in (self.mu1, self.mu2, self.mu3):
            if not 0.01 <= mu <= 0.1:
                raise InvalidConfigError(f"margins must lie in [0.01, 0.1], got {mu}")


def pairwise_distance(e1, e2):
    """Euclidean distance between embeddings (last axis); unit-norm inputs
    land in [0, 2]."""
    if isinstance(e1, torch.Tensor) or isinstance(e2, torch.Tensor):
        if e1.shape[-1] != e2.shape[-1]:
            raise ShapeError(f"embedding dims differ: {e1.shape[-1]} vs {e2.shape[-1]}")
        return torch.linalg.vector_norm(e1 - e2, dim=-1)
    e1, e2 = np.asarray(e1), np.asarray(e2)
    if e1.shape[-1] != e2.shape[-1]:
        raise ShapeError(f"embedding dims differ: {e1.shape[-1]} vs {e2.shape[-1]}")
    return np.linalg.norm(e1 - e2, axis=-1)


def quadruplet_rank_loss(ea, ep, ewp, en, margins: MarginSet = MarginSet()):
    """Per-quadruplet loss; scalar for single vectors, a length-N vector for
    (N, D) batches. Torch inputs keep autograd, numpy inputs return floats."""
    d_ap = pairwise_distance(ea, ep)
    d_awp = pairwise_distance(ea, ewp)
    d_an = pairwise_distance(ea, en)
    d_pwp = pairwise_distance(ep, ewp)
    d_pn = pairwise_distance(ep, en)
    t1 = d_awp - d_an + margins.mu1
    t2 = d_pwp - d_pn + margins.mu2
    t3 = d_ap - d_awp + margins.mu3
    if isinstance(t1, torch.Tensor):
        zero = torch.zeros_like(t1)
        return torch.maximum(t1, zero) + torch.maximum(t2, zero) + torch.maximum(t3, zero)
    return np.maximum(t1, 0.0) + np.maximum(t2, 0.0) + np.maximum(t3, 0.0)


def similarity_precision(ea, ep, ewp, en) -> float:
    """Fraction of quadruplets whose distances are strictly ordered as
    d(a,p) < d(a,p') < d(a,n). Ties count as failures."""
    ea, ep, ewp, en = (np.asarray(e) for e in (ea, ep, ewp, en))
    ea = np.atleast_2d(ea)
    ep, ewp, en = np.atleast_2d(ep), np.atleast_2d(ewp), np.atleast_2d(en)
    if len(ea) == 0:
        raise UndefinedMetricError("similarity precision is undefined on an empty set")
    d_ap = pairwise_distance(ea, ep)
    d_awp = pairwise_distance(ea, ewp)
    d_an = pairwise_distance(ea, en)
    ok = (d_ap < d_awp) & (d_awp < d_an)
    return float(np.mean(ok))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    plateau_patience: int = 5
    max_epochs: int = 100
    batch_size: int = 64
    margins: MarginSet = field(default_factory=MarginSet)
    val_fraction: float = 0.1
    # optional early exit once validation precision reaches a target, for
    # wall-clock-budgeted runs; None trains to max_epochs
    early_stop_precision: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        if not 0 < self.lr_decay_factor < 1:
            raise InvalidConfigError("lr_decay_factor must be in (0, 1)")
        if self.plateau_patience < 1:
            raise InvalidConfigError("plateau_patience must be >= 1")
        if self.max_epochs < 0:
            raise InvalidConfigError("max_epochs must be >= 0")
        if self.batch_size < 2:
            raise InvalidConfigError("batch_size must be >= 2")


class PlateauScheduler:
    """Multiplies the learning rate by `factor` after `patience` consecutive
    epochs without strict validation-loss improvement."""

    def __init__(self, optimizer, patience: int, factor: float):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.best = float("inf")
        self.bad_epochs = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, value: float) -> float:
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                for group in self.optimizer.param_groups:
                    group["lr"] *= self.factor
                self.bad_epochs = 0
        return self.lr


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_precision: float
    lr: float


@dataclass
class TrainResult:
    network: EmbeddingNet
    history: list
    best_epoch: int | None
    best_val_precision: float


def make_balanced_batches(easy_idx, hard_idx, batch_size: int, rng: np.random.Generator):
    """Batches drawing easy and hard records in equal number, each class
    shuffled and consumed without replacement within the epoch."""
    easy = np.array(easy_idx)
    hard = np.array(hard_idx)
    rng.shuffle(easy)
    rng.shuffle(hard)
    half = batch_size // 2
    per_class = min(half, len(easy), len(hard))
    if per_class == 0:
        raise InvalidConfigError("need at least one easy and one hard record per batch")
    n_batches = min(len(easy), len(hard)) // per_class
    batches = []
    for b in range(n_batches):
        lo, hi = b * per_class, (b + 1) * per_class
        batches.append(np.concatenate([easy[lo:hi], hard[lo:hi]]).tolist())
    return batches


def _quad_tensors(patches, indices):
    base = 4 * np.array(indices)
    return tuple(patches_to_tensor(patches[base + i]) for i in range(4))


def _eval_split(network, patches, indices, margins, batch_size=256):
    network.eval()
    losses = []
    embs = [[], [], [], []]
    with torch.no_grad():
        for start in range(0, len(indices), batch_size):
            chunk = indices[start : start + batch_size]
            ea_t, ep_t, ewp_t, en_t = (network(t) for t in _quad_tensors(patches, chunk))
            losses.append(quadruplet_rank_loss(ea_t, ep_t, ewp_t, en_t, margins).numpy())
            for acc, e in zip(embs, (ea_t, ep_t, ewp_t, en_t)):
                acc.append(e.numpy())
    loss = float(np.mean(np.concatenate(losses)))
    precision = similarity_precision(*(np.concatenate(a) for a in embs))
    return loss, precision


def train(records, store, config: TrainConfig, rng: np.random.Generator, network: EmbeddingNet | None = None) -> TrainResult:
    """Optimize the embedding network on a quadruplet dataset.

    Splits by anchor image, draws easy/hard-balanced batches, runs SGD with
    Nesterov momentum, decays the learning rate on validation-loss plateaus,
    and keeps the weights of the epoch with the best validation precision.
    """
    if not records:
        raise InvalidConfigError("no records to train on")
    difficulties = {r.difficulty for r in records}
    if difficulties != {"easy", "hard"}:
        raise InvalidConfigError(f"training needs both easy and hard records, found {sorted(difficulties)}")
    if 4 * len(records) != len(store):
        raise InvalidConfigError(f"{len(records)} records need {4 * len(records)} patches, store has {len(store)}")

    split_seed = int(rng.integers(2**32))
    train_idx, val_idx = split_indices_by_anchor_image(records, config.val_fraction, seed=split_seed)
    if not val_idx:
        raise InvalidConfigError("validation split is empty")
    if not train_idx:
        raise InvalidConfigError("training split is empty")
    train_easy = [i for i in train_idx if records[i].difficulty == "easy"]
    train_hard = [i for i in train_idx if records[i].difficulty == "hard"]
    if not train_easy or not train_hard:
        raise InvalidConfigError("training split must keep both difficulties")

    if network is None:
        network = build_network(seed=int(rng.integers(2**32)))
    torch.manual_seed(int(rng.integers(2**32)))

    optimizer = torch.optim.SGD(
        network.parameters(), lr=config.learning_rate, momentum=config.momentum, nesterov=True
    )
    scheduler = PlateauScheduler(optimizer, config.plateau_patience, config.lr_decay_factor)

    history: list = []
    best_state = copy.deepcopy(network.state_dict())
    best_epoch = None
    best_precision = -1.0
    patches = store.as_array()

    for epoch in range(1, config.max_epochs + 1):
        epoch_lr = scheduler.lr
        network.train()
        batch_losses = []
        for batch in make_balanced_batches(train_easy, train_hard, config.batch_size, rng):
            tensors = _quad_tensors(patches, batch)
            joint = torch.cat(tensors)
            out = network(joint)
            ea_t, ep_t, ewp_t, en_t = out.chunk(4)
            loss = quadruplet_rank_loss(ea_t, ep_t, ewp_t, en_t, config.margins).mean()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        val_loss, val_precision = _eval_split(network, patches, val_idx, config.margins)
        history.append(EpochStats(epoch, float(np.mean(batch_losses)), val_loss, val_precision, epoch_lr))
        if val_precision > best_precision:
            best_precision = val_precision
            best_epoch = epoch
            best_state = copy.deepcopy(network.state_dict())
        scheduler.step(val_loss)
        if config.early_stop_precision is not None and val_precision >= config.early_stop_precision:
            break

    network.load_state_dict(best_state)
    return TrainResult(network=network, history=history, best_epoch=best_epoch, best_val_precision=max(best_precision, 0.0) if history else 0.0)


HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_precision", "lr")


def write_history(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss), repr(row.val_precision), repr(row.lr)])


def read_history(path):
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        return [
            EpochStats(
                epoch=int(r["epoch"]),
                train_loss=float(r["train_loss"]),
                val_loss=float(r["val_loss"]),
                val_precision=float(r["val_precision"]),
                lr=float(r["lr"]),
            )
            for r in reader
        ]
