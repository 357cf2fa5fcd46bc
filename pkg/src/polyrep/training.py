"""Training loop and evaluation harness.

One seeded configuration fully determines the run: the split, the parameter
init, every shuffle, and therefore the epoch log and the checkpoint bytes.
The scheduler watches validation loss (min mode); early stopping watches
validation accuracy and restores the best parameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .datasets import load_records, split_dataset
from .errors import DataError
from .metrics import (
    ClassificationMetrics,
    RetrievalMetrics,
    classification_metrics,
    retrieval_metrics,
)
from .model import (
    GnnConfig,
    GnnParams,
    collate,
    embed_graph,
    gnn_forward,
    gnn_train_step,
    precompute_graph_features,
)
from .nn import AdamState, PlateauState, cross_entropy, plateau_step
from .surface_graph import build_surface_graph

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    data: str = ""
    hidden_dim: int = 64
    layers: int = 2
    attr_dim: int = 0
    n_classes: int = 0  # 0: infer from the data
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 500
    early_stop_patience: int = 50
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    min_lr: float = 1e-6
    seed: int = 0
    include_backtracking: bool = True
    attr_edge_orientation: str = "reversed"
    retrieval_similarity: str = "cosine"

    def __post_init__(self):
        if self.hidden_dim < 1 or self.layers < 1 or self.attr_dim < 0:
            raise ValueError("dims must be positive (attr_dim >= 0)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]

    def gnn_config(self, n_classes: int) -> GnnConfig:
        return GnnConfig(
            layers=self.layers,
            hidden_dim=self.hidden_dim,
            attr_dim=self.attr_dim,
            n_classes=n_classes,
            include_backtracking=self.include_backtracking,
            attr_edge_orientation=self.attr_edge_orientation,
            seed=self.seed,
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list
    train_records: list
    val_records: list
    test_records: list


def features_for_records(records, cfg: GnnConfig):
    return [
        precompute_graph_features(build_surface_graph(r.polyhedron), cfg)
        for r in records
    ]


def _minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    batches = [order[s : s + batch_size] for s in range(0, n, batch_size)]
    # A trailing singleton cannot feed train-mode batchnorm; fold it back.
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def _eval_logits(params, features, batch_size):
    outs = []
    for s in range(0, len(features), batch_size):
        batch = collate(features[s : s + batch_size])
        outs.append(gnn_forward(params, batch, mode="eval").logits)
    return np.vstack(outs)


def train(cfg: TrainConfig, records=None) -> TrainResult:
    """Run the full loop and return the best-validation checkpoint + log."""
    if records is None:
        if not cfg.data:
            raise DataError("no records given and no data path configured")
        records = load_records(cfg.data, expected_attr_dim=cfg.attr_dim or None)
    records = list(records)
    train_recs, val_recs, test_recs = split_dataset(records, cfg.seed)

    n_classes = cfg.n_classes or (max(r.label for r in records) + 1)
    train_labels = {r.label for r in train_recs}
    missing = [c for c in range(n_classes) if c not in train_labels]
    if missing:
        raise DataError(f"classes {missing} have no training samples")

    gnn_cfg = cfg.gnn_config(n_classes)
    feats_train = features_for_records(train_recs, gnn_cfg)
    feats_val = features_for_records(val_recs, gnn_cfg)
    y_train = np.array([r.label for r in train_recs], dtype=np.int64)
    y_val = np.array([r.label for r in val_recs], dtype=np.int64)

    params = GnnParams(gnn_cfg)
    adam = AdamState.for_params(params.parameters())
    scheduler = PlateauState(
        lr=cfg.lr,
        factor=cfg.scheduler_factor,
        patience=cfg.scheduler_patience,
        min_lr=cfg.min_lr,
    )
    shuffle_rng = np.random.default_rng([cfg.seed, 17])

    log = []
    best_acc = -1.0
    best_epoch = -1
    best_state = None
    bad_epochs = 0
    lr = cfg.lr

    for epoch in range(cfg.max_epochs):
        batch_losses = []
        batch_sizes = []
        for idx in _minibatches(len(feats_train), cfg.batch_size, shuffle_rng):
            batch = collate([feats_train[i] for i in idx])
            loss = gnn_train_step(params, batch, y_train[idx], adam, lr)
            batch_losses.append(loss)
            batch_sizes.append(len(idx))
        train_loss = float(
            np.average(batch_losses, weights=batch_sizes) if batch_losses else 0.0
        )

        val_logits = _eval_logits(params, feats_val, cfg.batch_size)
        val_loss, _ = cross_entropy(val_logits, y_val)
        val_acc = float((val_logits.argmax(axis=1) == y_val).mean())
        lr = plateau_step(scheduler, val_loss)
        log.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "val_acc": val_acc,
                "lr": lr,
            }
        )

        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_state = (
                params.clone(),
                AdamState(
                    m=[x.copy() for x in adam.m],
                    v=[x.copy() for x in adam.v],
                    t=adam.t,
                ),
                dataclasses.replace(scheduler),
            )
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.early_stop_patience:
                logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break

    if best_state is None:
        raise DataError("training ran zero epochs; nothing to checkpoint")
    params, adam, scheduler = best_state
    ckpt = Checkpoint(
        config=cfg.to_dict() | {"n_classes": n_classes},
        params=params,
        adam=adam,
        scheduler=scheduler,
        best_epoch=best_epoch,
        rng_state=json.loads(json.dumps(shuffle_rng.bit_generator.state)),
    )
    return TrainResult(ckpt, log, train_recs, val_recs, test_recs)


def evaluate_classification(
    params: GnnParams, records, batch_size: int = 8
) -> ClassificationMetrics:
    feats = features_for_records(records, params.cfg)
    labels = np.array([r.label for r in records], dtype=np.int64)
    if labels.max(initial=-1) >= params.cfg.n_classes:
        raise DataError(
            f"test labels reach {labels.max()} but the model has "
            f"{params.cfg.n_classes} classes"
        )
    logits = _eval_logits(params, feats, batch_size)
    return classification_metrics(logits, labels)


def evaluate_retrieval(
    params: GnnParams, records, similarity: str = "cosine", batch_size: int = 8
) -> RetrievalMetrics:
    feats = features_for_records(records, params.cfg)
    labels = np.array([r.label for r in records], dtype=np.int64)
    embs = []
    for s in range(0, len(feats), batch_size):
        embs.append(embed_graph(params, collate(feats[s : s + batch_size])))
    return retrieval_metrics(np.vstack(embs), labels, similarity)
