"""Contrastive training loop: AdamW, LR warmup plus staged decay,
two augmented views per graph, and checkpoint persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..actor_graph import ActorGraph
from ..errors import SceneCovError
from .features import FeatureStats, FeaturizedGraph, augment, featurize
from .gine import EncoderConfig, Params, encode, encode_backward, init_params, zero_grads
from .loss import nt_xent_loss


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Params, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params, lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for key, g in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            params[key] -= lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                 + self.weight_decay * params[key])


def learning_rate(config: EncoderConfig, epoch: int) -> float:
    """Linear warmup over warmup_epochs, then lr0 * decay^stage."""
    if epoch < config.warmup_epochs:
        return config.lr0 * (epoch + 1) / config.warmup_epochs
    stage = (epoch - config.warmup_epochs) // config.epochs_per_stage
    return config.lr0 * config.lr_decay ** stage


def total_epochs(config: EncoderConfig) -> int:
    return config.warmup_epochs + config.stages * config.epochs_per_stage


@dataclass
class EpochStats:
    epoch: int
    stage: int  # -1 during warmup
    lr: float
    train_loss: float
    val_loss: float | None


@dataclass
class TrainResult:
    params: Params
    config: EncoderConfig
    feature_stats: FeatureStats
    history: list[EpochStats]
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]


def _batch_loss(params: Params, config: EncoderConfig, views: list[FeaturizedGraph],
                grads: Params | None) -> float:
    """Loss over an ordered view list [v1 of each graph, v2 of each graph];
    accumulates gradients when grads is given."""
    tapes = []
    projections = np.zeros((len(views), config.projection_dim))
    for i, view in enumerate(views):
        _, projection, tape = encode(params, config, view)
        projections[i] = projection
        tapes.append(tape)
    loss, d_proj = nt_xent_loss(projections, config.temperature)
    if grads is not None:
        for i, tape in enumerate(tapes):
            encode_backward(params, config, tape, d_proj[i], grads)
    return loss


def _epoch_batches(order: np.ndarray, batch: int) -> list[np.ndarray]:
    chunks = [order[i:i + batch] for i in range(0, len(order), batch)]
    return [c for c in chunks if len(c) >= 2]


def train(config: EncoderConfig, graphs: Sequence[ActorGraph],
          rng: np.random.Generator | None = None) -> TrainResult:
    """Train the encoder with the in-batch contrastive objective.

    Graphs are split 90/10 into train/validation at scene level (validation
    is skipped when fewer than two graphs would land in it). Every epoch
    draws two augmented views per graph; the final partial batch is kept
    when it still holds at least two graphs. Fixed seeds make the whole run
    reproducible.
    """
    usable = [g for g in graphs if g.n_nodes > 0]
    if len(usable) < 2:
        raise SceneCovError("training needs at least 2 non-empty graphs")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    order = rng.permutation(len(usable))
    val_size = int(len(usable) * config.val_fraction)
    if val_size < 2:
        val_size = 0
    val_ids = tuple(int(i) for i in order[:val_size])
    train_ids = tuple(int(i) for i in order[val_size:])
    if len(train_ids) < 2:
        raise SceneCovError("training split has fewer than 2 graphs")

    stats = FeatureStats.fit([usable[i] for i in train_ids])
    train_feats = [featurize(usable[i], stats) for i in train_ids]
    val_feats = [featurize(usable[i], stats) for i in val_ids]

    params = init_params(config, rng)
    optimizer = AdamW(params, config.weight_decay)
    history: list[EpochStats] = []

    for epoch in range(total_epochs(config)):
        lr = learning_rate(config, epoch)
        stage = -1 if epoch < config.warmup_epochs \
            else (epoch - config.warmup_epochs) // config.epochs_per_stage
        epoch_order = rng.permutation(len(train_feats))
        losses = []
        for batch_ids in _epoch_batches(epoch_order, config.batch):
            views1, views2 = [], []
            for i in batch_ids:
                views1.append(augment(train_feats[i], rng, config.noise_sigma,
                                      config.edge_drop_p))
                views2.append(augment(train_feats[i], rng, config.noise_sigma,
                                      config.edge_drop_p))
            grads = zero_grads(params)
            loss = _batch_loss(params, config, views1 + views2, grads)
            optimizer.step(params, grads, lr)
            losses.append(loss)
        train_loss = float(np.mean(losses)) if losses else float("nan")

        val_loss = None
        if val_feats:
            val_rng = np.random.default_rng([config.seed, 7919, epoch])
            views1 = [augment(f, val_rng, config.noise_sigma, config.edge_drop_p)
                      for f in val_feats]
            views2 = [augment(f, val_rng, config.noise_sigma, config.edge_drop_p)
                      for f in val_feats]
            val_loss = _batch_loss(params, config, views1 + views2, None)
        history.append(EpochStats(epoch, stage, lr, train_loss, val_loss))

    return TrainResult(params, config, stats, history, train_ids, val_ids)


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, config: EncoderConfig, stats: FeatureStats,
                    params: Params) -> None:
    doc = {
        "format": "scenecov-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "feature_stats": stats.to_dict(),
        "params": {k: params[k].tolist() for k in sorted(params)},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[EncoderConfig, FeatureStats, Params]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneCovError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != "scenecov-checkpoint":
        raise SceneCovError(f"{path}: not a scenecov checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise SceneCovError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = EncoderConfig.from_dict(doc["config"])
    stats = FeatureStats.from_dict(doc["feature_stats"])
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
    return config, stats, params
