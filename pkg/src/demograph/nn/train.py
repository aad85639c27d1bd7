"""Training loop: per-epoch merge view, annealed CE, Adam, early stopping."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..graphs import Graph, normalized_adjacency, symmetrized_edges
from ..merge import EpochMerger, MergeConfig
from .layers import ModelParams, gat_forward, gcn_forward, init_params
from .optim import AdamState, adam_step
from .tensor import (NumericError, Tensor, concat, constant, default_dtype,
                     parameter, set_default_dtype, softmax_cross_entropy)

logger = logging.getLogger(__name__)

ARCHITECTURES = ("gcn", "gat")
ANNEAL_FORMS = ("decreasing", "literal")
TAU_FLOOR = 0.5

# Seed-sequence stream tags (merge uses 0 and 1).
_PARAM_STREAM = 10
_DROPOUT_STREAM = 11

METRICS_COLUMNS = ("epoch", "train_loss", "val_acc", "test_acc", "tau")


class TrainSetupError(ValueError):
    """Configuration or graph unusable for training."""


class DivergenceError(RuntimeError):
    """Loss or activations became non-finite; carries the last finite epoch."""

    def __init__(self, message: str, last_finite=None, metrics=None):
        super().__init__(message)
        self.last_finite = last_finite
        self.metrics = metrics or []


def temperature(epoch: int, rate: float = 0.01, floor: float = TAU_FLOOR,
                form: str = "decreasing") -> float:
    """Annealed softmax temperature with a hard floor.

    The default decays exp(-rate * epoch) down to the floor; form="literal"
    keeps the growing exponent exp(rate * epoch), where the floor is vacuous.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if form == "decreasing":
        return max(floor, float(np.exp(-rate * epoch)))
    if form == "literal":
        return max(floor, float(np.exp(rate * epoch)))
    raise ValueError(f"unknown anneal form {form!r}")


@dataclass(frozen=True)
class TrainConfig:
    architecture: str = "gcn"
    layers: int = 2
    hidden_dim: int = 64
    heads: int = 8
    dropout: float = 0.1
    learning_rate: float = 5e-5
    weight_decay: float = 1e-5
    max_epochs: int = 1000
    patience: int = 100
    anneal_rate: float = 0.01
    anneal_form: str = "decreasing"
    tau_floor: float = TAU_FLOOR
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise TrainSetupError(
                f"architecture must be one of {ARCHITECTURES}")
        if self.layers < 1:
            raise TrainSetupError("layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise TrainSetupError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise TrainSetupError("learning rate must be positive")
        if self.max_epochs < 1:
            raise TrainSetupError("max_epochs must be >= 1")
        if self.patience < 0:
            raise TrainSetupError("patience must be >= 0")
        if self.heads < 1:
            raise TrainSetupError("heads must be >= 1")
        if (self.architecture == "gat" and self.layers > 1
                and self.hidden_dim % self.heads):
            raise TrainSetupError(
                f"hidden_dim {self.hidden_dim} must be divisible by heads "
                f"{self.heads}")
        if self.anneal_form not in ANNEAL_FORMS:
            raise TrainSetupError(f"anneal_form must be one of {ANNEAL_FORMS}")
        if self.precision not in ("float64", "float32"):
            raise TrainSetupError("precision must be float64 or float32")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_acc: float
    test_acc: float
    tau: float

    def row(self) -> list[str]:
        return [str(self.epoch), repr(self.train_loss), repr(self.val_acc),
                repr(self.test_acc), repr(self.tau)]


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    metrics: list[EpochMetrics]
    best_epoch: int
    best_val_acc: float
    test_acc: float
    epochs_run: int
    predictions: np.ndarray


def write_metrics_csv(metrics, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in metrics:
            writer.writerow(row.row())


def save_checkpoint(path: str | Path, snapshot: dict[str, np.ndarray]) -> None:
    """Binary parameter dump with an embedded JSON shape manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(snapshot)
    manifest = {
        "names": names,
        "shapes": {n: list(snapshot[n].shape) for n in names},
        "dtypes": {n: str(snapshot[n].dtype) for n in names},
    }
    arrays = {f"param_{i}": snapshot[n] for i, n in enumerate(names)}
    with path.open("wb") as fh:
        # File handle keeps np.savez from appending its own extension.
        np.savez(fh, manifest=np.frombuffer(
            json.dumps(manifest).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(Path(path)) as data:
        manifest = json.loads(bytes(data["manifest"]).decode("utf-8"))
        out = {}
        for i, name in enumerate(manifest["names"]):
            arr = data[f"param_{i}"]
            expected = tuple(manifest["shapes"][name])
            if arr.shape != expected:
                raise ValueError(
                    f"checkpoint {path}: parameter {name!r} has shape "
                    f"{arr.shape}, manifest says {expected}")
            out[name] = arr
    return out


def _masked_accuracy(predictions: np.ndarray, labels: np.ndarray,
                     mask: np.ndarray) -> float:
    if mask.size == 0:
        return float("nan")
    return float(np.mean(predictions[mask] == labels[mask]))


def _forward(cfg: TrainConfig, structure, num_nodes: int, feats: Tensor,
             params: ModelParams, active: bool,
             rng: np.random.Generator | None) -> Tensor:
    if cfg.architecture == "gcn":
        return gcn_forward(structure, feats, params, cfg.layers,
                           dropout_rate=cfg.dropout, dropout_active=active,
                           rng=rng)
    return gat_forward(structure, num_nodes, feats, params, cfg.layers,
                       cfg.heads, dropout_rate=cfg.dropout,
                       dropout_active=active, rng=rng)


def train(base_graph: Graph, kgs, merge_cfg: MergeConfig,
          train_cfg: TrainConfig, metrics_path: str | Path | None = None,
          checkpoint_path: str | Path | None = None) -> TrainResult:
    """Full optimization run; returns best-validation-epoch artifacts.

    Each epoch draws the merge view for that epoch, runs a dropout-active
    forward pass, applies temperature-scaled cross entropy on the train
    split, and steps Adam. Validation/test accuracy come from a dropout-off
    forward on the same view. Early stopping tracks validation accuracy;
    patience counts the non-improving epochs tolerated after the best one.
    """
    if base_graph.splits.train.size == 0 or base_graph.splits.val.size == 0:
        raise TrainSetupError("training needs non-empty train and val splits")
    num_classes = base_graph.num_classes
    if num_classes < 2:
        raise TrainSetupError("training needs at least 2 labeled classes")

    previous_dtype = default_dtype()
    set_default_dtype(np.float64 if train_cfg.precision == "float64"
                      else np.float32)
    try:
        return _train_inner(base_graph, kgs, merge_cfg, train_cfg,
                            metrics_path, checkpoint_path, num_classes)
    finally:
        set_default_dtype(previous_dtype)


def _train_inner(base_graph, kgs, merge_cfg, train_cfg, metrics_path,
                 checkpoint_path, num_classes) -> TrainResult:
    merger = EpochMerger(base_graph, list(kgs), merge_cfg)
    rng_param = np.random.default_rng([train_cfg.seed, _PARAM_STREAM])
    rng_dropout = np.random.default_rng([train_cfg.seed, _DROPOUT_STREAM])

    params = init_params(train_cfg.architecture, base_graph.feature_dim,
                         num_classes, train_cfg.layers, train_cfg.hidden_dim,
                         train_cfg.heads, rng_param)
    has_concepts = bool(merger.concepts)
    if has_concepts:
        params.add("concept_embed", parameter(merger.concept_features))
    state = AdamState.for_params(params)

    base_features = constant(base_graph.features)
    train_ids = base_graph.splits.train
    val_ids = base_graph.splits.val
    test_ids = base_graph.splits.test

    metrics: list[EpochMetrics] = []
    best_epoch = -1
    best_val = -np.inf
    best_test = float("nan")
    best_snapshot: dict[str, np.ndarray] = params.snapshot()
    best_predictions = np.zeros(0, dtype=np.int64)
    bad_epochs = 0

    def fail(epoch: int, exc: Exception):
        last = metrics[-1] if metrics else None
        if metrics_path is not None:
            write_metrics_csv(metrics, metrics_path)
        detail = (f"last finite epoch {last.epoch}: train_loss="
                  f"{last.train_loss!r}, val_acc={last.val_acc!r}"
                  if last else "no epoch completed")
        return DivergenceError(
            f"non-finite values at epoch {epoch} ({exc}); {detail}",
            last_finite=last, metrics=metrics)

    epoch = 0
    for epoch in range(train_cfg.max_epochs):
        tau = temperature(epoch, train_cfg.anneal_rate, train_cfg.tau_floor,
                          train_cfg.anneal_form)
        aug = merger.view(epoch)
        n_aug = aug.graph.num_nodes
        if train_cfg.architecture == "gcn":
            structure = normalized_adjacency(aug.graph)
        else:
            structure = symmetrized_edges(aug.graph.edges, n_aug,
                                          self_loops=True)
        labels = aug.graph.labels
        if has_concepts:
            feats = concat([base_features, params["concept_embed"]], axis=0)
        else:
            feats = base_features

        try:
            logits = _forward(train_cfg, structure, n_aug, feats, params,
                              active=True, rng=rng_dropout)
            loss = softmax_cross_entropy(logits, labels, train_ids, tau)
            params.zero_grads()
            loss.backward()
            adam_step(params, state, train_cfg.learning_rate,
                      train_cfg.weight_decay)

            if has_concepts:
                eval_feats = concat([base_features, params["concept_embed"]],
                                    axis=0)
            else:
                eval_feats = base_features
            eval_logits = _forward(train_cfg, structure, n_aug, eval_feats,
                                   params, active=False, rng=None)
        except NumericError as exc:
            raise fail(epoch, exc) from exc

        predictions = np.argmax(eval_logits.value, axis=1)
        val_acc = _masked_accuracy(predictions, labels, val_ids)
        test_acc = _masked_accuracy(predictions, labels, test_ids)
        metrics.append(EpochMetrics(epoch, float(loss.value), val_acc,
                                    test_acc, tau))

        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_test = test_acc
            best_snapshot = params.snapshot()
            best_predictions = predictions.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > train_cfg.patience:
                logger.info("early stop at epoch %d (best %d, val %.4f)",
                            epoch, best_epoch, best_val)
                break

    if metrics_path is not None:
        write_metrics_csv(metrics, metrics_path)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, best_snapshot)
    return TrainResult(best_params=best_snapshot, metrics=metrics,
                       best_epoch=best_epoch, best_val_acc=float(best_val),
                       test_acc=float(best_test), epochs_run=len(metrics),
                       predictions=best_predictions)
