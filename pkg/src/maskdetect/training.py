"""Adam optimization, the two-phase fine-tuning schedule, the seven-head
sweep, and evaluation with epoch logging.

A run is a pure function of (seed, data, config): shuffling, augmentation
and dropout all draw from streams derived from the run seed, so repeating
a run reproduces every parameter bit and every logged number except
``wall_seconds``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .checkpoint import load_into
from .data import AugmentConfig, DatasetIndex, batches
from .errors import ConfigError, UsageError
from .metrics import ClassReport, ConfusionMatrix, classification_report, confusion
from .nn import BackboneConfig, HeadConfig, Model, build_model
from .rng import SplitMix64

__all__ = [
    "Adam",
    "TrainConfig",
    "EpochLog",
    "TrainResult",
    "EvalResult",
    "SweepRow",
    "SweepResult",
    "SWEEP_HEADS",
    "select_best",
    "train_epoch",
    "two_phase_train",
    "evaluate",
    "sweep",
    "pretrain_backbone",
    "capture_state",
    "restore_state",
    "write_logs",
    "read_logs",
    "write_sweep_csv",
    "write_sweep_json",
]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam over the parameters that are trainable at construction time.

    Moments are held in float64 and exist only for the tracked parameters;
    frozen parameters are never touched.  ``t`` advances by exactly one per
    step.
    """

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        self.params = [p for p in params if p.trainable]
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.t = 0
        self.m = {p.name: np.zeros(p.data.shape, dtype=np.float64) for p in self.params}
        self.v = {p.name: np.zeros(p.data.shape, dtype=np.float64) for p in self.params}

    def step(self) -> None:
        """One bias-corrected update from the gradients currently held."""
        self.t += 1
        for p in self.params:
            if p.grad is None:
                raise UsageError(f"parameter {p.name!r} has no gradient to step with")
            g = p.grad.astype(np.float64)
            m = self.m[p.name]
            v = self.v[p.name]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            p.tensor.data -= update.astype(p.tensor.data.dtype)


# ---------------------------------------------------------------------------
# configuration and logs
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Knobs for one two-phase run.

    Phase 1 trains the head against a frozen feature extractor; phase 2
    unfreezes the last ``unfreeze_last_k`` backbone blocks and continues
    at the smaller rate.
    """

    epochs_phase1: int = 40
    epochs_phase2: int = 20
    unfreeze_last_k: int = 2
    lr_phase1: float = 1e-3
    lr_phase2: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)

    def validate(self) -> None:
        if self.epochs_phase1 < 0 or self.epochs_phase2 < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.unfreeze_last_k < 0:
            raise ConfigError(f"unfreeze_last_k must be >= 0, got {self.unfreeze_last_k}")
        if self.lr_phase1 < 0 or self.lr_phase2 < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def total_epochs(self) -> int:
        return self.epochs_phase1 + self.epochs_phase2

    def to_dict(self) -> dict:
        return {
            "epochs_phase1": self.epochs_phase1,
            "epochs_phase2": self.epochs_phase2,
            "unfreeze_last_k": self.unfreeze_last_k,
            "lr_phase1": self.lr_phase1,
            "lr_phase2": self.lr_phase2,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "augment": None if self.augment is None else self.augment.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if kwargs.get("augment") is not None:
            kwargs["augment"] = AugmentConfig.from_dict(kwargs["augment"])
        config = cls(**kwargs)
        config.validate()
        return config


@dataclass
class EpochLog:
    epoch: int          # 1-based, global across both phases
    phase: int          # 1 or 2
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_seconds: float


@dataclass
class TrainResult:
    model: Model
    logs: list[EpochLog]
    best_state: dict            # parameter/buffer arrays at the best-val epoch
    best_val_acc: float
    best_epoch: int


@dataclass
class EvalResult:
    report: ClassReport
    cm: ConfusionMatrix
    loss: float
    pred: list[int]
    truth: list[int]

    @property
    def accuracy(self) -> float:
        return self.report.accuracy


def capture_state(model: Model) -> dict:
    """Copies of every parameter and buffer array, keyed by name."""
    state = {p.name: p.data.copy() for p in model.parameters()}
    for name, buf in model.buffers():
        state[name] = buf.copy()
    return state


def restore_state(model: Model, state: dict) -> None:
    """Write captured arrays back (in place; trainable flags untouched)."""
    for p in model.parameters():
        p.tensor.data[...] = state[p.name]
    for name, buf in model.buffers():
        buf[...] = state[name]


# ---------------------------------------------------------------------------
# epoch loops
# ---------------------------------------------------------------------------


def train_epoch(model: Model, batch_stream, optimizer: Adam,
                rng: SplitMix64 | None) -> tuple[float, float]:
    """One optimization pass; returns (mean loss, accuracy) over the epoch."""
    total_loss = 0.0
    correct = 0
    seen = 0
    for x, y in batch_stream:
        model.zero_grad()
        logits = model.forward_logits(x, mode="train", rng=rng)
        loss = T.softmax_cross_entropy(logits, y)
        loss.backward()
        optimizer.step()
        n = x.shape[0]
        total_loss += float(loss.item()) * n
        correct += int(np.sum(np.argmax(logits.data, axis=1) == np.argmax(y.data, axis=1)))
        seen += n
    if seen == 0:
        raise UsageError("train_epoch got an empty batch stream")
    return total_loss / seen, correct / seen


def evaluate(model: Model, batch_stream) -> EvalResult:
    """Deterministic eval pass: loss, confusion matrix and the full report.

    The prediction for a row is the argmax of its softmax output; exact
    ties resolve to the lowest class index.
    """
    preds: list[int] = []
    truths: list[int] = []
    total_loss = 0.0
    seen = 0
    for x, y in batch_stream:
        logits = model.forward_logits(x, mode="eval")
        loss = T.softmax_cross_entropy(logits, y)
        probs = T.softmax(logits)
        preds.extend(int(k) for k in np.argmax(probs.data, axis=1))
        truths.extend(int(k) for k in np.argmax(y.data, axis=1))
        n = x.shape[0]
        total_loss += float(loss.item()) * n
        seen += n
    if seen == 0:
        raise UsageError("evaluate got an empty batch stream")
    cm = confusion(preds, truths)
    return EvalResult(
        report=classification_report(cm),
        cm=cm,
        loss=total_loss / seen,
        pred=preds,
        truth=truths,
    )


# ---------------------------------------------------------------------------
# two-phase schedule
# ---------------------------------------------------------------------------


def _run_phase(model, index, config, phase, rng, dropout_rng, logs, best, start_epoch):
    size = model.backbone_config.input_size
    lr = config.lr_phase1 if phase == 1 else config.lr_phase2
    epochs = config.epochs_phase1 if phase == 1 else config.epochs_phase2
    optimizer = Adam(model.trainable_parameters(), lr)
    for k in range(epochs):
        epoch = start_epoch + k
        started = time.perf_counter()
        train_stream = batches(
            index, "train", config.batch_size, shuffle=True,
            augment_config=config.augment, rng=rng, image_size=size, epoch=epoch,
        )
        train_loss, train_acc = train_epoch(model, train_stream, optimizer, dropout_rng)
        val = evaluate(
            model, batches(index, "val", config.batch_size, False, image_size=size)
        )
        logs.append(EpochLog(
            epoch=epoch,
            phase=phase,
            train_loss=train_loss,
            train_acc=train_acc,
            val_loss=val.loss,
            val_acc=val.accuracy,
            wall_seconds=time.perf_counter() - started,
        ))
        if val.accuracy > best["acc"]:
            best["acc"] = val.accuracy
            best["epoch"] = epoch
            best["state"] = capture_state(model)
    return start_epoch + epochs


def two_phase_train(model: Model, index: DatasetIndex,
                    config: TrainConfig) -> TrainResult:
    """Freeze the backbone and train the head, then unfreeze the last k
    blocks and fine-tune at the smaller rate.

    The model should already carry useful backbone weights (a pretrained
    checkpoint) — that is what phase 1's freezing preserves.  Returns the
    final model, per-epoch logs tagged by phase, and a snapshot of the
    best-validation-accuracy state.
    """
    config.validate()
    num_blocks = model.backbone_config.num_blocks
    if config.unfreeze_last_k > num_blocks:
        raise ConfigError(
            f"unfreeze_last_k={config.unfreeze_last_k} exceeds the "
            f"{num_blocks} backbone blocks"
        )
    rng = SplitMix64(config.seed)
    dropout_rng = rng.derive("dropout")
    logs: list[EpochLog] = []
    best = {"acc": -1.0, "epoch": 0, "state": None}

    model.set_trainable("backbone", False)
    next_epoch = _run_phase(model, index, config, 1, rng, dropout_rng, logs, best, 1)

    for b in range(num_blocks - config.unfreeze_last_k + 1, num_blocks + 1):
        model.set_trainable(f"backbone.block{b}", True)
    _run_phase(model, index, config, 2, rng, dropout_rng, logs, best, next_epoch)

    if best["state"] is None:  # no epoch ran a validation pass
        best["state"] = capture_state(model)
        best["acc"] = 0.0
    return TrainResult(
        model=model,
        logs=logs,
        best_state=best["state"],
        best_val_acc=best["acc"],
        best_epoch=best["epoch"],
    )


def pretrain_backbone(index: DatasetIndex, backbone_config: BackboneConfig,
                      seed: int = 0, epochs: int = 3, batch_size: int = 32,
                      lr: float = 1e-3) -> Model:
    """Train a small-headed model end-to-end to give the backbone useful
    weights — the desk-scale stand-in for a published pretrained network.

    The returned model's backbone can be adopted by any head via
    ``load_into(..., prefix="backbone.")`` on its saved checkpoint.
    """
    model = build_model(
        backbone_config,
        HeadConfig(hidden_units=32, hidden_layers=1, dropout_rate=0.0),
        seed=seed,
    )
    rng = SplitMix64(seed).derive("pretrain")
    dropout_rng = rng.derive("dropout")
    optimizer = Adam(model.trainable_parameters(), lr)
    size = backbone_config.input_size
    for epoch in range(1, epochs + 1):
        stream = batches(index, "train", batch_size, shuffle=True,
                         rng=rng, image_size=size, epoch=epoch)
        train_epoch(model, stream, optimizer, dropout_rng)
    return model


# ---------------------------------------------------------------------------
# head sweep
# ---------------------------------------------------------------------------

# (hidden units, hidden layers), in the published comparison order
SWEEP_HEADS: tuple[tuple[int, int], ...] = (
    (32, 1), (32, 2), (64, 1), (64, 2), (128, 1), (128, 2), (128, 3),
)


@dataclass
class SweepRow:
    neurons: int
    hidden_layers: int
    train_acc: float
    val_acc: float
    train_loss: float
    val_loss: float
    image_size: int
    epochs: int
    num_params: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_index: int
    logs: dict[str, list[EpochLog]]   # "{neurons}x{layers}" -> per-epoch logs

    @property
    def best_row(self) -> SweepRow:
        return self.rows[self.best_index]


def sweep(index: DatasetIndex, backbone_config: BackboneConfig,
          base_config: TrainConfig, backbone_checkpoint=None) -> SweepResult:
    """Run the seven head configurations under identical data and seed.

    Each run builds a fresh model (optionally adopting backbone weights
    from ``backbone_checkpoint``), trains with the shared config, and is
    scored by its final-epoch metrics.  The best row has the highest
    validation accuracy; ties go to the smaller parameter count.
    """
    base_config.validate()
    rows: list[SweepRow] = []
    logs: dict[str, list[EpochLog]] = {}
    for neurons, layers in SWEEP_HEADS:
        model = build_model(
            backbone_config,
            HeadConfig(hidden_units=neurons, hidden_layers=layers),
            seed=base_config.seed,
        )
        if backbone_checkpoint is not None:
            load_into(model, backbone_checkpoint, prefix="backbone.")
        result = two_phase_train(model, index, replace(base_config))
        last = result.logs[-1]
        rows.append(SweepRow(
            neurons=neurons,
            hidden_layers=layers,
            train_acc=last.train_acc,
            val_acc=last.val_acc,
            train_loss=last.train_loss,
            val_loss=last.val_loss,
            image_size=backbone_config.input_size,
            epochs=base_config.total_epochs,
            num_params=model.num_parameters(),
        ))
        logs[f"{neurons}x{layers}"] = result.logs
    return SweepResult(rows=rows, best_index=select_best(rows), logs=logs)


def select_best(rows: list[SweepRow]) -> int:
    """Index of the winning row: highest val accuracy, ties to the row with
    fewer parameters, remaining ties to the earlier configuration."""
    best = 0
    for k in range(1, len(rows)):
        incumbent, challenger = rows[best], rows[k]
        if challenger.val_acc > incumbent.val_acc or (
            challenger.val_acc == incumbent.val_acc
            and challenger.num_params < incumbent.num_params
        ):
            best = k
    return best


# ---------------------------------------------------------------------------
# log and sweep serialization
# ---------------------------------------------------------------------------

_LOG_FIELDS = ("epoch", "phase", "train_loss", "train_acc",
               "val_loss", "val_acc", "wall_seconds")


def write_logs(logs: list[EpochLog], path) -> None:
    """Per-epoch CSV with one header line and full-precision values."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_FIELDS)
        for log in logs:
            writer.writerow([getattr(log, f) for f in _LOG_FIELDS])


def read_logs(path) -> list[EpochLog]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            out.append(EpochLog(
                epoch=int(row["epoch"]),
                phase=int(row["phase"]),
                train_loss=float(row["train_loss"]),
                train_acc=float(row["train_acc"]),
                val_loss=float(row["val_loss"]),
                val_acc=float(row["val_acc"]),
                wall_seconds=float(row["wall_seconds"]),
            ))
    return out


_SWEEP_FIELDS = ("neurons", "hidden_layers", "train_acc", "val_acc",
                 "train_loss", "val_loss", "image_size", "epochs", "num_params")


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SWEEP_FIELDS)
        for row in result.rows:
            writer.writerow([getattr(row, f) for f in _SWEEP_FIELDS])


def write_sweep_json(result: SweepResult, path) -> None:
    doc = {
        "rows": [
            {f: getattr(row, f) for f in _SWEEP_FIELDS} for row in result.rows
        ],
        "best": {
            "neurons": result.best_row.neurons,
            "hidden_layers": result.best_row.hidden_layers,
            "val_acc": result.best_row.val_acc,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
