"""Huber-loss optimization of the trainable parameters, plus the baseline.

The backbone is frozen, so features are encoded once per record and the
training loop runs entirely on cached feature matrices.  The optimizer is
momentum SGD; gradients are computed analytically by each model's
``backward`` and are finite-difference-checked in the test suite.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLoss
from .model import LinearBaseline, ModelConfig
from .synthworld import png_to_raster


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    learning_rate: float = 1e-3
    huber_delta: float = 10.0
    batch_size: int = 32
    seed: int = 0
    plateau_patience: int = 5
    # interpreted as a fraction of the best validation loss when
    # plateau_relative is set, else as absolute loss units
    plateau_min_delta: float = 0.01
    plateau_relative: bool = True
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.plateau_patience < 1:
            raise ValueError("epochs, batch_size and plateau_patience must be positive")
        if self.learning_rate <= 0 or self.huber_delta <= 0:
            raise ValueError("learning_rate and huber_delta must be positive")
        if self.plateau_min_delta < 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("plateau_min_delta must be >= 0 and momentum in [0, 1)")


@dataclass
class TrainHistory:
    """Per-epoch losses and wall-clock seconds."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def to_csv(self, path=None, include_walltime: bool = False) -> str:
        """CSV rows (epoch, train_loss, val_loss, seconds).

        Wall-clock seconds are inherently non-reproducible, so they are
        written as 0 unless ``include_walltime`` is set; serialized outputs
        stay byte-identical across reruns with the same seed.
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for i, (tr, va, sec) in enumerate(zip(self.train_loss, self.val_loss, self.seconds)):
            writer.writerow([i, f"{tr:.10g}", f"{va:.10g}",
                             f"{sec:.6f}" if include_walltime else "0.000000"])
        text = buffer.getvalue()
        if path is not None:
            from pathlib import Path
            Path(path).write_text(text, encoding="utf-8")
        return text

    @staticmethod
    def from_csv(text: str) -> "TrainHistory":
        history = TrainHistory()
        rows = list(csv.reader(io.StringIO(text)))
        for row in rows[1:]:
            history.train_loss.append(float(row[1]))
            history.val_loss.append(float(row[2]))
            history.seconds.append(float(row[3]))
        return history


def huber_loss(pred, target, delta: float) -> float:
    """Mean over coordinates (and samples) of the Huber penalty."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    residual = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    absr = np.abs(residual)
    per = np.where(absr <= delta, 0.5 * residual * residual, delta * (absr - 0.5 * delta))
    return float(per.mean())


def huber_gradient(residual: np.ndarray, delta: float) -> np.ndarray:
    """d(huber)/d(residual), elementwise: r inside the knee, delta*sign outside."""
    return np.where(np.abs(residual) <= delta, residual, delta * np.sign(residual))


@dataclass(frozen=True)
class FeatureSet:
    """Backbone features and targets for a fixed record list."""

    X: np.ndarray
    Y: np.ndarray
    frame_ids: tuple[str, ...]


def frame_id(record) -> str:
    return f"{record.sequence_id}/t{record.timestamp:.6f}"


def encode_records(backbone, records) -> FeatureSet:
    """Run the frozen backbone once over every record."""
    feats = np.empty((len(records), backbone.config.feature_dim), dtype=np.float64)
    targets = np.empty((len(records), 3), dtype=np.float64)
    ids = []
    for i, record in enumerate(records):
        image = png_to_raster(record.image_ref)
        feats[i] = backbone.encode(image, record.prompt)
        targets[i] = record.target
        ids.append(frame_id(record))
    return FeatureSet(X=feats, Y=targets, frame_ids=tuple(ids))


def detect_plateau(history, patience: int, min_delta: float) -> bool:
    """True iff the best validation loss stopped improving by more than
    ``min_delta`` over the last ``patience`` epochs."""
    if patience < 1:
        raise ValueError("patience must be at least 1")
    values = history.val_loss if isinstance(history, TrainHistory) else list(history)
    if len(values) <= patience:
        return False
    prior_best = min(values[:-patience])
    recent_best = min(values[-patience:])
    return (prior_best - recent_best) <= min_delta


def _validation_loss(model, features: FeatureSet, delta: float) -> float:
    pred = model.predict_from_features(features.X)
    return huber_loss(pred, features.Y, delta)


def train(model, fold, config: TrainConfig, features=None):
    """Mini-batch momentum SGD on the model's trainable parameters.

    ``fold`` is a (train_records, validation_records) pair; ``features``
    may carry their pre-encoded FeatureSets to skip backbone re-runs.
    Stops early on a validation plateau.  Returns (model, TrainHistory).
    """
    train_records, val_records = fold
    if len(train_records) == 0 or len(val_records) == 0:
        raise ValueError("fold sides must be non-empty")
    if features is None:
        train_features = encode_records(model.backbone, train_records)
        val_features = encode_records(model.backbone, val_records)
    else:
        train_features, val_features = features

    params = model.trainable_parameters()
    velocity = {name: np.zeros_like(arr) for name, arr in params.items()}
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 23]))
    history = TrainHistory()
    n = len(train_features.X)
    delta = config.huber_delta

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb = train_features.X[batch]
            yb = train_features.Y[batch]
            out, cache = model.forward_train(xb)
            residual = out - yb
            batch_loss = huber_loss(out, yb, delta)
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(
                    f"loss became non-finite at epoch {epoch}, batch offset {start} "
                    f"(lr={config.learning_rate}, delta={delta})")
            grad_out = huber_gradient(residual, delta) / (residual.size)
            grads = model.backward(cache, grad_out)
            for name, grad in grads.items():
                vel = velocity[name]
                vel *= config.momentum
                vel -= config.learning_rate * grad
                params[name] += vel
            loss_sum += batch_loss * len(batch)
        history.train_loss.append(loss_sum / n)
        history.val_loss.append(_validation_loss(model, val_features, delta))
        history.seconds.append(time.perf_counter() - started)

        best = min(history.val_loss)
        min_delta = config.plateau_min_delta * best if config.plateau_relative \
            else config.plateau_min_delta
        if detect_plateau(history, config.plateau_patience, min_delta):
            break
    return model, history


def train_baseline(fold, config: TrainConfig, model_config: ModelConfig | None = None,
                   features=None):
    """Same loop, but the only trainable parameters are one linear layer."""
    baseline = LinearBaseline(model_config or ModelConfig())
    return train(baseline, fold, config, features=features)


def gradient_check(model, x: np.ndarray, y: np.ndarray, delta: float,
                   step: float = 1e-4) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients,
    per trainable parameter array."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    out, cache = model.forward_train(x)
    grad_out = huber_gradient(out - y, delta) / (out.size)
    analytic = model.backward(cache, grad_out)
    report: dict[str, float] = {}
    for name, arr in model.trainable_parameters().items():
        flat = arr.ravel()
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = huber_loss(model.forward_train(x)[0], y, delta)
            flat[i] = original - step
            minus = huber_loss(model.forward_train(x)[0], y, delta)
            flat[i] = original
            numeric[i] = (plus - minus) / (2.0 * step)
        a = analytic[name].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        report[name] = float(np.max(np.abs(a - numeric) / denom))
    return report
