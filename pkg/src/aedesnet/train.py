"""Training loop: binary cross-entropy, Adam, deterministic mini-batches.

Epoch shuffles come from per-epoch rng substreams, so the batch order for a
given seed never depends on how many times the generator was consumed
elsewhere.  Loss math runs in float64 regardless of model precision; the
gradient handed back to the network is cast to the model dtype.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    TrainingDiverged,
)
from .model import Model
from .preprocess import (
    ZCA_DEFAULT_DIM_CAP,
    ZCA_DEFAULT_EPSILON,
    PreprocessStats,
    apply_preprocess,
    fit_channel_stats,
    normalize,
    zca_fit,
)
from .rng import Rng

SCORE_CLAMP = 1e-7
DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    precision: str = "float32"
    conv_dropout: float = 0.2
    dense_dropout: float = 0.5
    split_ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)
    use_zca: bool = False
    zca_epsilon: float = ZCA_DEFAULT_EPSILON
    zca_dim_cap: int = ZCA_DEFAULT_DIM_CAP

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(
                f"adam betas must lie in (0, 1), got beta1={self.beta1} beta2={self.beta2}"
            )
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be 'float32' or 'float64', got {self.precision!r}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    model: Model
    metrics: list[EpochMetrics] = field(default_factory=list)
    stats: PreprocessStats | None = None


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the scores.

    Scores are clamped to [1e-7, 1-1e-7] before both the loss and the
    gradient, so a saturated sigmoid never produces log(0).
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise DimensionError(
            f"scores shape {scores.shape} does not match labels shape {labels.shape}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    n = scores.size
    p = np.clip(scores.astype(np.float64), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    y = labels.astype(np.float64)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    grad = (p - y) / (p * (1.0 - p) * n)
    return loss, grad.astype(scores.dtype)


class Adam:
    """Adam with bias correction; moment state lives with the instance and
    parameter updates happen in place."""

    def __init__(self, params: list[np.ndarray], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self.m):
            raise DimensionError(
                f"optimizer tracks {len(self.m)} tensors, got {len(params)}"
            )
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape or p.shape != m.shape:
                raise DimensionError(
                    f"param shape {p.shape} does not match grad shape {g.shape}"
                )
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def fit_preprocess_stats(images: np.ndarray, config: TrainConfig) -> PreprocessStats:
    """Channel statistics (and, when enabled, the whitening transform)
    fitted on the training split only."""
    channels = fit_channel_stats(images)
    zca = None
    if config.use_zca:
        d = int(np.prod(images.shape[1:]))
        if d > config.zca_dim_cap:
            raise ConfigError(
                f"whitening needs a {d}x{d} matrix but the dimension cap is "
                f"{config.zca_dim_cap}; use smaller images or raise zca_dim_cap"
            )
        normalized = normalize(images, channels)
        zca = zca_fit(normalized.reshape(len(images), -1), epsilon=config.zca_epsilon)
        zca = zca.astype(images.dtype)
    return PreprocessStats(channels=channels, zca=zca)


def _epoch_eval(model: Model, x: np.ndarray, labels: np.ndarray,
                batch_size: int) -> tuple[float, float]:
    """Inference-mode loss and accuracy over a preprocessed set."""
    losses = []
    correct = 0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        yb = labels[start:start + batch_size]
        scores = model.forward(xb, training=False).reshape(-1)
        loss, _ = bce_loss(scores, yb)
        losses.append(loss * len(xb))
        correct += int(((scores >= DECISION_THRESHOLD).astype(np.int64) == yb).sum())
    return sum(losses) / len(x), correct / len(x)


def train(model: Model, dataset: Dataset, config: TrainConfig,
          stats: PreprocessStats | None = None,
          progress=None) -> TrainResult:
    """Run the full training loop; returns the trained model, per-epoch
    metrics, and the preprocessing statistics that inference must reuse.

    progress, if given, is called with each EpochMetrics as it completes.
    """
    config.validate()
    train_idx = dataset.split.train
    val_idx = dataset.split.val
    if len(train_idx) == 0:
        raise ConfigError("training split is empty")
    if len(val_idx) == 0:
        raise ConfigError("validation split is empty")

    train_labels = np.array([dataset.samples[i].label for i in train_idx], dtype=np.int64)
    val_labels = np.array([dataset.samples[i].label for i in val_idx], dtype=np.int64)
    if set(train_labels.tolist()) != {0, 1}:
        raise DataError("training split must contain both classes")

    train_images = np.stack([dataset.samples[i].image for i in train_idx])
    val_images = np.stack([dataset.samples[i].image for i in val_idx])
    if stats is None:
        stats = fit_preprocess_stats(train_images, config)

    x_train = apply_preprocess(train_images, stats).astype(model.dtype)
    x_val = apply_preprocess(val_images, stats).astype(model.dtype)

    rng = Rng(config.seed)
    optimizer = Adam(model.params(), learning_rate=config.learning_rate,
                     beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)
    metrics: list[EpochMetrics] = []
    n = len(train_idx)
    for epoch in range(1, config.epochs + 1):
        order = rng.substream("shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            chosen = order[start:start + config.batch_size]
            xb = x_train[chosen]
            yb = train_labels[chosen]
            scores = model.forward(xb, training=True).reshape(-1)
            loss, grad = bce_loss(scores, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            model.backward(grad.reshape(-1, 1))
            optimizer.step(model.params(), model.grads())
            epoch_loss += loss * len(xb)
            epoch_correct += int(((scores >= DECISION_THRESHOLD).astype(np.int64) == yb).sum())
        val_loss, val_acc = _epoch_eval(model, x_val, val_labels, config.batch_size)
        entry = EpochMetrics(
            epoch=epoch,
            train_loss=epoch_loss / n,
            acc=epoch_correct / n,
            val_loss=val_loss,
            val_acc=val_acc,
        )
        metrics.append(entry)
        if progress is not None:
            progress(entry)
    return TrainResult(model=model, metrics=metrics, stats=stats)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_from_scores(scores: np.ndarray, labels: np.ndarray) -> EvalResult:
    """Threshold at 0.5 (ties to class 1) and count the four outcomes."""
    scores = np.asarray(scores).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size == 0:
        raise ContractError("cannot evaluate an empty sample set")
    if scores.shape != labels.shape:
        raise DimensionError(
            f"scores shape {scores.shape} does not match labels shape {labels.shape}"
        )
    preds = (scores >= DECISION_THRESHOLD).astype(np.int64)
    tp = int(((preds == 1) & (labels == 1)).sum())
    tn = int(((preds == 0) & (labels == 0)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    return EvalResult(accuracy=(tp + tn) / scores.size, tp=tp, tn=tn, fp=fp, fn=fn)


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray,
             stats: PreprocessStats, batch_size: int = 32) -> EvalResult:
    """Accuracy and confusion counts on raw [0,1] images."""
    if len(images) == 0:
        raise ContractError("cannot evaluate an empty sample set")
    x = apply_preprocess(images, stats).astype(model.dtype)
    scores = np.concatenate([
        model.forward(x[s:s + batch_size], training=False).reshape(-1)
        for s in range(0, len(x), batch_size)
    ])
    return confusion_from_scores(scores, np.asarray(labels))


def metrics_to_csv(metrics: list[EpochMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "acc", "val_loss", "val_acc"])
    for m in metrics:
        writer.writerow([m.epoch, repr(m.train_loss), repr(m.acc),
                         repr(m.val_loss), repr(m.val_acc)])
    return buf.getvalue()


def metrics_to_json(metrics: list[EpochMetrics]) -> str:
    return json.dumps([asdict(m) for m in metrics], indent=2, sort_keys=True) + "\n"
