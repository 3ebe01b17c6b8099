"""Incongruity detectors.

Two models: a zero-shot threshold on the similarity score, and a small
feed-forward classifier over concatenated L2-normalized text/image
embeddings. The classifier is trained here with explicit analytic
gradients and an AdamW loop; the embedding backbone is an input and is
never updated.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import CONGRUENT, INCONGRUENT, PairSample
from .errors import MissingEmbeddingsError, TrainingDivergedError
from .scoring import thumb_key, title_key
from .store import EmbeddingStore

MODEL_MAGIC = b"MLP1"


@dataclass(frozen=True)
class ThresholdModel:
    """Predict incongruent iff similarity < threshold."""

    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


def derive_threshold(validation_scores: Sequence[tuple[float, str]]) -> ThresholdModel:
    """Midpoint of the two class means, each mean computed separately.

    Averaging class means unweighted keeps the threshold insensitive to
    the 2:1 class imbalance of generated datasets.
    """
    by_label: dict[str, list[float]] = {CONGRUENT: [], INCONGRUENT: []}
    for score, label in validation_scores:
        if label not in by_label:
            raise ValueError(f"bad label {label!r}")
        by_label[label].append(score)
    absent = [label for label, scores in by_label.items() if not scores]
    if absent:
        raise ValueError(f"cannot derive threshold: no {' or '.join(absent)} samples")
    mean_congruent = sum(by_label[CONGRUENT]) / len(by_label[CONGRUENT])
    mean_incongruent = sum(by_label[INCONGRUENT]) / len(by_label[INCONGRUENT])
    return ThresholdModel((mean_congruent + mean_incongruent) / 2.0)


def threshold_predict(model: ThresholdModel, score: float) -> tuple[str, float]:
    """(label, prediction_score) where prediction_score = 1 - similarity.

    A score exactly at the threshold passes as congruent; only strictly
    lower similarity triggers the incongruent label.
    """
    label = INCONGRUENT if score < model.threshold else CONGRUENT
    return label, 1.0 - score


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    # mean of softplus(z) - y*z, the numerically stable BCE form
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return float(np.mean(softplus - y * z))


class MlpModel:
    """Rectifier MLP with a logistic output head.

    layer_dims runs input -> hidden... -> 1; the input width is twice the
    embedding dimension (normalized text and image halves concatenated).
    The forward output is the probability of the incongruent class.
    """

    def __init__(self, layer_dims: Sequence[int], weights=None, biases=None):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or any(d <= 0 for d in layer_dims):
            raise ValueError(f"bad layer dims {layer_dims}")
        if layer_dims[-1] != 1:
            raise ValueError("output layer must have dimension 1")
        if layer_dims[0] % 2 != 0:
            raise ValueError("input layer must be twice the embedding dimension")
        self.layer_dims = layer_dims
        if weights is None:
            self.weights = [
                np.zeros((fan_in, fan_out)) for fan_in, fan_out in zip(layer_dims, layer_dims[1:])
            ]
            self.biases = [np.zeros(fan_out) for fan_out in layer_dims[1:]]
        else:
            self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
            self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
            for w, b, fan_in, fan_out in zip(
                self.weights, self.biases, layer_dims, layer_dims[1:]
            ):
                if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                    raise ValueError(f"parameter shapes do not chain for dims {layer_dims}")
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @classmethod
    def initialize(cls, layer_dims: Sequence[int], seed: int) -> "MlpModel":
        """He-style init (variance 2/fan_in) for the rectifier layers."""
        rng = np.random.default_rng(seed)
        model = cls(layer_dims)
        model.weights = [
            rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)
            for fan_in, fan_out in zip(layer_dims, layer_dims[1:])
        ]
        return model

    @property
    def embedding_dim(self) -> int:
        return self.layer_dims[0] // 2

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Logit output for already-built feature rows (no normalization)."""
        pre, _ = self._forward(features)
        return pre[-1][:, 0]

    def _forward(self, features: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Returns per-layer pre-activations and the post-activation inputs."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.layer_dims[0]:
            raise ValueError(
                f"feature width {x.shape[1]} does not match input layer {self.layer_dims[0]}"
            )
        inputs = [x]
        pre = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = inputs[-1] @ w + b
            pre.append(z)
            if i < len(self.weights) - 1:
                inputs.append(np.maximum(z, 0.0))
        return pre, inputs


def build_pair_features(text_embedding, image_embedding) -> np.ndarray:
    """L2-normalize each embedding and concatenate [text; image]."""
    t = np.asarray(text_embedding, dtype=np.float64)
    v = np.asarray(image_embedding, dtype=np.float64)
    if t.ndim != 1 or v.ndim != 1 or t.shape != v.shape:
        raise ValueError(f"embedding dims differ: {t.shape} vs {v.shape}")
    norm_t, norm_v = np.linalg.norm(t), np.linalg.norm(v)
    if norm_t == 0.0 or norm_v == 0.0:
        raise ValueError("zero-norm embedding")
    return np.concatenate([t / norm_t, v / norm_v])


def forward_features(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Incongruity probabilities for pre-built feature rows."""
    z = model.logits(features)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite activation in forward pass")
    return _sigmoid(z)


def mlp_forward(model: MlpModel, text_embedding, image_embedding) -> float:
    """Probability that the pair is incongruent."""
    t = np.asarray(text_embedding)
    if t.shape[0] != model.embedding_dim:
        raise ValueError(
            f"embedding dim {t.shape[0]} does not match model input {model.layer_dims[0]}/2"
        )
    features = build_pair_features(text_embedding, image_embedding)
    return float(forward_features(model, features[None, :])[0])


def mlp_gradients(
    model: MlpModel, features: np.ndarray, labels: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradients of the mean BCE loss for one batch.

    Returns (weight_grads, bias_grads), ordered like the model layers.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if y.shape[0] != x.shape[0]:
        raise ValueError("features and labels disagree on batch size")
    pre, inputs = model._forward(x)
    n = x.shape[0]
    # dL/dz at the output: (sigmoid(z) - y) / n for mean BCE.
    delta = (_sigmoid(pre[-1]) - y[:, None]) / n
    weight_grads: list[np.ndarray] = [None] * len(model.weights)
    bias_grads: list[np.ndarray] = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        weight_grads[layer] = inputs[layer].T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0.0)
    return weight_grads, bias_grads


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global norm is <= max_norm.

    Returns the pre-clip global norm.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class AdamW:
    """AdamW with decoupled weight decay and bias-corrected moments."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 0.001,
        weight_decay: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p) for p in params]
        self._v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= self.learning_rate * (m_hat / (np.sqrt(v_hat) + self.eps))
            if self.weight_decay:
                p -= self.learning_rate * self.weight_decay * p


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    weight_decay: float = 0.01
    grad_clip_norm: float = 1.0
    max_epochs: int = 100
    early_stop_patience: int = 5
    seed: int = 0
    hidden_dims: tuple[int, ...] = (512, 128)

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "grad_clip_norm", "max_epochs",
                     "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    validation_loss: float


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def samples_to_arrays(
    samples: Sequence[PairSample], store: EmbeddingStore
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve samples to (features, labels); labels are 1 for incongruent."""
    missing = []
    for s in samples:
        if title_key(s.title_record_id) not in store:
            missing.append(title_key(s.title_record_id))
        if thumb_key(s.image_record_id) not in store:
            missing.append(thumb_key(s.image_record_id))
    if missing:
        raise MissingEmbeddingsError(missing)
    features = np.stack(
        [
            build_pair_features(
                store.get(title_key(s.title_record_id)), store.get(thumb_key(s.image_record_id))
            )
            for s in samples
        ]
    )
    labels = np.array([1.0 if s.label == INCONGRUENT else 0.0 for s in samples])
    return features, labels


def train_mlp(
    train_samples: Sequence[PairSample],
    validation_samples: Sequence[PairSample],
    store: EmbeddingStore,
    config: TrainConfig,
) -> tuple[MlpModel, TrainingLog]:
    """Mini-batch AdamW training with early stopping on validation loss.

    Deterministic for a fixed config seed: init, per-epoch shuffles, and
    updates all flow from one seeded generator on a single thread. The
    returned parameters are those of the best-validation epoch.
    """
    if not train_samples or not validation_samples:
        raise ValueError("both splits must be non-empty")
    for name, split in (("train", train_samples), ("validation", validation_samples)):
        labels = {s.label for s in split}
        if labels != {CONGRUENT, INCONGRUENT}:
            raise ValueError(f"{name} split must contain both classes")

    x_train, y_train = samples_to_arrays(train_samples, store)
    x_val, y_val = samples_to_arrays(validation_samples, store)

    layer_dims = [2 * store.dim, *config.hidden_dims, 1]
    model = MlpModel.initialize(layer_dims, seed=config.seed)
    optimizer = AdamW(
        model.parameters(),
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    rng = np.random.default_rng(config.seed + 1)

    log = TrainingLog()
    best_val = math.inf
    best_params: list[np.ndarray] | None = None
    epochs_since_improvement = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        batch_losses = []
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            loss = _bce_from_logits(model.logits(xb), yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch=epoch, batch=batch_no)
            batch_losses.append(loss)
            weight_grads, bias_grads = mlp_gradients(model, xb, yb)
            grads = weight_grads + bias_grads
            clip_gradients(grads, config.grad_clip_norm)
            optimizer.step(grads)

        val_loss = _bce_from_logits(model.logits(x_val), y_val)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(epoch=epoch, batch=-1)
        log.epochs.append(EpochStats(epoch, float(np.mean(batch_losses)), val_loss))

        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in model.parameters()]
            log.best_epoch = epoch
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if epochs_since_improvement >= config.early_stop_patience:
                log.stopped_early = True
                break

    n_weights = len(model.weights)
    model.weights = best_params[:n_weights]
    model.biases = best_params[n_weights:]
    return model, log


def save_mlp(model: MlpModel, path: str | Path, train_config: TrainConfig | None = None) -> None:
    """Header JSON, then parameters as little-endian f32 (weights row-major,
    then bias, per layer)."""
    header = {
        "layer_dims": model.layer_dims,
        "activations": ["relu"] * (len(model.layer_dims) - 2) + ["sigmoid"],
        "train_config": asdict(train_config) if train_config else None,
        "seed": train_config.seed if train_config else None,
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(w.astype("<f4").tobytes())
            fh.write(b.astype("<f4").tobytes())


def load_mlp(path: str | Path) -> tuple[MlpModel, dict]:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not an MLP model file")
    (header_len,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    dims = header["layer_dims"]
    offset = 8 + header_len
    expected = sum(4 * (fan_in * fan_out + fan_out) for fan_in, fan_out in zip(dims, dims[1:]))
    if len(data) - offset != expected:
        raise ValueError(f"{path}: parameter payload does not match layer dims")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        w = np.frombuffer(data, dtype="<f4", count=fan_in * fan_out, offset=offset)
        offset += 4 * fan_in * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        b = np.frombuffer(data, dtype="<f4", count=fan_out, offset=offset)
        offset += 4 * fan_out
        biases.append(b.astype(np.float64))
    if offset != len(data):
        raise ValueError(f"{path}: parameter payload does not match layer dims")
    return MlpModel(dims, weights, biases), header


def save_threshold(model: ThresholdModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"threshold": model.threshold}) + "\n", encoding="utf-8")


def load_threshold(path: str | Path) -> ThresholdModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return ThresholdModel(float(payload["threshold"]))
