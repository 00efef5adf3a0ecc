"""Feed-forward (BW, SF) classifier trained from scratch with Adam.

Architecture: flatten -> dense(16, tanh) -> dense(16, tanh) -> dropout(0.5)
-> dense(18, softmax). Inputs are IF vectors in Hz; the model divides them
by its stored ``norm_constant`` (fs/2 by default) before the first layer.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import RNG_ALGORITHM, make_rng
from .config import DEFAULT_FS, N_CLASSES
from .validation import check_labels

LOG_GUARD = 1e-12
MODEL_MAGIC = b"MLP1"
DEFAULT_HIDDEN = (16, 16)


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    dropout_rate: float = 0.5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.adam_epsilon <= 0:
            raise ValueError("learning rate and adam epsilon must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")


@dataclass
class MlpModel:
    """Dense layers as ``(weights[fan_in, fan_out], bias[fan_out])`` pairs."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    norm_constant: float = DEFAULT_FS / 2
    metadata: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1][0].shape[1]

    def copy(self) -> "MlpModel":
        return MlpModel([(w.copy(), b.copy()) for w, b in self.layers],
                        self.norm_constant, json.loads(json.dumps(self.metadata)))

    @classmethod
    def zeros(cls, n_inputs: int = 1024, hidden=DEFAULT_HIDDEN, n_outputs: int = N_CLASSES,
              norm_constant: float = DEFAULT_FS / 2) -> "MlpModel":
        sizes = [n_inputs, *hidden, n_outputs]
        return cls([(np.zeros((a, b)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])], norm_constant)


def init_model(rng: np.random.Generator, n_inputs: int = 1024, hidden=DEFAULT_HIDDEN,
               n_outputs: int = N_CLASSES, norm_constant: float = DEFAULT_FS / 2) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    sizes = [n_inputs, *hidden, n_outputs]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, (fan_in, fan_out)), np.zeros(fan_out)))
    return MlpModel(layers, norm_constant)


def softmax(z) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(p, label: int) -> float:
    p = np.asarray(p, dtype=float)
    if not 0 <= label < p.shape[-1]:
        raise ValueError(f"label {label} outside [0, {p.shape[-1] - 1}]")
    return float(-np.log(p[label] + LOG_GUARD))


def mean_cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(-np.log(p[np.arange(len(y)), y] + LOG_GUARD)))


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for kept ones."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(model: MlpModel, x, mode: str = "infer", dropout_rate: float = 0.5,
            dropout_mask_seed=None):
    """Run the network on normalized inputs.

    Parameters
    ----------
    x : array of shape (n_inputs,) or (n, n_inputs)
        Already divided by ``model.norm_constant``.
    mode : {"infer", "train"}
        ``"train"`` applies inverted dropout after the last hidden layer.
    dropout_mask_seed : int or numpy Generator, optional
        Source of the dropout mask in train mode.

    Returns
    -------
    probs : ndarray
        Class probabilities, same leading shape as ``x``.
    cache : dict
        Intermediate activations for :func:`backward`.
    """
    if mode not in ("infer", "train"):
        raise ValueError(f"mode must be 'infer' or 'train', got {mode!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != model.n_inputs:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.n_inputs}")

    activations = [x]
    h = x
    for w, b in model.layers[:-1]:
        h = np.tanh(h @ w + b)
        activations.append(h)
    mask = None
    if mode == "train" and dropout_rate > 0:
        rng = dropout_mask_seed if isinstance(dropout_mask_seed, np.random.Generator) \
            else make_rng(0 if dropout_mask_seed is None else dropout_mask_seed)
        mask = dropout_mask(rng, h.shape, dropout_rate)
        h = h * mask
    w_out, b_out = model.layers[-1]
    probs = softmax(h @ w_out + b_out)
    cache = {"activations": activations, "mask": mask, "dropped": h, "probs": probs}
    return (probs[0] if single else probs), cache


def backward(model: MlpModel, cache: dict, y) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the mean guarded cross-entropy w.r.t. every layer."""
    probs = cache["probs"]
    y = np.asarray(y).reshape(-1)
    n = len(y)
    rows = np.arange(n)
    p_true = probs[rows, y]
    # exact derivative of -log(p_y + guard) through the softmax
    delta = probs.copy()
    delta[rows, y] -= 1.0
    delta *= (p_true / (p_true + LOG_GUARD))[:, None] / n

    activations = cache["activations"]
    grads = [None] * len(model.layers)
    grads[-1] = (cache["dropped"].T @ delta, delta.sum(axis=0))
    upstream = delta @ model.layers[-1][0].T
    if cache["mask"] is not None:
        upstream = upstream * cache["mask"]
    for i in range(len(model.layers) - 2, -1, -1):
        h = activations[i + 1]
        dz = upstream * (1.0 - h * h)
        grads[i] = (activations[i].T @ dz, dz.sum(axis=0))
        if i:
            upstream = dz @ model.layers[i][0].T
    return grads


def loss_and_grads(model: MlpModel, x, y, mode: str = "infer", dropout_rate: float = 0.5,
                   dropout_mask_seed=None):
    probs, cache = forward(model, np.atleast_2d(x), mode, dropout_rate, dropout_mask_seed)
    y = np.asarray(y).reshape(-1)
    return mean_cross_entropy(probs, y), backward(model, cache, y)


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def train(features, labels, cfg: TrainConfig | None = None, norm_constant: float = DEFAULT_FS / 2,
          hidden=DEFAULT_HIDDEN, verbose: bool = False):
    """Fit a fresh model with mini-batch Adam on mean cross-entropy.

    ``features`` are raw IF vectors in Hz. Each epoch visits a seeded
    permutation of the data, keeping the last partial batch. The
    final-epoch weights are returned with a history of per-epoch training
    loss and accuracy, both measured in inference mode.
    """
    cfg = cfg or TrainConfig()
    X = check_array(features, dtype=np.float64)
    y = check_labels(labels, N_CLASSES)
    if len(y) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {len(y)} labels")
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    Xn = X / norm_constant

    rng = make_rng(cfg.seed)
    model = init_model(rng, X.shape[1], hidden, N_CLASSES, norm_constant)
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers]
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.learning_rate
    history = {"loss": [], "accuracy": []}
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, Xn[idx], y[idx], "train", cfg.dropout_rate, rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, step {step}")
            step += 1
            corr1 = 1 - b1 ** step
            corr2 = 1 - b2 ** step
            for i, ((w, b), (gw, gb)) in enumerate(zip(model.layers, grads)):
                for j, (param, g) in enumerate(((w, gw), (b, gb))):
                    m[i][j][...] = b1 * m[i][j] + (1 - b1) * g
                    v[i][j][...] = b2 * v[i][j] + (1 - b2) * g * g
                    param -= lr * (m[i][j] / corr1) / (np.sqrt(v[i][j] / corr2) + eps)
        probs, _ = forward(model, Xn)
        history["loss"].append(mean_cross_entropy(probs, y))
        history["accuracy"].append(float(np.mean(np.argmax(probs, axis=1) == y)))
        if verbose:
            print(f"epoch {epoch + 1}/{cfg.epochs} loss={history['loss'][-1]:.4f} "
                  f"acc={history['accuracy'][-1]:.4f}")

    model.metadata = {
        "train_config": asdict(cfg),
        "hidden": list(hidden),
        "dataset_digest": _digest(X, y),
        "n_examples": int(len(y)),
        "rng": RNG_ALGORITHM,
    }
    return model, history


def predict_proba(model: MlpModel, features) -> np.ndarray:
    """Soft decision over all classes for raw-Hz IF vectors, shape (n, n_classes)."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[-1] != model.n_inputs:
        raise ValueError(f"features have {X.shape[-1]} values, model expects {model.n_inputs}")
    probs, _ = forward(model, X / model.norm_constant, "infer")
    return probs


def classify(model: MlpModel, features):
    """Return ``(class_indices, probabilities)`` for a single vector or a batch.

    Ties in the argmax resolve to the lowest class index.
    """
    features = np.asarray(features, dtype=float)
    probs = predict_proba(model, features)
    classes = np.argmax(probs, axis=1)
    if features.ndim == 1:
        return int(classes[0]), probs[0]
    return classes, probs


# --- model file --------------------------------------------------------------

def encode_model(model: MlpModel) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<I", len(model.layers))]
    for w, b in model.layers:
        rows, cols = w.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    meta = json.dumps(model.metadata, sort_keys=True).encode()
    parts.append(struct.pack("<d", model.norm_constant))
    parts.append(struct.pack("<I", len(meta)) + meta)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_model(data: bytes, source: str = "<bytes>") -> MlpModel:
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{source}: not an MLP1 model file (magic {data[:4]!r})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError(f"{source}: CRC32 mismatch, file is corrupted or truncated")

    pos = 4

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise ModelFormatError(f"{source}: truncated while reading {what}")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    (n_layers,) = struct.unpack("<I", take(4, "layer count"))
    if n_layers == 0:
        raise ModelFormatError(f"{source}: model declares no layers")
    layers = []
    prev_cols = None
    for i in range(n_layers):
        rows, cols = struct.unpack("<II", take(8, f"layer {i + 1} shape"))
        if prev_cols is not None and rows != prev_cols:
            raise ModelFormatError(
                f"{source}: layer {i + 1} declares {rows} inputs but layer {i} has {prev_cols} outputs")
        if rows == 0 or cols == 0:
            raise ModelFormatError(f"{source}: layer {i + 1} has empty shape {rows}x{cols}")
        w = np.frombuffer(take(8 * rows * cols, f"layer {i + 1} weights"), "<f8").reshape(rows, cols)
        b = np.frombuffer(take(8 * cols, f"layer {i + 1} biases"), "<f8")
        layers.append((w.astype(np.float64), b.astype(np.float64)))
        prev_cols = cols
    (norm_constant,) = struct.unpack("<d", take(8, "norm constant"))
    (meta_len,) = struct.unpack("<I", take(4, "metadata length"))
    meta = take(meta_len, "metadata")
    if pos != len(body):
        raise ModelFormatError(f"{source}: {len(body) - pos} trailing bytes after metadata")
    try:
        metadata = json.loads(meta.decode()) if meta else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{source}: unreadable metadata ({exc})") from None
    for i, (w, b) in enumerate(layers):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(f"{source}: layer {i + 1} holds non-finite parameters")
    return MlpModel(layers, norm_constant, metadata)


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> MlpModel:
    path = Path(path)
    return decode_model(path.read_bytes(), str(path))


class ChirpClassifier(ClassifierMixin, BaseEstimator):
    """sklearn-compatible wrapper around :func:`train` / :func:`classify`.

    ``X`` holds raw IF vectors in Hz (e.g. the output of
    :class:`~chirpsense.features.IFTransformer`); ``y`` holds class indices.
    ``classes_`` always spans all 18 configurations.
    """

    def __init__(self, learning_rate=1e-3, batch_size=32, epochs=100, dropout_rate=0.5,
                 seed=0, hidden=DEFAULT_HIDDEN, norm_constant=DEFAULT_FS / 2, verbose=False):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.seed = seed
        self.hidden = hidden
        self.norm_constant = norm_constant
        self.verbose = verbose

    def fit(self, X, y):
        cfg = TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.dropout_rate, self.seed)
        self.model_, self.history_ = train(X, y, cfg, self.norm_constant, tuple(self.hidden), self.verbose)
        self.classes_ = np.arange(N_CLASSES)
        self.n_features_in_ = self.model_.n_inputs
        return self

    @classmethod
    def from_model(cls, model: MlpModel) -> "ChirpClassifier":
        cfg = model.metadata.get("train_config", {})
        est = cls(**{k: cfg[k] for k in ("learning_rate", "batch_size", "epochs", "dropout_rate", "seed")
                     if k in cfg},
                  hidden=tuple(w.shape[1] for w, _ in model.layers[:-1]),
                  norm_constant=model.norm_constant)
        est.model_ = model
        est.history_ = {}
        est.classes_ = np.arange(model.n_outputs)
        est.n_features_in_ = model.n_inputs
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return predict_proba(self.model_, X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)
