"""Toy CNN classifier trained from scratch in numpy.

Architecture: 3x3 conv with 8 channels, ReLU, 2x average pooling, then a
dense layer expressed as a valid convolution covering the pooled map.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import InvalidParameterError, ShapeError, check_int, check_positive
from .layers import LayerSpec, forward

__all__ = [
    "Dataset",
    "init_toy_cnn",
    "train_toy_cnn",
    "predict_logits",
    "evaluate_classifier",
    "confusion_matrix",
    "ToyCNNClassifier",
]

CONV_CHANNELS = 8
CONV_SIZE = 3
POOL = 2


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    n_classes: int = 10
    split: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=float)
        labels = np.asarray(self.labels).astype(np.int64)
        if images.ndim == 3:
            images = images[:, None]
        if images.ndim != 4:
            raise ShapeError(f"images must be (n, H, W) or (n, C, H, W), got {images.shape}")
        if len(images) != len(labels):
            raise ShapeError(f"{len(images)} images but {len(labels)} labels")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise InvalidParameterError("image values must lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise InvalidParameterError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def subset(self, count, split=None):
        return Dataset(self.images[:count], self.labels[:count], self.n_classes,
                       split or self.split, dict(self.meta))

    @classmethod
    def mnist(cls, split="train", limit=None, root=None):
        from .idx import load_mnist

        images, labels = load_mnist(split, root=root, limit=limit)
        return cls(images, labels, 10, split, {"source": "mnist"})


def init_toy_cnn(input_shape, n_classes=10, seed=0):
    """He-initialized weights for the fixed toy architecture."""
    channels, height, width = input_shape
    if min(height, width) < CONV_SIZE + POOL - 1:
        raise ShapeError(f"input {height}x{width} is too small for the toy network")
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / (channels * CONV_SIZE**2)),
                    (CONV_CHANNELS, channels, CONV_SIZE, CONV_SIZE))
    pooled = (height - CONV_SIZE + 1) // POOL
    if (height - CONV_SIZE + 1) // POOL != (width - CONV_SIZE + 1) // POOL:
        raise ShapeError("the dense layer needs a square pooled map")
    fan_in = CONV_CHANNELS * pooled**2
    w2 = rng.normal(0.0, np.sqrt(1.0 / fan_in), (n_classes, CONV_CHANNELS, pooled, pooled))
    return [
        LayerSpec(w1, np.zeros(CONV_CHANNELS), activation="relu", pool=POOL),
        LayerSpec(w2, np.zeros(n_classes)),
    ]


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _train_step(params, x, y, lr):
    w1, b1, w2, b2 = params
    n = len(x)
    win = sliding_window_view(x, (CONV_SIZE, CONV_SIZE), axis=(2, 3))
    z1 = np.einsum("ncijkl,ockl->noij", win, w1) + b1[None, :, None, None]
    a1 = np.maximum(z1, 0.0)
    h, w = a1.shape[2] // POOL, a1.shape[3] // POOL
    cropped = a1[:, :, : h * POOL, : w * POOL]
    p = cropped.reshape(n, CONV_CHANNELS, h, POOL, w, POOL).mean(axis=(3, 5))
    logits = np.einsum("ncij,kcij->nk", p, w2) + b2

    prob = _softmax(logits)
    loss = -np.mean(np.log(prob[np.arange(n), y] + 1e-300))
    dlogits = prob
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    dw2 = np.einsum("nk,ncij->kcij", dlogits, p)
    db2 = dlogits.sum(axis=0)
    dp = np.einsum("nk,kcij->ncij", dlogits, w2)
    da1 = np.zeros_like(a1)
    da1[:, :, : h * POOL, : w * POOL] = np.repeat(np.repeat(dp, POOL, axis=2), POOL, axis=3) / POOL**2
    dz1 = da1 * (z1 > 0)
    dw1 = np.einsum("ncijkl,noij->ockl", win, dz1)
    db1 = dz1.sum(axis=(0, 2, 3))

    for param, grad in zip(params, (dw1, db1, dw2, db2)):
        param -= lr * grad
    return loss


def train_toy_cnn(train, epochs=8, learning_rate=0.3, seed=0, batch_size=32, lr_decay=0.7,
                  layers=None):
    """Minibatch SGD with softmax cross-entropy; deterministic for a fixed seed.

    The step size is ``learning_rate * lr_decay**epoch``.

    Returns the trained ``LayerSpec`` stack.  With ``epochs=0`` the initial
    (or given) weights come back unchanged.
    """
    if len(train) == 0:
        raise ShapeError("training set is empty")
    epochs = check_int(epochs, "epochs", minimum=0)
    check_positive(learning_rate, "learning_rate")
    batch_size = check_int(batch_size, "batch_size", minimum=1)
    if layers is None:
        layers = init_toy_cnn(train.images.shape[1:], train.n_classes, seed)
    if epochs == 0:
        return layers
    conv, dense = layers
    params = [conv.weights.copy(), conv.bias.copy(), dense.weights.copy(), dense.bias.copy()]
    rng = np.random.default_rng([seed, 1])
    for epoch in range(epochs):
        step = learning_rate * lr_decay**epoch
        order = rng.permutation(len(train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            _train_step(params, train.images[idx], train.labels[idx], step)
    return [
        LayerSpec(params[0], params[1], activation="relu", pool=POOL),
        LayerSpec(params[2], params[3]),
    ]


def predict_logits(layers, images, bits=None, opus=None, seed=0, batch_size=250):
    """Logits for every image.

    Float math by default; ``bits`` adds injected noise after every layer;
    ``opus`` runs the first layer on the OPU pool.  Batches draw from
    independent streams seeded by ``(seed, batch index)``, so the same seed
    reuses the same standard-normal draws at every bit depth.
    """
    images = np.asarray(images, dtype=float)
    if images.ndim == 3:
        images = images[:, None]
    execution = "opu" if opus is not None else ("noise" if bits is not None else "float")
    out = []
    for b, start in enumerate(range(0, len(images), batch_size)):
        rng = np.random.default_rng([seed, b])
        z = forward(layers, images[start:start + batch_size], execution, bits=bits,
                    opus=opus, seed=rng)
        out.append(z.reshape(len(z), -1))
    return np.concatenate(out) if out else np.zeros((0, layers[-1].out_channels))


def confusion_matrix(labels, predicted, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def evaluate_classifier(layers, test, bits=None, opus=None, seed=0):
    """Top-1 accuracy and the class x class confusion matrix (rows = true class)."""
    if len(test) == 0:
        raise ShapeError("test set is empty")
    predicted = predict_logits(layers, test.images, bits=bits, opus=opus, seed=seed).argmax(axis=1)
    cm = confusion_matrix(test.labels, predicted, test.n_classes)
    return float(np.trace(cm) / cm.sum()), cm


class ToyCNNClassifier(BaseEstimator, ClassifierMixin):
    """Estimator wrapper around the toy CNN.

    ``bits`` and ``opus`` choose the execution mode used by ``predict``;
    training always runs in float.
    """

    def __init__(self, epochs=8, learning_rate=0.3, batch_size=32, lr_decay=0.7, seed=0,
                 bits=None, opus=None):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.lr_decay = lr_decay
        self.seed = seed
        self.bits = bits
        self.opus = opus

    def fit(self, X, y):
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        encoded = np.searchsorted(self.classes_, y)
        data = Dataset(X, encoded, n_classes=len(self.classes_))
        self.layers_ = train_toy_cnn(data, self.epochs, self.learning_rate, self.seed,
                                     self.batch_size, self.lr_decay)
        self.n_features_in_ = int(np.prod(data.images.shape[1:]))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "layers_")
        return predict_logits(self.layers_, X, bits=self.bits, opus=self.opus, seed=self.seed)

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]
