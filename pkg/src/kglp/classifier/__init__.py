"""Pair classifiers over concatenated entity embeddings."""
from dataclasses import dataclass, field

import numpy as np

from .features import PairFeatures, build_pair_features
from .forest import Forest, train_forest
from .nets import NETS, init_lstm, init_mlp, output_loss, output_probs
from ..optim import Adam

CLASSIFIER_KINDS = ("forest", "mlp", "lstm")
ALIASES = {"rf": "forest"}


@dataclass
class ClassifierConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.001
    hidden: int = 100
    lstm_hidden: tuple = (100, 64)
    dropout: float = 0.2
    n_trees: int = 200
    max_depth: int = 8
    max_features: int = None


@dataclass(eq=False)
class ClassifierModel:
    kind: str
    n_features: int
    label_count: int                 # 1 for binary, K for K-way
    params: dict = field(default_factory=dict)
    forest: Forest = None
    dropout: float = 0.0
    history: list = field(default_factory=list)

    @property
    def n_classes(self):
        return 2 if self.label_count == 1 else self.label_count


def _check_features(X):
    X = np.asarray(X.matrix if isinstance(X, PairFeatures) else X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or infinite values")
    return X


def train_classifier(kind, features, labels, config=None, seed=0, n_classes=None):
    """Fit a forest, MLP or LSTM; binary when there are two classes, else K-way."""
    kind = ALIASES.get(kind, kind)
    if kind not in CLASSIFIER_KINDS:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIER_KINDS}")
    config = config or ClassifierConfig()
    X = _check_features(features)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) != len(X) or len(y) < 2:
        raise ValueError("need at least 2 labelled rows matching the feature matrix")
    K = int(n_classes or y.max() + 1)
    if y.min() < 0 or y.max() >= K:
        raise ValueError(f"labels must lie in 0..{K - 1}")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    label_count = 1 if K <= 2 else K
    model = ClassifierModel(kind, X.shape[1], label_count)
    if kind == "forest":
        model.forest = train_forest(X, y, max(K, 2), config.n_trees, config.max_depth,
                                    config.max_features, seed)
        return model

    rng = np.random.default_rng(seed)
    if kind == "mlp":
        model.params = init_mlp(X.shape[1], config.hidden, label_count, rng)
    else:
        model.params = init_lstm(X.shape[1], config.lstm_hidden, label_count, rng)
        model.dropout = config.dropout
    forward, backward = NETS[kind]
    opt = Adam(model.params, lr=config.lr)
    for epoch in range(config.epochs):
        erng = np.random.default_rng([seed, epoch + 1])
        order = erng.permutation(len(X))
        total = 0.0
        for lo in range(0, len(X), config.batch_size):
            b = order[lo:lo + config.batch_size]
            logits, cache = forward(model.params, X[b], train=True, rng=erng, dropout=model.dropout)
            loss, dlogits = output_loss(logits, y[b], label_count)
            opt.step(backward(model.params, cache, dlogits))
            total += loss * len(b)
        model.history.append(total / len(X))
    return model


def predict(model, features):
    """Binary: ``(n, 1)`` probabilities; K-way: ``(n, K)`` rows summing to 1."""
    X = _check_features(features)
    if X.shape[1] != model.n_features:
        raise ValueError(f"feature width {X.shape[1]} does not match model width {model.n_features}")
    if model.kind == "forest":
        frac = model.forest.votes(X) / model.forest.n_trees
        return frac[:, 1:2] if model.label_count == 1 else frac
    forward, _ = NETS[model.kind]
    logits, _ = forward(model.params, X, train=False)
    return output_probs(logits)


def labels_from_scores(scores):
    """Argmax per row; ties go to the lowest label."""
    return np.argmax(np.asarray(scores), axis=1)


def predict_types(model, features):
    if model.label_count == 1:
        raise ValueError("predict_types needs a multi-class model")
    return labels_from_scores(predict(model, features))


__all__ = ["ClassifierConfig", "ClassifierModel", "PairFeatures", "build_pair_features",
           "labels_from_scores", "predict", "predict_types", "train_classifier"]
