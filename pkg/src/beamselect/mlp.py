"""Feedforward softmax classifier written directly in numpy.

The functional core (:func:`forward`, :func:`cross_entropy`, :func:`backward`)
operates on a plain list of ``(W, b)`` layers so it can be gradient-checked in
isolation; :class:`MLPBeamClassifier` wraps it in the scikit-learn estimator
protocol with Adam training and early stopping.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics import confusion_matrix, roc_auc_score, roc_curve
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_labels, one_hot
from .cluster import FeatureNormalizer
from .exceptions import DomainError, TrainingDivergence

PROB_EPS = 1e-12
ACTIVATIONS = ("relu", "tanh")


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    raise DomainError(f"activation must be one of {ACTIVATIONS}")


def _activation_grad(z, a, activation):
    if activation == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a**2


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def init_params(layer_sizes, rng, zero_output=True):
    """Uniform fan-in scaled weights, zero biases.

    The output layer starts at zero so training is equivariant under a
    relabeling of the classes.
    """
    params = []
    last = len(layer_sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        limit = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if zero_output and i == last:
            W = np.zeros_like(W)
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X, activation="relu", return_cache=False):
    """Class probabilities for normalized inputs ``X`` (rows are samples)."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DomainError("inputs must be finite")
    squeeze = X.ndim == 1
    a = np.atleast_2d(X)
    cache = [(None, a)]
    for W, b in params[:-1]:
        z = a @ W + b
        a = _activate(z, activation)
        cache.append((z, a))
    W, b = params[-1]
    logits = a @ W + b
    probs = softmax(logits)
    if squeeze:
        probs = probs[0]
    return (probs, logits, cache) if return_cache else probs


def cross_entropy(probs, labels, reduction="mean"):
    """Categorical cross-entropy ``-sum y log p`` with ``p`` clipped to ``[1e-12, 1]``.

    ``reduction="sum"`` totals over samples; ``"mean"`` divides by the count.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    if probs.shape != labels.shape:
        raise DomainError(f"probabilities {probs.shape} and labels {labels.shape} differ in shape")
    total = -float(np.sum(labels * np.log(np.clip(probs, PROB_EPS, 1.0))))
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / probs.shape[0]
    raise DomainError("reduction must be 'mean' or 'sum'")


def backward(params, X, Y, activation="relu", alpha=0.0):
    """Gradients of the mean cross-entropy with respect to every ``(W, b)``.

    ``alpha`` adds the gradient of an L2 penalty ``alpha/2 * sum(W**2)`` on
    the weight matrices (biases are not penalized).
    """
    probs, _, cache = forward(params, X, activation, return_cache=True)
    n = probs.shape[0]
    delta = (probs - Y) / n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        a_prev = cache[i][1]
        gW = a_prev.T @ delta
        if alpha:
            gW = gW + alpha * params[i][0]
        grads[i] = (gW, delta.sum(axis=0))
        if i > 0:
            z, a = cache[i]
            delta = (delta @ params[i][0].T) * _activation_grad(z, a, activation)
    return grads


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        out = []
        for i, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
            new = []
            for j, (p, g) in enumerate(((W, gW), (b, gb))):
                m = self.b1 * self.m[i][j] + (1.0 - self.b1) * g
                v = self.b2 * self.v[i][j] + (1.0 - self.b2) * g * g
                self.m[i] = (m, self.m[i][1]) if j == 0 else (self.m[i][0], m)
                self.v[i] = (v, self.v[i][1]) if j == 0 else (self.v[i][0], v)
                new.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
            out.append(tuple(new))
        return out


@dataclass
class TrainingReport:
    """Learning curves plus held-out classification diagnostics."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    confusion: np.ndarray | None = None
    roc: dict = field(default_factory=dict)
    auc: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def recall(self) -> np.ndarray:
        support = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), support, out=np.zeros(len(support)), where=support > 0)


class MLPBeamClassifier(ClassifierMixin, BaseEstimator):
    """Softmax MLP mapping beam requirements to cluster indices.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(64, 64)
    activation : {'relu', 'tanh'}, default='relu'
    alpha : float, default=0.0
        L2 penalty on the weight matrices.
    learning_rate, beta_1, beta_2, epsilon :
        Adam hyperparameters.
    batch_size : int, default=64
    max_epochs : int, default=200
    patience : int, default=20
        Stop after this many epochs without a lower validation loss; the
        best weights seen are restored.
    validation_fraction : float, default=0.2
        Stratified hold-out used when ``fit`` is not given a validation set.
    n_classes : int or None
        Number of output neurons; inferred as ``max(y) + 1`` when None.
    normalize : bool, default=True
        Fit a :class:`FeatureNormalizer` when none is passed to ``fit``.
    random_state : int, default=0
    """

    def __init__(self, hidden_layer_sizes=(64, 64), activation="relu", alpha=0.0, learning_rate=1e-3,
                 beta_1=0.9, beta_2=0.999, epsilon=1e-8, batch_size=64, max_epochs=200,
                 patience=20, validation_fraction=0.2, n_classes=None, normalize=True, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.n_classes = n_classes
        self.normalize = normalize
        self.random_state = random_state

    @property
    def params_(self):
        return list(zip(self.coefs_, self.intercepts_))

    @property
    def layer_sizes_(self):
        return [self.coefs_[0].shape[0]] + [W.shape[1] for W in self.coefs_]

    def _scale(self, X):
        return self.normalizer_.transform(X) if self.normalizer_ is not None else X

    def _split(self, X, y):
        counts = np.bincount(y)
        stratify = y if counts[counts > 0].min() >= 2 else None
        return train_test_split(X, y, test_size=self.validation_fraction, stratify=stratify,
                                random_state=self.random_state)

    def fit(self, X, y, X_val=None, y_val=None, normalizer=None):
        """Train on raw requirement features ``X`` and cluster labels ``y``.

        ``normalizer`` may be a fitted :class:`FeatureNormalizer` shared with
        the clustering stage.
        """
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        X = check_features(X)
        y = check_labels(y, X.shape[0], self.n_classes)
        n_classes = self.n_classes or int(y.max()) + 1
        if X_val is None:
            X, X_val, y, y_val = self._split(X, y)
        else:
            X_val = check_features(X_val, X.shape[1], "X_val")
            y_val = check_labels(y_val, X_val.shape[0], n_classes)
        if normalizer is not None:
            self.normalizer_ = normalizer
        else:
            self.normalizer_ = FeatureNormalizer().fit(X) if self.normalize else None
        Z, Z_val = self._scale(X), self._scale(X_val)
        Y, Y_val = one_hot(y, n_classes), one_hot(y_val, n_classes)

        rng = np.random.default_rng(self.random_state)
        sizes = [X.shape[1], *self.hidden_layer_sizes, n_classes]
        params = init_params(sizes, rng)
        opt = Adam(params, self.learning_rate, (self.beta_1, self.beta_2), self.epsilon)
        report = TrainingReport()
        best_loss, best_params, best_epoch, stale = np.inf, params, 0, 0
        start = time.perf_counter()
        for epoch in range(self.max_epochs):
            order = rng.permutation(len(Z))
            for s in range(0, len(Z), self.batch_size):
                idx = order[s:s + self.batch_size]
                with np.errstate(over="ignore", invalid="ignore"):
                    grads = backward(params, Z[idx], Y[idx], self.activation, self.alpha)
                    candidate = opt.step(params, grads)
                if not all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in candidate):
                    raise TrainingDivergence(f"non-finite weights in epoch {epoch}", checkpoint=params)
                params = candidate
            p_tr = forward(params, Z, self.activation)
            p_va = forward(params, Z_val, self.activation)
            tr_loss, va_loss = cross_entropy(p_tr, Y), cross_entropy(p_va, Y_val)
            if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
                raise TrainingDivergence(f"non-finite loss in epoch {epoch}", checkpoint=best_params)
            report.train_loss.append(tr_loss)
            report.val_loss.append(va_loss)
            report.train_acc.append(float(np.mean(p_tr.argmax(1) == y)))
            report.val_acc.append(float(np.mean(p_va.argmax(1) == y_val)))
            if va_loss < best_loss:
                best_loss, best_params, best_epoch, stale = va_loss, params, epoch, 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        report.wall_time = time.perf_counter() - start

        self.coefs_ = [W for W, _ in best_params]
        self.intercepts_ = [b for _, b in best_params]
        self.classes_ = np.arange(n_classes)
        self.n_classes_ = n_classes
        self.n_features_in_ = X.shape[1]
        self.best_epoch_ = best_epoch
        self.n_epochs_ = len(report.train_loss)
        self.report_ = report
        self.validation_set_ = (X_val, y_val)
        return self

    def predict_logits(self, X):
        check_is_fitted(self, "coefs_")
        Z = self._scale(check_features(X, self.n_features_in_))
        return forward(self.params_, Z, self.activation, return_cache=True)[1]

    def predict_proba(self, X):
        check_is_fitted(self, "coefs_")
        Z = self._scale(check_features(X, self.n_features_in_))
        return forward(self.params_, Z, self.activation)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def evaluate(self, X, y) -> TrainingReport:
        """Copy of the training curves with confusion matrix and one-vs-rest ROC on ``(X, y)``."""
        check_is_fitted(self, "coefs_")
        y = check_labels(y, len(X), self.n_classes_)
        proba = self.predict_proba(X)
        report = copy.deepcopy(self.report_)
        report.confusion = confusion_matrix(y, proba.argmax(1), labels=self.classes_)
        report.roc, report.auc = {}, {}
        for k in self.classes_:
            positives = y == k
            if positives.all() or not positives.any():
                continue
            fpr, tpr, thr = roc_curve(positives, proba[:, k])
            report.roc[int(k)] = (thr, tpr, fpr)
            report.auc[int(k)] = float(roc_auc_score(positives, proba[:, k]))
        return report
