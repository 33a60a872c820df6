"""Data hyper-cleaning: learn per-sample weights on a corrupted training set.

Lower objective (training set, weights ``sigmoid(x_i)``)::

    g(x, y) = mean_i sigmoid(x_i) L(y; u_i, c_i) + c ||y||^2

Upper objective (clean validation set)::

    f(y) = mean_i L(y; u_i, c_i)

``L`` is the cross-entropy of a linear classifier.  With two classes it is
binary logistic regression on a single weight vector; otherwise ``y`` is the
flattened ``dim x n_classes`` weight matrix of a multinomial softmax model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from ..core import make_rng
from ..oracle import ProblemOracle


@dataclass(frozen=True)
class HyperCleanDataset:
    train_features: np.ndarray
    train_labels: np.ndarray
    val_features: np.ndarray
    val_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    corruption_mask: np.ndarray
    corruption_prob: float
    n_classes: int
    reg: float = 0.01
    true_train_labels: np.ndarray | None = None

    @property
    def dim(self):
        return self.train_features.shape[1]


def corrupt_labels(rng, labels, n_classes, corruption_prob):
    """Replace each label, with probability ``corruption_prob``, by a different class."""
    if not 0.0 <= corruption_prob <= 1.0:
        raise ValueError(f"corruption_prob must lie in [0, 1], got {corruption_prob}")
    labels = np.asarray(labels, dtype=np.int64)
    mask = rng.random(labels.shape[0]) < corruption_prob
    shift = rng.integers(1, n_classes, size=labels.shape[0])
    corrupted = np.where(mask, (labels + shift) % n_classes, labels)
    return corrupted, mask


def make_hyperclean_synthetic(
    n_train, n_val, n_test, dim, n_classes, corruption_prob, seed=0,
    reg=0.01, separation=2.5,
):
    """Gaussian class-conditional features around random class means.

    Each class mean is a random direction of norm ``separation``; features are
    ``mean[label] + N(0, I)``.  Training labels are then corrupted with
    :func:`corrupt_labels`; validation and test labels stay clean.
    """
    for name, size in (("n_train", n_train), ("n_val", n_val), ("n_test", n_test), ("dim", dim)):
        if size < 1:
            raise ValueError(f"{name} must be >= 1, got {size}")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    rng = make_rng(seed)
    means = rng.normal(0.0, 1.0, size=(n_classes, dim))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)

    def sample(n):
        labels = rng.integers(0, n_classes, size=n)
        return means[labels] + rng.normal(0.0, 1.0, size=(n, dim)), labels

    u_tr, lab_tr = sample(n_train)
    u_val, lab_val = sample(n_val)
    u_te, lab_te = sample(n_test)
    noisy, mask = corrupt_labels(rng, lab_tr, n_classes, corruption_prob)
    return HyperCleanDataset(
        train_features=u_tr, train_labels=noisy,
        val_features=u_val, val_labels=lab_val,
        test_features=u_te, test_labels=lab_te,
        corruption_mask=mask, corruption_prob=float(corruption_prob),
        n_classes=n_classes, reg=reg, true_train_labels=lab_tr,
    )


class _LinearCrossEntropy:
    """Per-sample cross-entropy of a linear classifier and its derivatives."""

    def __init__(self, dim, n_classes):
        self.dim = dim
        self.n_classes = n_classes
        self.binary = n_classes == 2
        self.n_out = 1 if self.binary else n_classes
        self.size = dim * self.n_out

    def weights(self, y):
        return np.asarray(y, dtype=np.float64).reshape(self.dim, self.n_out)

    def losses(self, y, u, labels):
        z = u @ self.weights(y)
        if self.binary:
            z = z[:, 0]
            return -np.where(labels == 1, log_expit(z), log_expit(-z))
        return logsumexp(z, axis=1) - z[np.arange(len(labels)), labels]

    def residuals(self, y, u, labels):
        """``d loss / d logits`` per sample, shape ``(n, n_out)``, and the probabilities."""
        z = u @ self.weights(y)
        if self.binary:
            p = expit(z)
            return p - (labels == 1)[:, None], p
        p = softmax(z, axis=1)
        res = p.copy()
        res[np.arange(len(labels)), labels] -= 1.0
        return res, p

    def logit_hvp(self, p, zdot):
        """Hessian of the loss in logit space applied to ``zdot`` (per sample)."""
        if self.binary:
            return p * (1.0 - p) * zdot
        return p * zdot - p * np.sum(p * zdot, axis=1, keepdims=True)

    def predict(self, y, u):
        z = u @ self.weights(y)
        if self.binary:
            return (z[:, 0] > 0).astype(np.int64)
        return np.argmax(z, axis=1)


class HyperCleanProblem(ProblemOracle):
    """Oracle for weighted-training / clean-validation hyper-cleaning."""

    def __init__(self, dataset):
        self.data = dataset
        self.reg = dataset.reg
        self.model = _LinearCrossEntropy(dataset.dim, dataset.n_classes)
        self.dim_x = dataset.train_features.shape[0]
        self.dim_y = self.model.size
        self.n_upper = dataset.val_features.shape[0]
        self.n_lower = dataset.train_features.shape[0]

    def _val(self, idx):
        return self.data.val_features[idx], self.data.val_labels[idx]

    def _train(self, idx):
        return self.data.train_features[idx], self.data.train_labels[idx]

    def upper_value(self, x, y, idx):
        return float(np.mean(self.model.losses(y, *self._val(idx))))

    def lower_value(self, x, y, idx):
        weights = expit(np.asarray(x)[idx])
        loss = np.mean(weights * self.model.losses(y, *self._train(idx)))
        return float(loss) + self.reg * float(np.dot(y, y))

    def upper_grad_x(self, x, y, idx):
        return np.zeros(self.dim_x)

    def upper_grad_y(self, x, y, idx):
        u, lab = self._val(idx)
        res, _ = self.model.residuals(y, u, lab)
        return (u.T @ res).ravel() / len(idx)

    def lower_grad_y(self, x, y, idx):
        u, lab = self._train(idx)
        res, _ = self.model.residuals(y, u, lab)
        weights = expit(np.asarray(x)[idx])
        return (u.T @ (weights[:, None] * res)).ravel() / len(idx) + 2.0 * self.reg * y

    def lower_hvp_yy(self, x, y, v, idx):
        u, lab = self._train(idx)
        _, p = self.model.residuals(y, u, lab)
        zdot = u @ self.model.weights(v)
        weights = expit(np.asarray(x)[idx])
        hz = self.model.logit_hvp(p, zdot)
        return (u.T @ (weights[:, None] * hz)).ravel() / len(idx) + 2.0 * self.reg * np.asarray(v)

    def lower_jvp_xy(self, x, y, v, idx):
        """Coordinate ``i`` gets ``sigmoid'(x_i) <grad_y L_i, v> / |idx|`` per occurrence."""
        u, lab = self._train(idx)
        res, _ = self.model.residuals(y, u, lab)
        inner = np.sum(res * (u @ self.model.weights(v)), axis=1)
        s = expit(np.asarray(x)[idx])
        out = np.zeros(self.dim_x)
        np.add.at(out, idx, s * (1.0 - s) * inner / len(idx))
        return out

    def validation_loss(self, y):
        return self.upper_value(None, y, self.all_upper())

    def test_accuracy(self, y):
        pred = self.model.predict(y, self.data.test_features)
        return float(np.mean(pred == self.data.test_labels))

    def lower_minimizer(self, x, tol=1e-10):
        """Weighted lower-level minimiser ``y*(x)`` by Newton-CG with the analytic HVP."""
        from scipy.optimize import minimize

        idx = self.all_lower()
        res = minimize(
            lambda w: self.lower_value(x, w, idx),
            np.zeros(self.dim_y),
            jac=lambda w: self.lower_grad_y(x, w, idx),
            hessp=lambda w, p: self.lower_hvp_yy(x, w, p, idx),
            method="trust-ncg",
            options={"gtol": tol, "maxiter": 1000},
        )
        return res.x


def hyperclean_ll_grad_y(dataset, x, y, batch):
    """Minibatch ``grad_y`` of the weighted lower objective."""
    return HyperCleanProblem(dataset).lower_grad_y(x, y, batch)


def hyperclean_jvp_x(dataset, x, y, v, batch):
    return HyperCleanProblem(dataset).lower_jvp_xy(x, y, v, batch)


def hyperclean_hvp_y(dataset, x, y, v, batch):
    return HyperCleanProblem(dataset).lower_hvp_yy(x, y, v, batch)
