"""Quadratic bilevel regression with a closed-form lower-level solution.

Upper objective over the validation set::

    f(x, y) = mean_i  1/2 (y^T u_i - v_i)^2 + (x^T u_i - v_i)^2

Lower objective over the training set::

    g(x, y) = mean_i  1/2 (y^T u_i - v_i)^2 + r/2 ||y - x||^2

so ``y*(x) = (A + r I)^{-1} (b + r x)`` with ``A = mean u u^T`` and
``b = mean u v`` on the training data, and ``jac_xy g = -r I``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scipy.linalg import cho_factor, cho_solve

from ..core import as_vec, make_rng
from ..oracle import ProblemOracle


@dataclass(frozen=True)
class SyntheticDataset:
    features: np.ndarray
    labels: np.ndarray
    reg: float = 0.5

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be n x p and labels length n")
        if not self.reg > 0:
            raise ValueError(f"reg must be > 0, got {self.reg}")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class ExactSolution:
    y_star: np.ndarray
    v_star: np.ndarray
    phi: float
    grad_phi: np.ndarray


def default_w0(dim):
    """Ground-truth weights ``(4, 6, 3, ..., 3)``."""
    w0 = np.full(dim, 3.0)
    w0[0] = 4.0
    if dim > 1:
        w0[1] = 6.0
    return w0


def make_synthetic(n, dim, reg=0.5, seed=0, noise_var=1.0, feature_var=0.01):
    """Generate ``2 n`` samples in one pass and split them evenly.

    Features are ``u_i = (e_i, 1)`` with ``e_i ~ N(0, feature_var I)`` in
    ``dim - 1`` dimensions; labels are ``w0^T u_i`` plus ``N(0, noise_var)``
    noise.  Returns ``(train, val)``.
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be >= 1")
    rng = make_rng(seed)
    e = rng.normal(0.0, np.sqrt(feature_var), size=(2 * n, dim - 1))
    u = np.hstack([e, np.ones((2 * n, 1))])
    labels = u @ default_w0(dim) + rng.normal(0.0, np.sqrt(noise_var), size=2 * n)
    train = SyntheticDataset(u[:n].copy(), labels[:n].copy(), reg)
    val = SyntheticDataset(u[n:].copy(), labels[n:].copy(), reg)
    return train, val


def save_csv(dataset, path):
    """Write one sample per line: ``u_0, ..., u_{p-1}, label``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"u{j}" for j in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(a)) for a in row] + [repr(float(label))])


def load_csv(path, reg=0.5):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SyntheticDataset(data[:, :-1].copy(), data[:, -1].copy(), reg)


def _moments(dataset):
    u = dataset.features
    return u.T @ u / dataset.n, u.T @ dataset.labels / dataset.n


def synthetic_exact(train, val, x):
    """Closed-form ``y*``, ``v*``, ``Phi`` and ``grad Phi`` at ``x``."""
    x = as_vec(x, "x")
    r = train.reg
    a_tr, b_tr = _moments(train)
    a_val, b_val = _moments(val)
    hess = a_tr + r * np.eye(train.dim)
    y_star = np.linalg.solve(hess, b_tr + r * x)
    grad_y_f = a_val @ y_star - b_val
    v_star = np.linalg.solve(hess, grad_y_f)
    grad_x_f = 2.0 * (a_val @ x - b_val)
    res_y = val.features @ y_star - val.labels
    res_x = val.features @ x - val.labels
    phi = float(np.mean(0.5 * res_y**2 + res_x**2))
    return ExactSolution(y_star=y_star, v_star=v_star, phi=phi, grad_phi=grad_x_f + r * v_star)


class SyntheticProblem(ProblemOracle):
    """Oracle for the quadratic bilevel regression over ``(train, val)``."""

    def __init__(self, train, val):
        if train.dim != val.dim:
            raise ValueError("train and val feature dimensions differ")
        self.train = train
        self.val = val
        self.reg = train.reg
        self.dim_x = self.dim_y = train.dim
        self.n_upper = val.n
        self.n_lower = train.n
        a_tr, self._b_tr = _moments(train)
        self._a_val, self._b_val = _moments(val)
        self._chol = cho_factor(a_tr + self.reg * np.eye(train.dim))

    def upper_value(self, x, y, idx):
        u, lab = self.val.features[idx], self.val.labels[idx]
        return float(np.mean(0.5 * (u @ y - lab) ** 2 + (u @ x - lab) ** 2))

    def lower_value(self, x, y, idx):
        u, lab = self.train.features[idx], self.train.labels[idx]
        return float(np.mean(0.5 * (u @ y - lab) ** 2)) + 0.5 * self.reg * float(np.sum((y - x) ** 2))

    def upper_grad_x(self, x, y, idx):
        u, lab = self.val.features[idx], self.val.labels[idx]
        return 2.0 * u.T @ (u @ x - lab) / len(idx)

    def upper_grad_y(self, x, y, idx):
        u, lab = self.val.features[idx], self.val.labels[idx]
        return u.T @ (u @ y - lab) / len(idx)

    def lower_grad_y(self, x, y, idx):
        u, lab = self.train.features[idx], self.train.labels[idx]
        return u.T @ (u @ y - lab) / len(idx) + self.reg * (y - x)

    def lower_hvp_yy(self, x, y, v, idx):
        u = self.train.features[idx]
        return u.T @ (u @ v) / len(idx) + self.reg * v

    def lower_jvp_xy(self, x, y, v, idx):
        return -self.reg * np.asarray(v, dtype=np.float64)

    def exact(self, x):
        """Same closed form as :func:`synthetic_exact`, with a cached Cholesky factor."""
        x = as_vec(x, "x")
        y_star = cho_solve(self._chol, self._b_tr + self.reg * x)
        v_star = cho_solve(self._chol, self._a_val @ y_star - self._b_val)
        res_y = self.val.features @ y_star - self.val.labels
        res_x = self.val.features @ x - self.val.labels
        phi = float(np.mean(0.5 * res_y**2 + res_x**2))
        grad = 2.0 * (self._a_val @ x - self._b_val) + self.reg * v_star
        return ExactSolution(y_star=y_star, v_star=v_star, phi=phi, grad_phi=grad)

    def lyapunov(self, x, y, v):
        """``Phi(x) + ||y - y*(x)||^2 + ||v - v*(x)||^2``."""
        sol = self.exact(x)
        return sol.phi + float(np.sum((y - sol.y_star) ** 2) + np.sum((v - sol.v_star) ** 2))
