"""Stochastic evaluation of the three bilevel search directions.

A :class:`ProblemOracle` exposes minibatch means of the per-sample derivatives
of the upper objective ``F(x, y; xi)`` (over the upper, or validation, dataset)
and the lower objective ``G(x, y; zeta)`` (over the lower, or training,
dataset).  The functions in this module combine them into

* ``dir_y = grad_y G``                          (lower-level gradient)
* ``dir_v = hess_yy G @ v - grad_y F``          (auxiliary quadratic gradient)
* ``dir_x = grad_x F - jac_xy G @ v``           (hypergradient surrogate)

Second-order terms are always requested as products with ``v`` so that no
Hessian is ever formed.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .core import check_finite, draw_batch


class ProblemOracle(abc.ABC):
    """Finite-sum bilevel problem with analytic first and second derivatives.

    Every method receives an integer index array and returns the *mean* of the
    per-sample quantity over those indices.  Duplicate indices count as many
    times as they appear.
    """

    dim_x: int
    dim_y: int
    n_upper: int
    n_lower: int

    @abc.abstractmethod
    def upper_value(self, x, y, idx):
        """Mean of ``F(x, y; xi_i)`` over ``idx``."""

    @abc.abstractmethod
    def lower_value(self, x, y, idx):
        """Mean of ``G(x, y; zeta_i)`` over ``idx``."""

    @abc.abstractmethod
    def upper_grad_x(self, x, y, idx):
        ...

    @abc.abstractmethod
    def upper_grad_y(self, x, y, idx):
        ...

    @abc.abstractmethod
    def lower_grad_y(self, x, y, idx):
        ...

    @abc.abstractmethod
    def lower_hvp_yy(self, x, y, v, idx):
        """Mean of ``hess_yy G(x, y; zeta_i) @ v``."""

    @abc.abstractmethod
    def lower_jvp_xy(self, x, y, v, idx):
        """Mean of ``jac_x grad_y G(x, y; zeta_i) @ v``, a vector of length ``dim_x``."""

    def all_upper(self):
        return np.arange(self.n_upper, dtype=np.int64)

    def all_lower(self):
        return np.arange(self.n_lower, dtype=np.int64)


@dataclass(frozen=True)
class TupleBatch:
    """Composite sample: upper-level indices paired with lower-level indices."""

    upper: np.ndarray
    lower: np.ndarray

    @property
    def size(self):
        return max(len(self.upper), len(self.lower))


def full_tuple(oracle):
    return TupleBatch(oracle.all_upper(), oracle.all_lower())


def draw_tuple(rng, oracle, size):
    """Independent index batches of ``size`` over the upper and lower datasets.

    ``size=None`` returns the full datasets without touching ``rng``.
    """
    if size is None:
        return full_tuple(oracle)
    upper = draw_batch(rng, oracle.n_upper, size)
    lower = draw_batch(rng, oracle.n_lower, size)
    return TupleBatch(upper, lower)


def draw_lower(rng, oracle, size):
    if size is None:
        return oracle.all_lower()
    return draw_batch(rng, oracle.n_lower, size)


def dir_y(oracle, x, y, lower_idx):
    """Minibatch lower-level gradient ``grad_y G``."""
    return check_finite(oracle.lower_grad_y(x, y, lower_idx), "d_y")


def dir_v(oracle, x, y, v, batch):
    """Minibatch ``hess_yy G @ v - grad_y F`` on a composite batch."""
    out = oracle.lower_hvp_yy(x, y, v, batch.lower) - oracle.upper_grad_y(x, y, batch.upper)
    return check_finite(out, "d_v")


def dir_x(oracle, x, y, v, batch):
    """Minibatch hypergradient surrogate ``grad_x F - jac_xy G @ v``."""
    out = oracle.upper_grad_x(x, y, batch.upper) - oracle.lower_jvp_xy(x, y, v, batch.lower)
    return check_finite(out, "d_x")


def exact_directions(oracle, x, y, v):
    """Full-dataset ``(d_x, d_y, d_v)`` at a point."""
    full = full_tuple(oracle)
    return (
        dir_x(oracle, x, y, v, full),
        dir_y(oracle, x, y, full.lower),
        dir_v(oracle, x, y, v, full),
    )
