"""Momentum-parameterised recursive estimators and their large-batch anchors.

One update rule covers all three directions and all three algorithm modes::

    D_new = cur + (1 - tau) * (D_prev - prev)

where ``cur`` and ``prev`` are minibatch directions on the *same* batch at the
current and previous points.  ``tau = 0`` is the SPIDER recursion, ``0 < tau < 1``
is STORM, and ``tau = 1`` degenerates to the plain minibatch estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_finite
from .oracle import dir_v, dir_x, dir_y, draw_lower, draw_tuple

SPIDER = "spider"
STORM = "storm"
SGD = "sgd"


@dataclass(frozen=True)
class EstimatorState:
    """Running estimates of the x-, y- and v-directions."""

    d_x: np.ndarray
    d_y: np.ndarray
    d_v: np.ndarray


@dataclass(frozen=True)
class EstimatorConfig:
    """Momentum weights, batch sizes and anchor period.

    ``s1`` / ``s2`` of ``None`` mean "use the whole dataset" (deterministic
    full-batch mode), which is what the exactness tests rely on.
    """

    tau_x: float = 0.0
    tau_y: float = 0.0
    tau_v: float = 0.0
    s1: int | None = 500
    s2: int | None = 10
    q1: int = 10

    def __post_init__(self):
        for name in ("tau_x", "tau_y", "tau_v"):
            tau = getattr(self, name)
            if not 0.0 <= tau <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {tau}")
        for name in ("s1", "s2"):
            size = getattr(self, name)
            if size is not None and size < 1:
                raise ValueError(f"{name} must be >= 1 or None, got {size}")
        if self.q1 < 1:
            raise ValueError(f"q1 must be >= 1, got {self.q1}")

    @property
    def taus(self):
        return (self.tau_x, self.tau_y, self.tau_v)

    def mode(self, k_max):
        """Classify as ``"spider"``, ``"storm"`` or ``"sgd"``; ``None`` if mixed."""
        taus = self.taus
        if all(t == 0.0 for t in taus) and self.q1 <= k_max:
            return SPIDER
        if all(0.0 < t < 1.0 for t in taus) and self.q1 == k_max:
            return STORM
        if all(t == 1.0 for t in taus):
            return SGD
        return None


def vr_step(prev_estimate, current_dir, previous_dir, tau):
    """Recursive variance-reduced update ``cur + (1 - tau) * (prev_estimate - prev)``.

    The expression is grouped so that ``tau = 1`` returns ``current_dir`` and
    ``tau = 0`` with ``current_dir == previous_dir`` returns ``prev_estimate``,
    both bit for bit.
    """
    prev_estimate = np.asarray(prev_estimate, dtype=np.float64)
    current_dir = np.asarray(current_dir, dtype=np.float64)
    previous_dir = np.asarray(previous_dir, dtype=np.float64)
    if not prev_estimate.shape == current_dir.shape == previous_dir.shape:
        raise ValueError(
            "length mismatch: "
            f"{prev_estimate.shape}, {current_dir.shape}, {previous_dir.shape}"
        )
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if tau == 1.0:
        return current_dir.copy()
    keep = 1.0 - tau
    if tau == 0.0:
        out = (current_dir - previous_dir) + prev_estimate
    else:
        out = (current_dir - keep * previous_dir) + keep * prev_estimate
    return check_finite(out, "variance-reduced estimate")


def batch_size(oracle, size):
    """Number of samples a batch of ``size`` represents (``None`` = full data)."""
    if size is None:
        return max(oracle.n_upper, oracle.n_lower)
    return size


def anchor(oracle, x, y, v, s1, rng):
    """Large-batch estimates of all three directions at ``(x, y, v)``.

    Draws, in order, an x-batch tuple, a y-batch and a v-batch tuple, each of
    size ``s1`` and mutually independent.  Returns the new state and the number
    of samples charged (``3 * s1``).
    """
    bx = draw_tuple(rng, oracle, s1)
    by = draw_lower(rng, oracle, s1)
    bv = draw_tuple(rng, oracle, s1)
    state = EstimatorState(
        d_x=dir_x(oracle, x, y, v, bx),
        d_y=dir_y(oracle, x, y, by),
        d_v=dir_v(oracle, x, y, v, bv),
    )
    return state, 3 * batch_size(oracle, s1)
