"""Alternating outer loop with multi-step lower-level and auxiliary refinement.

Each outer iteration ``k``

1. refreshes the direction estimates with a large-batch anchor when
   ``k % q1 == 0`` (otherwise inherits the inner loops' last estimates),
2. takes the x-step ``x_{k+1} = x_k - step_x * D_k^x``,
3. runs ``t_steps`` recursive-estimator steps on ``y`` at ``x_{k+1}``,
4. runs ``j_steps`` projected recursive-estimator steps on ``v``.

The first recursion step of each inner loop differences the new point against
the previous outer iterate on a shared batch, which lets the estimates carry
over between outer iterations.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import DEFAULT_RADIUS, DivergenceError, as_vec, check_radius, make_rng, project_ball
from .estimators import EstimatorConfig, EstimatorState, anchor, batch_size, vr_step
from .oracle import dir_v, dir_x, dir_y, draw_lower, draw_tuple

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class SolverConfig:
    """Loop lengths, effective step sizes and estimator settings.

    ``step_y`` and ``step_v`` are the effective products of the scaling factor
    and base step used by the lower-level and auxiliary updates.  ``freeze_x``
    keeps ``x`` at its initial value (baseline runs); everything else,
    including sampling, is unchanged.
    """

    k_max: int = 100
    t_steps: int = 5
    j_steps: int = 2
    step_x: float = 0.01
    step_y: float = 0.1
    step_v: float = 0.01
    radius: float = DEFAULT_RADIUS
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0
    freeze_x: bool = False

    def __post_init__(self):
        for name in ("k_max", "t_steps", "j_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("step_x", "step_y", "step_v"):
            step = getattr(self, name)
            if not step > 0:
                raise ValueError(f"{name} must be > 0, got {step}")
        check_radius(self.radius)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class OuterState:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    est: EstimatorState | None = None
    k: int = 0
    samples_used: int = 0


def initial_state(oracle, config, x0=None, y0=None, v0=None):
    """Zero initial point unless given; ``v0`` is projected into the ball."""
    x = np.zeros(oracle.dim_x) if x0 is None else as_vec(x0, "x0")
    y = np.zeros(oracle.dim_y) if y0 is None else as_vec(y0, "y0")
    v = np.zeros(oracle.dim_y) if v0 is None else as_vec(v0, "v0")
    if x.shape != (oracle.dim_x,) or y.shape != (oracle.dim_y,) or v.shape != (oracle.dim_y,):
        raise ValueError("initial point does not match the oracle dimensions")
    return OuterState(x=x, y=y, v=project_ball(v, config.radius))


def _guard(vec, name):
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"{name} diverged (norm {norm:.3e} > {DIVERGENCE_LIMIT:.0e}); "
            "reduce the step sizes"
        )
    return vec


def ll_refine(oracle, x_prev, y_prev, d_y_prev, x_new, *, t_steps, step_y, tau_y, s2, rng):
    """Recursive-estimator gradient steps on the lower-level variable at ``x_new``.

    Returns ``(y_new, d_y_new)`` after ``t_steps`` iterations.  Each iteration
    moves ``y`` with the previous estimate, draws one lower batch and
    evaluates it at the new and previous points.
    """
    x_old, y_old, d_y = x_prev, y_prev, d_y_prev
    for _ in range(t_steps):
        y = _guard(y_old - step_y * d_y, "y")
        batch = draw_lower(rng, oracle, s2)
        d_y = vr_step(
            d_y, dir_y(oracle, x_new, y, batch), dir_y(oracle, x_old, y_old, batch), tau_y
        )
        _guard(d_y, "d_y")
        x_old, y_old = x_new, y
    return y_old, d_y


def aux_refine(
    oracle, x_prev, y_prev, v_prev, d_x_prev, d_v_prev, x_new, y_new, *,
    j_steps, step_v, tau_x, tau_v, s2, radius, rng,
):
    """Projected recursive-estimator steps on the auxiliary variable.

    Both the hypergradient estimate and the auxiliary direction are refreshed
    each iteration, from two independent composite batches.  Returns
    ``(v_new, d_x_new, d_v_new)``; ``v_new`` always lies in the ball.
    """
    x_old, y_old, v_old = x_prev, y_prev, v_prev
    d_x, d_v = d_x_prev, d_v_prev
    for _ in range(j_steps):
        v = project_ball(v_old - step_v * d_v, radius)
        bx = draw_tuple(rng, oracle, s2)
        bv = draw_tuple(rng, oracle, s2)
        d_x = vr_step(
            d_x, dir_x(oracle, x_new, y_new, v, bx), dir_x(oracle, x_old, y_old, v_old, bx), tau_x
        )
        d_v = vr_step(
            d_v, dir_v(oracle, x_new, y_new, v, bv), dir_v(oracle, x_old, y_old, v_old, bv), tau_v
        )
        _guard(d_x, "d_x")
        _guard(d_v, "d_v")
        x_old, y_old, v_old = x_new, y_new, v
    return v_old, d_x, d_v


def outer_step(state, config, oracle, rng):
    """One complete outer iteration; returns the next :class:`OuterState`."""
    est_cfg = config.estimator
    samples = state.samples_used
    est = state.est
    if state.k % est_cfg.q1 == 0 or est is None:
        est, charged = anchor(oracle, state.x, state.y, state.v, est_cfg.s1, rng)
        samples += charged
    if config.freeze_x:
        x_new = state.x
    else:
        x_new = _guard(state.x - config.step_x * est.d_x, "x")
    y_new, d_y = ll_refine(
        oracle, state.x, state.y, est.d_y, x_new,
        t_steps=config.t_steps, step_y=config.step_y, tau_y=est_cfg.tau_y,
        s2=est_cfg.s2, rng=rng,
    )
    v_new, d_x, d_v = aux_refine(
        oracle, state.x, state.y, state.v, est.d_x, est.d_v, x_new, y_new,
        j_steps=config.j_steps, step_v=config.step_v, tau_x=est_cfg.tau_x,
        tau_v=est_cfg.tau_v, s2=est_cfg.s2, radius=config.radius, rng=rng,
    )
    s2 = batch_size(oracle, est_cfg.s2)
    samples += (2 * config.t_steps + 4 * config.j_steps) * s2
    return OuterState(
        x=x_new, y=y_new, v=v_new,
        est=EstimatorState(d_x=d_x, d_y=d_y, d_v=d_v),
        k=state.k + 1, samples_used=samples,
    )


def expected_samples(oracle, config, k=None):
    """Closed-form sample count after ``k`` outer iterations (default ``k_max``)."""
    k = config.k_max if k is None else k
    est = config.estimator
    n_anchors = -(-k // est.q1)
    s1 = batch_size(oracle, est.s1)
    s2 = batch_size(oracle, est.s2)
    return n_anchors * 3 * s1 + k * (2 * config.t_steps + 4 * config.j_steps) * s2


def solve(oracle, config, callback=None, state=None, rng=None):
    """Run ``config.k_max`` outer iterations.

    ``callback(state)`` is invoked after every iteration; returning ``False``
    stops early.  Returns the final state.
    """
    rng = make_rng(config.seed) if rng is None else rng
    state = initial_state(oracle, config) if state is None else state
    while state.k < config.k_max:
        state = outer_step(state, config, oracle, rng)
        if callback is not None and callback(state) is False:
            break
    return state
