"""Vector helpers, ball projection and seeded index sampling.

Vectors are plain 1-D ``float64`` numpy arrays. Random streams come from
numpy's PCG64 bit generator, whose algorithm and seeding are documented and
stable across platforms, so a fixed seed reproduces every sample batch.
"""
from __future__ import annotations

import numpy as np

DEFAULT_RADIUS = 1e3


class DivergenceError(FloatingPointError):
    """Raised when an iterate or direction becomes non-finite or explodes."""


def as_vec(values, name="vector"):
    """Return ``values`` as a finite 1-D float64 array (copying if needed)."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {vec.shape}")
    check_finite(vec, name)
    return vec


def check_finite(vec, name="vector"):
    if not np.all(np.isfinite(vec)):
        raise DivergenceError(f"{name} contains non-finite entries")
    return vec


def check_radius(radius):
    radius = float(radius)
    if not radius > 0 or not np.isfinite(radius):
        raise ValueError(f"ball radius must be a positive finite float, got {radius}")
    return radius


def project_ball(v, radius=DEFAULT_RADIUS):
    """Euclidean projection of ``v`` onto the ball ``{w : ||w|| <= radius}``.

    Points inside the ball are returned unchanged (as a copy); points outside
    are rescaled onto the sphere.
    """
    radius = check_radius(radius)
    v = np.asarray(v, dtype=np.float64)
    check_finite(v, "projection input")
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v.copy()
    out = v * (radius / norm)
    # rounding can leave the rescaled vector a few ulps outside
    out_norm = np.linalg.norm(out)
    while out_norm > radius:
        out *= np.nextafter(radius / out_norm, 0.0)
        out_norm = np.linalg.norm(out)
    return out


def make_rng(seed):
    """PCG64 generator for ``seed``; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def draw_batch(rng, dataset_size, batch_size):
    """Draw ``batch_size`` indices uniformly from ``[0, dataset_size)`` with replacement."""
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be >= 1, got {dataset_size}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    return rng.integers(0, dataset_size, size=batch_size, dtype=np.int64)
