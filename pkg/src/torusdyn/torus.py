"""Torus point arithmetic: wrapping, metrics, and deterministic samplers.

Points on the torus are plain float arrays with coordinates in [0, 1); all
functions broadcast over leading axes.  Distances are taken in the adapted
norm of a hyperbolic splitting, minimized over the 3^n nearest integer
translates of the wrapped difference (correct near the fundamental-domain
boundary, where the componentwise representative need not minimize a
non-axis-aligned norm).
"""

from __future__ import annotations

import itertools

import numpy as np

from .linear import HyperbolicSplitting


def wrap(x: np.ndarray) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1)."""
    x = np.asarray(x, dtype=float)
    return x - np.floor(x)


def torus_diff(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Componentwise nearest-representative difference, in [-0.5, 0.5)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


_OFFSETS_CACHE: dict[int, np.ndarray] = {}


def _offsets(dim: int) -> np.ndarray:
    if dim not in _OFFSETS_CACHE:
        _OFFSETS_CACHE[dim] = np.array(
            list(itertools.product((-1.0, 0.0, 1.0), repeat=dim))
        )
    return _OFFSETS_CACHE[dim]


def torus_dist(split: HyperbolicSplitting, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Adapted-norm torus distance, broadcast over leading axes."""
    d = torus_diff(x, y)
    cands = d[..., None, :] + _offsets(split.dim)
    return np.min(split.adapted_norm(cands), axis=-1)


def euclid_torus_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean torus distance (componentwise wrap minimizes it exactly)."""
    return np.linalg.norm(torus_diff(x, y), axis=-1)


def kronecker_points(dim: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy sample of the torus (R_d sequence).

    Uses the additive recurrence x_i = frac(i * alpha) with alpha built from
    the generalized golden ratio, which equidistributes well in any dimension
    and is reproducible bit-for-bit.
    """
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alpha = np.array([(1.0 / phi) ** (j + 1) for j in range(dim)])
    idx = np.arange(1, count + 1, dtype=float)[:, None]
    return wrap(idx * alpha)


def grid_points(dim: int, per_axis: int) -> np.ndarray:
    """Regular lattice with per_axis points per coordinate."""
    axes = [np.arange(per_axis, dtype=float) / per_axis] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
