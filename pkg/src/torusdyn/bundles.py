"""Invariant bundle frames for perturbed maps via cone-field iteration.

The base splitting orders eigen-blocks by rate.  For a dominated perturbation
the sum of the top blocks (fastest) is forward-attracting among planes of its
dimension, and the sum of the bottom blocks is backward-attracting; a middle
block is recovered as the intersection of its top-sum and bottom-sum planes.
Seeds come from the base splitting, propagation uses the perturbed Jacobians,
and convergence is geometric at the domination ratio, so a fixed window
suffices at any requested tolerance.

All routines are batched over points; frames on periodic cycles reuse the
cycle's Jacobians for all laps.
"""

from __future__ import annotations

import numpy as np

from .linear import HyperbolicSplitting
from .torus import wrap


def _orthonormalize(q: np.ndarray) -> np.ndarray:
    """Batched QR with deterministic signs (positive R diagonal)."""
    qq, rr = np.linalg.qr(q)
    d = np.sign(np.diagonal(rr, axis1=-2, axis2=-1))
    d = np.where(d == 0.0, 1.0, d)
    return qq * d[..., None, :]


def _block_offsets(split: HyperbolicSplitting):
    dims = [d for _, d in split.eigen_groups]
    offs = np.cumsum([0] + dims)
    return dims, offs


def intersect_subspaces(u: np.ndarray, v: np.ndarray, dim: int) -> np.ndarray:
    """Batched intersection of column spans u (..,n,p) and v (..,n,q).

    Returns an orthonormal (..., n, dim) basis of span(u) & span(v) via the
    nullspace of [u, -v].
    """
    w = np.concatenate([u, -v], axis=-1)
    _, _, vh = np.linalg.svd(w, full_matrices=True)
    alpha = vh[..., -dim:, : u.shape[-1]]          # (..., dim, p)
    x = np.einsum("...np,...dp->...nd", u, alpha)
    return _orthonormalize(x)


def _forward_orbit(g, points, steps):
    out = [np.asarray(points, dtype=float)]
    z = out[0]
    for _ in range(steps):
        z = g.eval(z)
        out.append(z)
    return out


def _backward_orbit(g, points, steps):
    out = [np.asarray(points, dtype=float)]
    z = out[0]
    for _ in range(steps):
        z = g.inverse_eval(z)
        out.append(z)
    return out


def top_plane_at(g, split, points, first_block, window, _orbits=None):
    """Forward-attracting span of eigen-blocks first_block.. at each point."""
    dims, offs = _block_offsets(split)
    seed = split.basis[:, offs[first_block]:]
    bwd = _backward_orbit(g, points, window) if _orbits is None else _orbits
    m = bwd[0].shape[0] if bwd[0].ndim > 1 else 1
    q = np.broadcast_to(seed, (m, seed.shape[0], seed.shape[1])).copy()
    q = _orthonormalize(q)
    for i in range(window, 0, -1):
        jac = g.derivative(bwd[i])
        q = _orthonormalize(jac @ q)
    return q


def bottom_plane_at(g, split, points, last_block, window, _orbits=None):
    """Backward-attracting span of eigen-blocks ..last_block at each point."""
    dims, offs = _block_offsets(split)
    seed = split.basis[:, : offs[last_block + 1]]
    fwd = _forward_orbit(g, points, window) if _orbits is None else _orbits
    m = fwd[0].shape[0] if fwd[0].ndim > 1 else 1
    q = np.broadcast_to(seed, (m, seed.shape[0], seed.shape[1])).copy()
    q = _orthonormalize(q)
    for i in range(window, 0, -1):
        jac = g.derivative(fwd[i - 1])
        q = _orthonormalize(np.linalg.solve(jac, q))
    return q


def block_directions_at(g, split, points, block, window=48):
    """Invariant directions of one eigen-block at each point, (m, n, d)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dims, offs = _block_offsets(split)
    k = len(dims)
    if block == 0:
        return bottom_plane_at(g, split, points, 0, window)
    if block == k - 1:
        return top_plane_at(g, split, points, k - 1, window)
    top = top_plane_at(g, split, points, block, window)
    bot = bottom_plane_at(g, split, points, block, window)
    return intersect_subspaces(top, bot, dims[block])


def frames_at(g, split, points, window=48):
    """Full invariant frames (m, n, n) with block columns in rate order."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dims, offs = _block_offsets(split)
    k = len(dims)
    fwd = _forward_orbit(g, points, window)
    bwd = _backward_orbit(g, points, window)
    tops = {j: top_plane_at(g, split, points, j, window, _orbits=bwd) for j in range(1, k)}
    bots = {j: bottom_plane_at(g, split, points, j, window, _orbits=fwd) for j in range(0, k - 1)}
    cols = []
    for b in range(k):
        if b == 0:
            cols.append(bots[0])
        elif b == k - 1:
            cols.append(tops[k - 1])
        else:
            cols.append(intersect_subspaces(tops[b], bots[b], dims[b]))
    return np.concatenate(cols, axis=-1)


# ---------------------------------------------------------------------------
# Frames along periodic cycles (batched over many cycles of equal length)
# ---------------------------------------------------------------------------

def frames_on_cycles(g, split, cycles: np.ndarray, window=48):
    """Invariant frames at every point of periodic orbits.

    cycles: (B, L, n) with cycles[:, (i+1) % L] = g(cycles[:, i]).
    Returns frames (B, L, n, n) and their inverses.
    """
    b, ell, n = cycles.shape
    dims, offs = _block_offsets(split)
    k = len(dims)
    flat = cycles.reshape(b * ell, n)
    jac = g.derivative(flat).reshape(b, ell, n, n)

    laps = int(np.ceil(window / ell)) + 1
    total = laps * ell

    tops = {}
    for j in range(1, k):
        seed = split.basis[:, offs[j]:]
        q = np.broadcast_to(seed, (b, n, seed.shape[1])).copy()
        q = _orthonormalize(q)
        rec = [None] * ell
        for t in range(total + ell):
            pos = t % ell
            q = _orthonormalize(jac[:, pos] @ q)
            if t >= total - 1:
                rec[(pos + 1) % ell] = q
        tops[j] = rec  # rec[i] = plane at cycles[:, i]

    bots = {}
    for j in range(0, k - 1):
        seed = split.basis[:, : offs[j + 1]]
        q = np.broadcast_to(seed, (b, n, seed.shape[1])).copy()
        q = _orthonormalize(q)
        rec = [None] * ell
        for t in range(total + ell):
            pos = (-t) % ell           # walk backward through the cycle
            prev = (pos - 1) % ell
            q = _orthonormalize(np.linalg.solve(jac[:, prev], q))
            if t >= total - 1:
                rec[prev] = q
        bots[j] = rec

    frames = np.empty((b, ell, n, n))
    for i in range(ell):
        cols = []
        for blk in range(k):
            if blk == 0:
                cols.append(bots[0][i])
            elif blk == k - 1:
                cols.append(tops[k - 1][i])
            else:
                cols.append(intersect_subspaces(tops[blk][i], bots[blk][i], dims[blk]))
        frames[:, i] = np.concatenate(cols, axis=-1)
    return frames, np.linalg.inv(frames)


def central_offset_probe(g, split, cycles, central_col, offsets, horizon, cutoff, window=48):
    """Track a scalar offset along the central direction around cycles.

    Starting from cycles[:, 0] displaced by ``offsets`` along the central
    frame column, iterates the map and re-projects the displaced point onto
    the central direction at each cycle point (discarding transverse
    components, which kills the fast-direction error growth).  Returns a
    boolean array: True where the offset magnitude exceeded ``cutoff`` within
    the horizon (the probe separates from the fiber).
    """
    from .torus import torus_diff

    cycles = np.asarray(cycles, dtype=float)
    b, ell, n = cycles.shape
    frames, frame_inv = frames_on_cycles(g, split, cycles, window)
    d = np.asarray(offsets, dtype=float).copy()
    separated = np.zeros(b, dtype=bool)
    for k in range(horizon):
        pos = k % ell
        nxt = (k + 1) % ell
        e_c = frames[:, pos, :, central_col]
        y = wrap(cycles[:, pos] + d[:, None] * e_c)
        y1 = g.eval(y)
        diff = torus_diff(y1, cycles[:, nxt])
        coords = np.einsum("bij,bj->bi", frame_inv[:, nxt], diff)
        d = coords[:, central_col]
        separated |= np.abs(d) > cutoff
        if np.all(separated):
            break
    return separated
