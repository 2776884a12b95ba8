"""Constructive shadowing for hyperbolic linear maps and the semiconjugacy.

A finite pseudo-orbit {x_k}, k = -N..N, with defect r (adapted norm) is
shadowed by the point whose stable coordinates equal the N-fold forward image
of the first point's stable part and whose unstable coordinates equal the
N-fold backward image of the last point's unstable part.  Within the window
the deviation of the true orbit from the pseudo-orbit is bounded by r/(1-a)
exactly (each block telescopes into a geometric sum of defect terms); the
reported certificate adds a geometric tail covering the ambiguity of
extending beyond the window.

Deviations are measured blockwise (stable part propagated forward, unstable
part backward), which evaluates the same adapted norms as iterating the
shadow point directly but stays numerically stable over long windows.

The semiconjugacy h with f.h = h.g for a perturbed map g is evaluated by
shadowing the g-orbit of a point under the linear base.  Writing the lift of
g as A + p with p periodic, the shadow point of the orbit segment is

    H(x) = x - sum_{j=0}^{N-1} A^j P_s p(z_{-1-j}) + sum_{j=1}^{N} A^-j P_u p(z_{j-1})

with z_k the torus orbit of x under g; every term is small, so the sums are
computed without cancellation at any window length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PrecisionUnreachable, WindowTooShort
from .linear import HyperbolicSplitting, ToralAutomorphism
from .maps import TorusMap, c0_distance
from .torus import torus_diff, torus_dist, wrap


@dataclass(frozen=True)
class PseudoOrbit:
    """Finite sequence x_k, k = -n_minus..n_plus, with adapted-norm defect."""

    points: np.ndarray      # (L, n)
    defect: float
    n_minus: int
    n_plus: int

    @property
    def length(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ShadowResult:
    point: np.ndarray
    certified_bound: float
    max_observed_deviation: float
    truncation_tail: float
    defect: float
    n_minus: int
    n_plus: int


def defect(auto: ToralAutomorphism, split: HyperbolicSplitting, seq: np.ndarray) -> float:
    """Sup of consecutive adapted-norm deviations ||A x_k - x_{k+1}||."""
    seq = np.asarray(seq, dtype=float)
    if seq.shape[0] < 2:
        raise ValueError("need at least two points")
    img = seq[:-1] @ auto.matrix_float.T
    return float(np.max(split.adapted_norm(img - seq[1:])))


def make_pseudo_orbit(auto, split, points, defect_value=None) -> PseudoOrbit:
    points = np.asarray(points, dtype=float)
    r = defect(auto, split, points) if defect_value is None else float(defect_value)
    n_minus = (points.shape[0] - 1) // 2
    n_plus = points.shape[0] - 1 - n_minus
    return PseudoOrbit(points=points, defect=r, n_minus=n_minus, n_plus=n_plus)


def bounded_pseudo_orbit(auto, split, r: float, length: int, rng: np.random.Generator) -> PseudoOrbit:
    """Random pseudo-orbit with defect exactly r that stays bounded.

    The defect sequence is sampled freely with adapted norm r; the points are
    then the bounded solution of x_{k+1} = A x_k - e_k (stable block solved
    forward, unstable block backward), so no coordinate ever exceeds a few
    multiples of r/(1-a).
    """
    s = split.stable_dim
    n = split.dim
    k = length - 1
    es = rng.normal(size=(k, s))
    eu = rng.normal(size=(k, n - s))
    ns = np.linalg.norm(es, axis=1, keepdims=True)
    nu = np.linalg.norm(eu, axis=1, keepdims=True)
    es = es / np.where(ns == 0, 1.0, ns)
    eu = eu / np.where(nu == 0, 1.0, nu)
    scale_s = np.where(rng.random(size=(k, 1)) < 0.5, 1.0, rng.random(size=(k, 1)))
    scale_u = np.where(scale_s == 1.0, rng.random(size=(k, 1)), 1.0)
    es *= r * scale_s
    eu *= r * scale_u

    ds, du_inv = split.stable_block, split.unstable_block_inv
    xs = np.empty((length, s))
    xu = np.empty((length, n - s))
    xs[0] = r * rng.normal(size=s) * 0.1
    for i in range(k):
        xs[i + 1] = ds @ xs[i] - es[i]
    xu[-1] = r * rng.normal(size=n - s) * 0.1
    for i in range(k - 1, -1, -1):
        xu[i] = du_inv @ (xu[i + 1] + eu[i])
    points = np.hstack([xs, xu]) @ split.basis.T
    return make_pseudo_orbit(auto, split, points)


def shadow(auto: ToralAutomorphism, split: HyperbolicSplitting, po: PseudoOrbit,
           precision: float | None = None) -> ShadowResult:
    """Shadow a pseudo-orbit; certify r/(1-a) plus a truncation tail.

    Raises:
        WindowTooShort: if ``precision`` is given and the tail exceeds it.
    """
    a = split.a
    r = po.defect
    s = split.stable_dim
    coords = po.points @ split.basis_inv.T
    cs, cu = coords[:, :s], coords[:, s:]
    ds, du_inv = split.stable_block, split.unstable_block_inv

    # Stable part forward from the left edge; record deviations per index.
    vs = cs[0].copy()
    dev_s = np.empty((po.length, s))
    dev_s[0] = 0.0
    vs_store = np.empty((po.length, s))
    vs_store[0] = vs
    for i in range(1, po.length):
        vs = ds @ vs
        vs_store[i] = vs
        dev_s[i] = vs - cs[i]
    # Unstable part backward from the right edge.
    vu = cu[-1].copy()
    vu_store = np.empty((po.length, cu.shape[1]))
    vu_store[-1] = vu
    dev_u = np.empty((po.length, cu.shape[1]))
    dev_u[-1] = 0.0
    for i in range(po.length - 2, -1, -1):
        vu = du_inv @ vu
        vu_store[i] = vu
        dev_u[i] = vu - cu[i]
    dev = np.maximum(np.linalg.norm(dev_s, axis=1), np.linalg.norm(dev_u, axis=1))
    max_obs = float(np.max(dev))

    point = np.concatenate([vs_store[po.n_minus], vu_store[po.n_minus]]) @ split.basis.T
    edge = float(max(split.adapted_norm(po.points[0]), split.adapted_norm(po.points[-1])))
    tail = float(max(a**po.n_minus, a**po.n_plus) * (r / (1.0 - a) + edge))
    if precision is not None and tail > precision:
        raise WindowTooShort(f"truncation tail {tail:.3g} exceeds precision {precision:.3g}")
    certified = r / (1.0 - a) + tail
    return ShadowResult(point=point, certified_bound=float(certified),
                        max_observed_deviation=max_obs, truncation_tail=tail,
                        defect=r, n_minus=po.n_minus, n_plus=po.n_plus)


# ---------------------------------------------------------------------------
# Semiconjugacy with the linear base
# ---------------------------------------------------------------------------

class Semiconjugacy:
    """h with f.h = h.g, evaluated by shadowing g-orbit segments under A.

    ``displacement_bound`` = r/(1-a) bounds dist(h(x), x); the equivariance
    residual dist(f(h(x)), h(g(x))) is bounded by the geometric tail, kept
    below the requested precision by the window choice.
    """

    def __init__(self, auto: ToralAutomorphism, split: HyperbolicSplitting, gmap: TorusMap,
                 window: int, r_bound: float, precision: float):
        self.auto = auto
        self.split = split
        self.gmap = gmap
        self.window = int(window)
        self.r_bound = float(r_bound)
        self.precision = float(precision)
        a = split.a
        self.tail_bound = a**self.window * r_bound / (1.0 - a)
        self.displacement_bound = r_bound / (1.0 - a)
        self.constant = 1.0 / (1.0 - a)
        self._mat_t = auto.matrix_float.T.copy()
        self._cache: dict[bytes, np.ndarray] = {}

    def _perturbation(self, z: np.ndarray) -> np.ndarray:
        """p(z) = G(z) - A z for z in the fundamental domain (periodic)."""
        disp = getattr(self.gmap, "displacement", None)
        if disp is not None:
            return disp(z)
        return self.gmap.eval_lift(z) - z @ self._mat_t

    def evaluate_lift(self, x: np.ndarray) -> np.ndarray:
        """H on lifts: x + correction built from the orbit of wrap(x)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        z0 = wrap(pts)
        n = self.split.dim
        s = self.split.stable_dim
        ds = self.split.stable_block
        du_inv = self.split.unstable_block_inv
        binv = self.split.basis_inv
        nwin = self.window

        if self.r_bound == 0.0 or nwin == 0:
            out = pts.copy()
            return out[0] if single else out

        # stable sum needs p at backward orbit points z_{-1}..z_{-N}
        ps = np.empty((nwin, pts.shape[0], s))
        z = z0
        for j in range(nwin):
            z = self.gmap.inverse_eval(z)
            ps[j] = (self._perturbation(z) @ binv.T)[:, :s]
        acc_s = ps[nwin - 1]
        for j in range(nwin - 2, -1, -1):
            acc_s = acc_s @ ds.T + ps[j]

        # unstable sum needs p at forward orbit points z_0..z_{N-1}
        pu = np.empty((nwin, pts.shape[0], n - s))
        z = z0
        for j in range(nwin):
            pu[j] = (self._perturbation(z) @ binv.T)[:, s:]
            if j + 1 < nwin:
                z = self.gmap.eval(z)
        acc_u = pu[nwin - 1]
        for j in range(nwin - 2, -1, -1):
            acc_u = acc_u @ du_inv.T + pu[j]
        acc_u = acc_u @ du_inv.T

        out = pts - acc_s @ self.split.basis[:, :s].T + acc_u @ self.split.basis[:, s:].T
        return out[0] if single else out

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """h on the torus (cached on exact input bytes)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            key = x.tobytes()
            hit = self._cache.get(key)
            if hit is None:
                hit = wrap(self.evaluate_lift(x))
                self._cache[key] = hit
            return hit
        return wrap(self.evaluate_lift(x))

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Equivariance residual dist(f(h(x)), h(g(x))) per point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lhs = wrap(self.evaluate(x) @ self._mat_t)
        rhs = self.evaluate(self.gmap.eval(x))
        return torus_dist(self.split, lhs, rhs)

    def displacements(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return torus_dist(self.split, self.evaluate(x), wrap(x))


def build_semiconjugacy(auto: ToralAutomorphism, gmap: TorusMap, window: int | None = None,
                        precision: float = 1e-9, split: HyperbolicSplitting | None = None,
                        window_cap: int = 5000) -> Semiconjugacy:
    """Construct h for a map C0-close to the automorphism.

    The window is the smallest N with a^N * r/(1-a) below ``precision``
    (unless given explicitly).

    Raises:
        PrecisionUnreachable: if no window below the cap reaches the precision.
    """
    if split is None:
        from .linear import spectral_split

        split = spectral_split(auto)
    r_bound = getattr(gmap, "c0_bound", None)
    if r_bound is None:
        same = isinstance(gmap, TorusMap) and getattr(gmap, "auto", None) is not None \
            and np.array_equal(getattr(gmap, "auto").matrix, auto.matrix) \
            and not hasattr(gmap, "displacement")
        r_bound = 0.0 if same else 1.05 * c0_distance(linear_from(auto), gmap, split=split)
    a = split.a
    if window is None:
        if r_bound == 0.0:
            window = 0
        else:
            need = precision * (1.0 - a) / r_bound
            window = int(np.ceil(np.log(need) / np.log(a))) + 2
            if window > window_cap:
                raise PrecisionUnreachable(
                    f"window {window} above cap {window_cap} for precision {precision}"
                )
    return Semiconjugacy(auto, split, gmap, window, r_bound, precision)


def linear_from(auto: ToralAutomorphism):
    from .maps import linear_map

    return linear_map(auto)


# ---------------------------------------------------------------------------
# Fiber criterion
# ---------------------------------------------------------------------------

def same_fiber(gmap: TorusMap, split: HyperbolicSplitting, x, y, alpha: float,
               window: int = 60) -> bool:
    """Finite-window surrogate of the fiber criterion.

    True iff dist(g^n x, g^n y) <= alpha/2 in the adapted metric for all
    |n| <= window; points in one fiber pass at every window, and any
    criterion-passer lies in the fiber once 4*C*r < alpha.
    """
    return bool(same_fiber_batch(gmap, split, x, np.atleast_2d(np.asarray(y, float)),
                                 alpha, window)[0])


def same_fiber_batch(gmap: TorusMap, split: HyperbolicSplitting, x, ys, alpha: float,
                     window: int = 60) -> np.ndarray:
    """Vectorized same-fiber test of many candidates against one point."""
    x = np.asarray(x, dtype=float)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    half = alpha / 2.0
    ok = torus_dist(split, ys, x) <= half
    for direction in ("fwd", "bwd"):
        zx = x.copy()
        zy = ys.copy()
        for _ in range(window):
            if direction == "fwd":
                zx = gmap.eval(zx)
                zy[ok] = gmap.eval(zy[ok])
            else:
                zx = gmap.inverse_eval(zx)
                zy[ok] = gmap.inverse_eval(zy[ok])
            ok[ok] = torus_dist(split, zy[ok], zx) <= half
            if not np.any(ok):
                return ok
    return ok
