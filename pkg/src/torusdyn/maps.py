"""Torus maps: the linear automorphism and its local bump perturbations.

Every map evaluates in batch: ``eval``/``eval_lift`` accept arrays of shape
(..., n) and ``derivative`` returns (..., n, n).  Lifts commute with integer
translations exactly (the integer part of the input is handled in exact float
integer arithmetic, the fractional part alone feeds the periodic bump).

The three perturbation families modify a linear Anosov map inside small
balls only:

* ``mane_da``    -- pitchfork-type modification along the weakest unstable
                    direction; the center keeps a fixed point whose central
                    derivative drops below 1, flanked by two new fixed points
                    with central derivative above 1.
* ``mixed_da``   -- the same modification along the weak stable direction at
                    one fixed point and along the weak unstable direction at
                    another.
* ``hopf_da``    -- radial modification of a complex-stable plane making the
                    center a planar repeller surrounded by an invariant
                    attracting circle.

All bumps use a C^2 polynomial smoothstep profile, so derivatives are exact
polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import C0Violation, MapConstructionError, NoFiniteM, StrengthTooWeak
from .linear import HyperbolicSplitting, ToralAutomorphism, int_inverse_unimodular, spectral_split
from .torus import euclid_torus_dist, kronecker_points, torus_diff, wrap

MANE = "MANE"
MIXED = "MIXED"
HOPF = "HOPF"


@dataclass(frozen=True)
class DAParams:
    """Parameters of a derived-from-Anosov perturbation.

    ``center`` (and ``center2`` for the mixed variant) must be fixed points
    of the base automorphism.  ``radius`` bounds both the support ball and
    the C0 distance to the base; ``strength`` is the drop (or rise) of the
    central derivative at the center, and must exceed the bifurcation
    threshold of its variant.
    """

    variant: str
    center: tuple
    radius: float
    strength: float
    center2: tuple | None = None
    profile: str = "SMOOTHSTEP"

    def describe(self) -> dict:
        d = {
            "variant": self.variant,
            "center": ",".join(repr(float(c)) for c in self.center),
            "radius": repr(float(self.radius)),
            "strength": repr(float(self.strength)),
            "profile": self.profile,
        }
        if self.center2 is not None:
            d["center2"] = ",".join(repr(float(c)) for c in self.center2)
        return d


# ---------------------------------------------------------------------------
# C^2 smoothstep profile
# ---------------------------------------------------------------------------

def smoothstep(x: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 at x<=0, 1 at x>=1, C^2 monotone in between."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smoothstep_int(x: np.ndarray) -> np.ndarray:
    """Antiderivative of the quintic smoothstep with value 0 at 0."""
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, 0.0, 1.0)
    inner = xc**4 * (xc * (xc - 3.0) + 2.5)
    return inner + np.maximum(x - 1.0, 0.0)


def fall(u: np.ndarray) -> np.ndarray:
    """Quintic falloff: 1 at u<=0, 0 at u>=1, C^2 monotone in between."""
    return 1.0 - smoothstep(u)


def fall_deriv(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, 0.0, 1.0)
    return np.where(inside, -30.0 * uc * uc * (uc - 1.0) * (uc - 1.0), 0.0)


def _solve_fall(target: float) -> float:
    """Solve fall(u) = target on [0, 1] by bisection (fall is decreasing)."""
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fall(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class FlipProfile:
    """Odd central profile V on [-1, 1]: amp(t) = coeff * t_r * sgn(t) V(|t|/t_r).

    Subclasses provide V and V' on [0, 1] with V(0) = 0, V'(0) = 1 and
    V(tau) = 0 for tau >= 1; V/tau must be strictly decreasing so the flanking
    fixed-point equation has a unique positive root.
    """

    def v(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dv(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def max_height(self) -> float:
        tau = np.linspace(0.0, 1.0, 4001)
        return float(np.max(self.v(tau)))

    def min_slope(self) -> float:
        tau = np.linspace(0.0, 1.0, 4001)
        return float(np.min(self.dv(tau)))

    def solve_crossing(self, ratio: float) -> float:
        """First tau > 0 with V(tau) = ratio * tau (bisection after scan)."""
        tau = np.linspace(1e-9, 1.0, 4001)
        psi = self.v(tau) - ratio * tau
        sign_change = np.nonzero((psi[:-1] > 0) & (psi[1:] <= 0))[0]
        if psi[0] <= 0 or len(sign_change) == 0:
            return float("nan")
        lo, hi = tau[sign_change[0]], tau[sign_change[0] + 1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.v(np.array(mid)) - ratio * mid > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


class SmoothstepSquared(FlipProfile):
    """V(tau) = tau * fall(tau^2): the plain C^2 bump.

    Slope dips to about -1.69, so it suits derivative-drop flips (where the
    perturbed rate is base_rate - coeff * V' and stays positive) but not
    derivative-rise flips along weakly contracting directions.
    """

    def v(self, tau):
        tau = np.asarray(tau, dtype=float)
        return tau * fall(tau * tau)

    def dv(self, tau):
        tau = np.asarray(tau, dtype=float)
        u = tau * tau
        return fall(u) + 2.0 * u * fall_deriv(u)


class DescentLimited(FlipProfile):
    """C^2 profile whose slope never drops below -gamma.

    V' falls from 1 to -gamma over [0, gamma] through a smoothstep and climbs
    back to 0 over [gamma, 1]; the choice tau_1 = gamma makes V(1) = 0 exact.
    Needed for rise-type flips: the central rate lambda + coeff * V' stays
    positive as long as coeff * gamma < lambda.
    """

    def __init__(self, gamma: float):
        if not 0.0 < gamma < 0.5:
            raise ValueError("gamma must lie in (0, 0.5)")
        self.gamma = float(gamma)

    def v(self, tau):
        tau = np.asarray(tau, dtype=float)
        g = self.gamma
        head = tau - (1.0 + g) * g * smoothstep_int(tau / g)
        v_g = g * (1.0 - g) / 2.0
        xi = (tau - g) / (1.0 - g)
        tail = v_g - g * ((tau - g) - (1.0 - g) * smoothstep_int(xi))
        out = np.where(tau <= g, head, tail)
        return np.where(tau >= 1.0, 0.0, np.where(tau <= 0.0, 0.0, out))

    def dv(self, tau):
        tau = np.asarray(tau, dtype=float)
        g = self.gamma
        head = 1.0 - (1.0 + g) * smoothstep(tau / g)
        xi = (tau - g) / (1.0 - g)
        tail = -g * (1.0 - smoothstep(xi))
        out = np.where(tau <= g, head, tail)
        return np.where(tau >= 1.0, 0.0, np.where(tau < 0.0, 0.0, out))


# ---------------------------------------------------------------------------
# Base class
# ---------------------------------------------------------------------------

class TorusMap:
    """Evaluable self-map of the torus with lift, derivative, and inverse."""

    dim: int

    def eval_lift(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, x: np.ndarray) -> np.ndarray:
        return wrap(self.eval_lift(np.asarray(x, dtype=float)))

    def derivative(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse_eval(self, y: np.ndarray) -> np.ndarray:
        """Torus inverse by damped Newton on the lift (batched)."""
        y = wrap(y)
        z = self._inverse_guess(y)
        for _ in range(60):
            r = torus_diff(self.eval(z), y)
            err = np.max(np.abs(r))
            if err < 1e-13:
                return z
            step = np.linalg.solve(self.derivative(z), r[..., None])[..., 0]
            z_new = wrap(z - step)
            r_new = torus_diff(self.eval(z_new), y)
            # Per-point halving where the residual grew.
            for _ in range(30):
                worse = np.linalg.norm(r_new, axis=-1) > np.linalg.norm(r, axis=-1)
                if not np.any(worse):
                    break
                step = np.where(worse[..., None], 0.5 * step, step)
                z_new = wrap(z - step)
                r_new = torus_diff(self.eval(z_new), y)
            z = z_new
        raise MapConstructionError("inverse Newton did not converge")

    def _inverse_guess(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearTorusMap(TorusMap):
    """The torus automorphism induced by an integer unimodular matrix."""

    def __init__(self, auto: ToralAutomorphism):
        self.auto = auto
        self.dim = auto.dim
        self._mat = auto.matrix_float
        self._mat_t = self._mat.T.copy()
        self._inv_t = int_inverse_unimodular(auto.matrix).astype(float).T.copy()

    def eval_lift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.floor(x)
        fr = x - xi
        return fr @ self._mat_t + xi @ self._mat_t

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._mat, x.shape[:-1] + (self.dim, self.dim)).copy()

    def inverse_eval(self, y: np.ndarray) -> np.ndarray:
        return wrap(wrap(y) @ self._inv_t)

    def _inverse_guess(self, y: np.ndarray) -> np.ndarray:
        return self.inverse_eval(y)


def linear_map(auto: ToralAutomorphism) -> LinearTorusMap:
    return LinearTorusMap(auto)


# ---------------------------------------------------------------------------
# Bump building blocks
# ---------------------------------------------------------------------------

@dataclass
class CentralBump:
    """One flip-type bump: displacement along a single splitting direction.

    amp(x) = sign * coeff * t_r * sgn(t) * V(|t|/t_r) * fall(|w|^2/w_r^2)
    where t is the coordinate along the bump direction, w the transverse
    coordinate block (both measured from the center), and V the profile.
    The central derivative at the center is base_rate + sign * coeff.
    """

    center: np.ndarray          # (n,)
    direction: np.ndarray       # (n,) basis column, displacement direction
    dual: np.ndarray            # (n,) row extracting the central coordinate
    trans_rows: np.ndarray      # (n-1, n) rows extracting transverse coords
    sign: float                 # -1: derivative drop at center, +1: rise
    coeff: float                # |center rate - base rate|
    t_r: float
    w_r: float
    base_rate: float            # base derivative along the direction
    profile: FlipProfile
    center_rate: float = field(init=False)
    t_star: float = field(init=False)

    def __post_init__(self):
        self.center_rate = self.base_rate + self.sign * self.coeff
        tau_star = self.profile.solve_crossing(abs(self.base_rate - 1.0) / self.coeff)
        self.t_star = self.t_r * tau_star

    def coords(self, delta: np.ndarray):
        t = delta @ self.dual
        w = delta @ self.trans_rows.T
        return t, w

    def _odd_profile(self, t: np.ndarray):
        tau = np.abs(t) / self.t_r
        val = self.t_r * np.sign(t) * self.profile.v(tau)
        slope = self.profile.dv(tau)
        return val, slope

    def amplitude(self, delta: np.ndarray) -> np.ndarray:
        t, w = self.coords(delta)
        val, _ = self._odd_profile(t)
        v = np.sum(w * w, axis=-1) / self.w_r**2
        return self.sign * self.coeff * val * fall(v)

    def amplitude_grad(self, delta: np.ndarray):
        """Returns (amplitude, gradient wrt ambient coordinates)."""
        t, w = self.coords(delta)
        val, slope = self._odd_profile(t)
        v = np.sum(w * w, axis=-1) / self.w_r**2
        fv, dfv = fall(v), fall_deriv(v)
        amp = self.sign * self.coeff * val * fv
        grad = self.sign * self.coeff * (
            (slope * fv)[..., None] * self.dual
            + (val * dfv * 2.0 / self.w_r**2)[..., None] * (w @ self.trans_rows)
        )
        return amp, grad

    def central_map(self, t: np.ndarray) -> np.ndarray:
        """Restriction of the perturbed dynamics to the central line (w = 0)."""
        t = np.asarray(t, dtype=float)
        val, _ = self._odd_profile(t)
        return self.base_rate * t + self.sign * self.coeff * val

    def central_map_deriv(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        _, slope = self._odd_profile(t)
        return self.base_rate + self.sign * self.coeff * slope

    def central_fixed_points(self) -> np.ndarray:
        """Central parameters of all fixed points on the central line."""
        if np.isnan(self.t_star):
            return np.array([0.0])
        return np.array([-self.t_star, 0.0, self.t_star])

    def sup_amplitude(self) -> float:
        return float(self.coeff * self.t_r * self.profile.max_height() * (1.0 + 1e-9))


class _PerturbedTorusMap(TorusMap):
    """Linear base plus a periodic displacement supported in small balls."""

    def __init__(self, auto: ToralAutomorphism, split: HyperbolicSplitting, params: DAParams):
        self.auto = auto
        self.split = split
        self.params = params
        self.dim = auto.dim
        self._mat = auto.matrix_float
        self._mat_t = self._mat.T.copy()
        self._inv_t = int_inverse_unimodular(auto.matrix).astype(float).T.copy()
        self.block_dims = tuple(d for _, d in split.eigen_groups)
        self.variant = params.variant

    # displacement of the wrapped point, (..., n)
    def displacement(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def displacement_jacobian(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_lift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.floor(x)
        fr = x - xi
        return fr @ self._mat_t + xi @ self._mat_t + self.displacement(fr)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        z = wrap(x)
        return self._mat + self.displacement_jacobian(z)

    def _inverse_guess(self, y: np.ndarray) -> np.ndarray:
        return wrap(wrap(y) @ self._inv_t)

    def _validate_common(self, centers):
        mat = self._mat
        for c in centers:
            image = wrap(mat @ np.asarray(c, dtype=float))
            if euclid_torus_dist(image, np.asarray(c, dtype=float)) > 1e-10:
                raise MapConstructionError(f"center {c} is not a fixed point of the base map")
        if self.c0_bound >= self.params.radius:
            raise C0Violation(
                f"sup displacement {self.c0_bound:.3g} reaches the ball radius {self.params.radius}"
            )


def _bump_scales(split: HyperbolicSplitting, radius: float) -> float:
    """Coordinate half-width keeping the support box inside the radius ball."""
    kappa = np.linalg.norm(split.basis, 2)
    return 0.95 * radius / (np.sqrt(2.0) * kappa)


def _make_bump(split, center, col_index, sign, coeff, radius, profile) -> CentralBump:
    n = split.dim
    direction = split.basis[:, col_index].copy()
    dual = split.basis_inv[col_index, :].copy()
    trans_rows = np.delete(split.basis_inv, col_index, axis=0)
    base_rate = float(split.coord_matrix[col_index, col_index])
    half = _bump_scales(split, radius)
    return CentralBump(
        center=np.asarray(center, dtype=float),
        direction=direction,
        dual=dual,
        trans_rows=trans_rows.reshape(n - 1, n),
        sign=sign,
        coeff=coeff,
        t_r=half,
        w_r=half,
        base_rate=base_rate,
        profile=profile,
    )


class ManeDAMap(_PerturbedTorusMap):
    """Flip-type perturbation along the weakest unstable direction.

    ``strength`` in (0, 1) is how far the central derivative at the center is
    pushed below the bifurcation value: the center keeps rate 1 - strength,
    the two flanking fixed points expand.
    """

    def __init__(self, auto, split, params):
        super().__init__(auto, split, params)
        groups = split.eigen_groups
        n_stable_groups = sum(1 for m, _ in groups if m < 1.0)
        if split.dim < 3 or groups[n_stable_groups][1] != 1:
            raise MapConstructionError("need a 1-dimensional weakest unstable direction")
        if len(groups) - n_stable_groups < 2:
            raise MapConstructionError("need a stronger unstable direction above the central one")
        col = split.stable_dim  # first unstable column
        lam_c = float(split.coord_matrix[col, col])
        if lam_c <= 1.0:
            raise MapConstructionError("central direction must expand with a positive rate")
        if params.strength <= 0.0:
            raise StrengthTooWeak(
                f"strength {params.strength} does not push the central rate below 1"
            )
        sigma0 = 1.0 - params.strength
        if sigma0 <= split.lambda_s * (1.0 + 1e-6):
            raise MapConstructionError(
                "central rate must stay above lambda_s for a dominated splitting"
            )
        self.central_index = col
        self.sigma0 = sigma0
        self.bump = _make_bump(split, params.center, col, -1.0, lam_c - sigma0,
                               params.radius, SmoothstepSquared())
        self.bumps = (self.bump,)
        self.central_blocks = (n_stable_groups,)
        self.c0_bound = self.bump.sup_amplitude()
        self.support_radius = np.linalg.norm(split.basis, 2) * np.sqrt(2.0) * self.bump.t_r
        self._validate_common([params.center])

    def displacement(self, z):
        delta = torus_diff(z, self.bump.center)
        amp = self.bump.amplitude(delta)
        return amp[..., None] * self.bump.direction

    def displacement_jacobian(self, z):
        delta = torus_diff(z, self.bump.center)
        _, grad = self.bump.amplitude_grad(delta)
        return self.bump.direction[:, None] * grad[..., None, :]


class MixedDAMap(_PerturbedTorusMap):
    """Flips along the weak stable direction at p and weak unstable at q."""

    def __init__(self, auto, split, params):
        super().__init__(auto, split, params)
        if params.center2 is None:
            raise MapConstructionError("mixed variant needs a second center")
        groups = split.eigen_groups
        n_stable_groups = sum(1 for m, _ in groups if m < 1.0)
        if split.dim < 4 or n_stable_groups < 2 or len(groups) - n_stable_groups < 2:
            raise MapConstructionError("need >= 2 stable and >= 2 unstable directions")
        if groups[n_stable_groups - 1][1] != 1 or groups[n_stable_groups][1] != 1:
            raise MapConstructionError("weak stable and weak unstable directions must be 1-dimensional")
        col_s = split.stable_dim - 1
        col_u = split.stable_dim
        lam_s = float(split.coord_matrix[col_s, col_s])
        lam_u = float(split.coord_matrix[col_u, col_u])
        if lam_s <= 0.0 or lam_u <= 1.0:
            raise MapConstructionError("weak rates must be positive with lam_u > 1")
        s = params.strength
        if s <= max(1.0 - lam_s, lam_u - 1.0):
            raise StrengthTooWeak(
                f"strength {s} <= flip threshold {max(1.0 - lam_s, lam_u - 1.0):.6g}"
            )
        if lam_u - s <= 0.0:
            raise MapConstructionError("strength too large: unstable-center map would fold")
        if lam_s + s >= lam_u * 0.99:
            raise MapConstructionError("stable-center rate must stay dominated by lam_u")
        p = np.asarray(params.center, dtype=float)
        q = np.asarray(params.center2, dtype=float)
        if euclid_torus_dist(p, q) <= 2.2 * params.radius:
            raise MapConstructionError("perturbation balls overlap")
        self.bump_p = _make_bump(split, p, col_s, +1.0, s, params.radius)
        self.bump_q = _make_bump(split, q, col_u, -1.0, s, params.radius)
        self.bumps = (self.bump_p, self.bump_q)
        self.central_blocks = (n_stable_groups - 1, n_stable_groups)
        self.sigma_cs_center = lam_s + s
        self.sigma_cu_center = lam_u - s
        self.c0_bound = max(b.sup_amplitude() for b in self.bumps)
        self.support_radius = np.linalg.norm(split.basis, 2) * np.sqrt(2.0) * self.bump_p.t_r
        self._validate_common([p, q])

    def displacement(self, z):
        out = np.zeros(np.broadcast_shapes(np.shape(z), (self.dim,)), dtype=float)
        for b in self.bumps:
            delta = torus_diff(z, b.center)
            out = out + b.amplitude(delta)[..., None] * b.direction
        return out

    def displacement_jacobian(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1] + (self.dim, self.dim), dtype=float)
        for b in self.bumps:
            delta = torus_diff(z, b.center)
            _, grad = b.amplitude_grad(delta)
            out = out + b.direction[:, None] * grad[..., None, :]
        return out


class HopfDAMap(_PerturbedTorusMap):
    """Radial perturbation making the center a planar repeller with an
    invariant attracting circle in the complex-stable plane."""

    def __init__(self, auto, split, params):
        super().__init__(auto, split, params)
        groups = split.eigen_groups
        if split.dim != 3 or groups[0][1] != 2 or split.stable_dim != 2:
            raise MapConstructionError("need a 2-dimensional complex stable plane in dimension 3")
        self.rho0 = float(groups[0][0])
        s = params.strength
        if s * self.rho0 <= 1.0 - self.rho0:
            raise StrengthTooWeak(
                f"strength {s} <= Hopf threshold {(1.0 - self.rho0) / self.rho0:.6g}"
            )
        half = _bump_scales(split, params.radius)
        self.t_r = half
        self.w_r = half
        self.center = np.asarray(params.center, dtype=float)
        self.plane_cols = split.basis[:, :2].copy()          # (n, 2)
        self.plane_rows = split.basis_inv[:2, :].copy()       # (2, n)
        self.axis_dual = split.basis_inv[2, :].copy()
        self.plane_block = split.coord_matrix[:2, :2].copy()  # scaled rotation
        # ambient linear operator acting like A on the plane coords, 0 across
        self._plane_op = self.plane_cols @ self.plane_block @ self.plane_rows
        # invariant circle radius in plane coordinates
        target = (1.0 / self.rho0 - 1.0) / s
        if not 0.0 < target < 1.0:
            raise StrengthTooWeak("no invariant circle inside the bump support")
        self.circle_radius = self.w_r * np.sqrt(_solve_fall(target))
        # radial map must stay monotone (diffeomorphism check)
        rr = np.linspace(0.0, self.w_r, 4001)
        dr = self._radial_deriv(rr)
        if np.min(dr) <= 0.0:
            raise MapConstructionError("radial factor folds; reduce strength")
        tau = np.linspace(0.0, 1.0, 4001)
        sup_amp = self.rho0 * s * self.w_r * np.max(tau * fall(tau * tau))
        self.c0_bound = float(sup_amp * (1.0 + 1e-9))
        self.central_blocks = (0,)
        self.support_radius = np.linalg.norm(split.basis, 2) * np.sqrt(2.0) * half
        self._validate_common([params.center])

    def _phi(self, z):
        """Multiplier bump s*M(u)*beta(v) and the pieces needed for grads."""
        delta = torus_diff(z, self.center)
        w = delta @ self.plane_rows.T
        t = delta @ self.axis_dual
        u = np.sum(w * w, axis=-1) / self.w_r**2
        v = (t / self.t_r) ** 2
        return delta, w, t, u, v

    def radial_map(self, r: np.ndarray) -> np.ndarray:
        """Planar radius dynamics on the invariant plane through the center."""
        r = np.asarray(r, dtype=float)
        return self.rho0 * r * (1.0 + self.params.strength * fall(r * r / self.w_r**2))

    def _radial_deriv(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        u = r * r / self.w_r**2
        s = self.params.strength
        return self.rho0 * (1.0 + s * fall(u) + 2.0 * s * u * fall_deriv(u))

    def displacement(self, z):
        delta, w, t, u, v = self._phi(z)
        s = self.params.strength
        phi = s * fall(u) * fall(v)
        planar = delta @ self._plane_op.T
        return phi[..., None] * planar

    def displacement_jacobian(self, z):
        delta, w, t, u, v = self._phi(z)
        s = self.params.strength
        fu, fv = fall(u), fall(v)
        dfu, dfv = fall_deriv(u), fall_deriv(v)
        phi = s * fu * fv
        planar = delta @ self._plane_op.T                     # (..., n)
        grad_phi = s * (
            (dfu * fv * 2.0 / self.w_r**2)[..., None] * (w @ self.plane_rows)
            + (fu * dfv * 2.0 * t / self.t_r**2)[..., None] * self.axis_dual
        )
        eye_term = phi[..., None, None] * self._plane_op
        rank_term = planar[..., :, None] * grad_phi[..., None, :]
        return eye_term + rank_term


def mane_da(auto: ToralAutomorphism, split: HyperbolicSplitting, params: DAParams) -> ManeDAMap:
    if params.variant != MANE:
        raise ValueError("params.variant must be MANE")
    return ManeDAMap(auto, split, params)


def mixed_da(auto: ToralAutomorphism, split: HyperbolicSplitting, params: DAParams) -> MixedDAMap:
    if params.variant != MIXED:
        raise ValueError("params.variant must be MIXED")
    return MixedDAMap(auto, split, params)


def hopf_da(auto: ToralAutomorphism, params: DAParams, split: HyperbolicSplitting | None = None) -> HopfDAMap:
    if params.variant != HOPF:
        raise ValueError("params.variant must be HOPF")
    if split is None:
        split = spectral_split(auto)
    return HopfDAMap(auto, split, params)


# ---------------------------------------------------------------------------
# C0 distance and the (H3) setup report
# ---------------------------------------------------------------------------

def c0_distance(f: TorusMap, g: TorusMap, samples: int = 20000,
                split: HyperbolicSplitting | None = None) -> float:
    """Sup of dist(f(x), g(x)) over a deterministic low-discrepancy sample.

    A lower bound on the true C0 distance; reported together with the sample
    count by callers that persist it.
    """
    if f.dim != g.dim:
        raise ValueError("maps act on different tori")
    pts = kronecker_points(f.dim, samples)
    extra = []
    for m in (f, g):
        for b in getattr(m, "bumps", ()):  # refine near supports
            extra.append(wrap(b.center + 0.2 * m.support_radius * kronecker_points(f.dim, 500)))
        if hasattr(m, "center") and hasattr(m, "w_r"):
            extra.append(wrap(np.asarray(m.center) + 0.2 * m.support_radius * kronecker_points(f.dim, 500)))
    if extra:
        pts = np.vstack([pts] + extra)
    fx = f.eval(pts)
    gx = g.eval(pts)
    if split is not None:
        from .torus import torus_dist

        return float(np.max(torus_dist(split, fx, gx)))
    return float(np.max(euclid_torus_dist(fx, gx)))


@dataclass(frozen=True)
class H3Report:
    """Quantities of the trivial-fiber setup check.

    sigma: inf of the central derivative rate (expansion side); sigma_sup_cs
    is the sup of the central-stable rate (mixed variant only).  m is the
    smallest power restoring expansion, rho the ball radius keeping Haar mass
    of the complement >= 1 - 1/(2m), and ok records 2*C*r < rho/2 with
    C = 1/(1-a) and r the certified C0 displacement bound.
    """

    sigma: float
    m: int
    rho: float
    ok: bool
    C: float
    r: float
    sigma_sup_cs: float | None = None


_BALL_VOLUME = {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0, 4: np.pi**2 / 2.0}


def _haar_ball_radius(dim: int, mass: float) -> float:
    rho = (mass / _BALL_VOLUME[dim]) ** (1.0 / dim)
    return min(rho, 0.5)


def verify_h3_setup(g: TorusMap, split: HyperbolicSplitting, p, r: float,
                    grid: int = 4096, window: int = 48) -> H3Report:
    """Estimate the quantities controlling fiber triviality for a DA map.

    sigma is the grid minimum of the derivative rate along the computed
    central direction; m the first power j with sigma * lambda_u^j > 1
    (for the mixed variant also sigma_sup_cs * lambda_s^j < 1); rho solves
    Haar(ball) = 1/(2m) using that the natural invariant measure of the
    linear base is Haar.
    """
    lam_u = split.lambda_u
    lam_s = split.lambda_s
    pts = np.vstack([kronecker_points(g.dim, grid), np.asarray(p, dtype=float)[None, :]])
    for b in getattr(g, "bumps", ()):
        line = b.center + np.linspace(-1.0, 1.0, 101)[:, None] * b.t_r * b.direction
        pts = np.vstack([pts, wrap(line)])

    if isinstance(g, LinearTorusMap):
        sigma = lam_u
        sigma_sup = None
    elif isinstance(g, MixedDAMap):
        rates_cs = _direction_rates(g, split, pts, g.central_blocks[0], window)
        rates_cu = _direction_rates(g, split, pts, g.central_blocks[1], window)
        sigma = float(np.min(rates_cu))
        sigma_sup = float(np.max(rates_cs))
    else:
        rates = _direction_rates(g, split, pts, g.central_blocks[0], window)
        sigma = float(np.min(rates))
        sigma_sup = None

    if sigma <= 1e-12:
        raise NoFiniteM("central rate vanishes; no finite power restores expansion")
    m = 1
    while sigma * lam_u**m <= 1.0 or (sigma_sup is not None and sigma_sup * lam_s**m >= 1.0):
        m += 1
        if m > 10_000:
            raise NoFiniteM("no finite power satisfies the rate inequalities")
    rho = _haar_ball_radius(g.dim, 1.0 / (2.0 * m))
    c_const = 1.0 / (1.0 - split.a)
    r_used = float(getattr(g, "c0_bound", r))
    ok = 2.0 * c_const * r_used < rho / 2.0
    return H3Report(sigma=sigma, m=m, rho=float(rho), ok=bool(ok), C=float(c_const),
                    r=r_used, sigma_sup_cs=sigma_sup)


def _direction_rates(g, split, pts, block, window):
    from .bundles import block_directions_at

    dirs = block_directions_at(g, split, pts, block, window)  # (m, n, d)
    if dirs.shape[-1] != 1:
        raise ValueError("rate estimation needs a 1-dimensional central direction")
    img = np.einsum("mij,mj->mi", g.derivative(pts), dirs[..., 0])
    num = split.adapted_norm(img)
    den = split.adapted_norm(dirs[..., 0])
    return num / den
