"""Integer unimodular matrices, hyperbolic splittings, and adapted norms.

A hyperbolic toral automorphism is an integer matrix with |det| = 1 and no
eigenvalue on the unit circle.  The splitting machinery produces real bases
for the stable and unstable subspaces (complex pairs are stored as the real
2-dimensional invariant plane spanned by real and imaginary parts), the
associated projectors, and the contraction factor ``a`` of the adapted norm

    ||x|| = max(||x_s||_s, ||x_u||_u)

in which ||A|E^s|| < a < 1 and ||A^-1|E^u|| < a < 1 hold with machine-checkable
margins.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import NotHyperbolic, NotUnimodular

# Eigenvalue moduli must differ from 1 by more than this, else NotHyperbolic.
UNIT_MODULUS_TOL = 1e-9

# Relative margin added to max(lambda_s, 1/lambda_u) when fixing a.
A_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# Exact integer linear algebra (python ints, no overflow)
# ---------------------------------------------------------------------------

def int_matrix(rows) -> np.ndarray:
    """Return an object-dtype matrix of python ints from nested rows."""
    mat = np.array([[int(v) for v in row] for row in rows], dtype=object)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def int_det(mat: np.ndarray) -> int:
    """Exact determinant via fraction-free (Bareiss) elimination."""
    a = [[int(v) for v in row] for row in np.asarray(mat, dtype=object)]
    n = len(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def int_matrix_power(mat: np.ndarray, k: int) -> np.ndarray:
    """Exact integer matrix power by repeated squaring (k >= 0)."""
    if k < 0:
        raise ValueError("power must be nonnegative")
    n = mat.shape[0]
    result = np.eye(n, dtype=object)
    base = mat.astype(object)
    e = int(k)
    while e > 0:
        if e & 1:
            result = result @ base
        base = base @ base
        e >>= 1
    return result


def int_inverse_unimodular(mat: np.ndarray) -> np.ndarray:
    """Exact integer inverse of a matrix with det = +-1 (adjugate method)."""
    m = int_matrix(mat)
    n = m.shape[0]
    det = int_det(m)
    if det not in (1, -1):
        raise NotUnimodular(f"determinant is {det}, expected +-1")
    adj = np.empty((n, n), dtype=object)
    idx = list(range(n))
    for i in range(n):
        for j in range(n):
            minor = m[np.ix_([r for r in idx if r != i], [c for c in idx if c != j])]
            adj[j, i] = (-1) ** (i + j) * (int_det(minor) if n > 1 else 1)
    return adj * det


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToralAutomorphism:
    """Integer unimodular matrix acting on the torus R^n / Z^n."""

    matrix: np.ndarray          # object dtype, python ints
    dim: int
    det_sign: int

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def matrix_float(self) -> np.ndarray:
        return self.matrix.astype(float)

    def inverse(self) -> "ToralAutomorphism":
        inv = int_inverse_unimodular(self.matrix)
        return ToralAutomorphism(matrix=inv, dim=self.dim, det_sign=self.det_sign)

    def power(self, k: int) -> "ToralAutomorphism":
        if k < 0:
            return self.inverse().power(-k)
        mk = int_matrix_power(self.matrix, k)
        return toral_automorphism(mk)

    def to_json(self) -> str:
        return json.dumps([[int(v) for v in row] for row in self.matrix])


def toral_automorphism(rows) -> ToralAutomorphism:
    """Validate integer rows as a unimodular matrix and wrap them.

    Raises:
        NotUnimodular: if |det| != 1.
    """
    mat = int_matrix(rows)
    det = int_det(mat)
    if det not in (1, -1):
        raise NotUnimodular(f"determinant is {det}, expected +-1")
    return ToralAutomorphism(matrix=mat, dim=mat.shape[0], det_sign=det)


def matrix_from_json(text: str) -> ToralAutomorphism:
    return toral_automorphism(json.loads(text))


@dataclass(frozen=True, eq=False)
class HyperbolicSplitting:
    """Stable/unstable splitting data of a hyperbolic toral automorphism.

    ``basis`` holds the stable columns first, then the unstable columns, each
    eigen-group normalized deterministically.  Adapted coordinates of x are
    ``basis_inv @ x``; the adapted norm is the max of the Euclidean norms of
    the stable and unstable coordinate blocks.  ``eigen_groups`` records the
    (modulus, dim) of each invariant block ordered by increasing modulus,
    which downstream cone-field code uses as seed directions.
    """

    automorphism: ToralAutomorphism
    dim: int
    stable_dim: int
    unstable_dim: int
    stable_basis: np.ndarray        # (n, stable_dim) columns
    unstable_basis: np.ndarray      # (n, unstable_dim) columns
    lambda_s: float                 # max stable eigenvalue modulus
    lambda_u: float                 # min unstable eigenvalue modulus
    a: float
    basis: np.ndarray               # (n, n)
    basis_inv: np.ndarray
    stable_projector: np.ndarray
    unstable_projector: np.ndarray
    eigen_moduli: tuple             # all moduli, ascending
    eigen_groups: tuple             # ((modulus, block_dim), ...) ascending
    coord_matrix: np.ndarray        # basis_inv @ A @ basis (block structure)
    stable_block: np.ndarray
    unstable_block: np.ndarray
    unstable_block_inv: np.ndarray

    def adapted_coords(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.basis_inv.T

    def adapted_norm(self, v: np.ndarray) -> np.ndarray:
        """Adapted norm of vectors with shape (..., n)."""
        c = self.adapted_coords(v)
        ns = np.linalg.norm(c[..., : self.stable_dim], axis=-1)
        nu = np.linalg.norm(c[..., self.stable_dim:], axis=-1)
        return np.maximum(ns, nu)

    def to_json(self) -> str:
        return json.dumps(
            {
                "matrix": [[int(v) for v in row] for row in self.automorphism.matrix],
                "lambda_s": self.lambda_s,
                "lambda_u": self.lambda_u,
                "a": self.a,
                "stable_basis": self.stable_basis.tolist(),
                "unstable_basis": self.unstable_basis.tolist(),
                "eigen_moduli": list(self.eigen_moduli),
            }
        )


def adapted_norm(splitting: HyperbolicSplitting, v: np.ndarray) -> float:
    """Adapted max-norm of a single vector (module-level convenience)."""
    return float(splitting.adapted_norm(np.asarray(v, dtype=float)))


# ---------------------------------------------------------------------------
# Spectral splitting
# ---------------------------------------------------------------------------

def _normalize_real_vector(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    if v[k] < 0:
        v = -v
    return v


def _normalize_complex_pair(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Rotate the phase so the largest-modulus entry is real positive, which
    # makes (Re v, Im v) deterministic; scaling keeps the coordinate block a
    # scaled rotation, so the restricted operator norm equals the modulus.
    k = int(np.argmax(np.abs(v)))
    v = v * (np.abs(v[k]) / v[k])
    u, w = np.real(v), np.imag(v)
    s = np.linalg.norm(u)
    return u / s, w / s


def spectral_split(auto: ToralAutomorphism) -> HyperbolicSplitting:
    """Compute the hyperbolic splitting of an integer unimodular matrix.

    The returned ``a`` is max(lambda_s, 1/lambda_u) * (1 + 1e-6), capped away
    from 1, so the adapted-norm contractions hold with strict margin.

    Raises:
        NotHyperbolic: if some eigenvalue modulus is within 1e-9 of 1.
    """
    mat = auto.matrix_float
    n = auto.dim
    eigvals, eigvecs = np.linalg.eig(mat)
    moduli = np.abs(eigvals)
    if np.any(np.abs(moduli - 1.0) <= UNIT_MODULUS_TOL):
        raise NotHyperbolic(
            f"eigenvalue modulus within {UNIT_MODULUS_TOL} of 1: {sorted(moduli)}"
        )

    # Deterministic ordering: ascending modulus, then real part, then |imag|.
    order = sorted(range(n), key=lambda i: (moduli[i], eigvals[i].real, abs(eigvals[i].imag)))

    columns: list[tuple[float, np.ndarray]] = []  # (modulus, column) per real column
    groups: list[tuple[float, int]] = []
    used = set()
    for i in order:
        if i in used:
            continue
        lam = eigvals[i]
        if abs(lam.imag) <= 1e-10 * max(1.0, abs(lam.real)):
            col = _normalize_real_vector(np.real(eigvecs[:, i]))
            columns.append((float(moduli[i]), col))
            groups.append((float(moduli[i]), 1))
            used.add(i)
        else:
            # Pair with the conjugate; keep the positive-imag representative.
            j = None
            for cand in range(n):
                if cand not in used and cand != i and np.isclose(eigvals[cand], np.conj(lam)):
                    j = cand
                    break
            if j is None:
                raise NotHyperbolic("unpaired complex eigenvalue; matrix too ill-conditioned")
            rep = i if eigvals[i].imag > 0 else j
            u, w = _normalize_complex_pair(eigvecs[:, rep])
            m = float(moduli[i])
            columns.append((m, u))
            columns.append((m, w))
            groups.append((m, 2))
            used.add(i)
            used.add(j)

    mods = np.array([m for m, _ in columns])
    basis = np.column_stack([c for _, c in columns])
    stable_dim = int(np.sum(mods < 1.0))
    unstable_dim = n - stable_dim
    if stable_dim == 0 or unstable_dim == 0:
        raise NotHyperbolic("matrix has no stable (or no unstable) directions")

    lambda_s = float(np.max(mods[:stable_dim]))
    lambda_u = float(np.min(mods[stable_dim:]))
    a_raw = max(lambda_s, 1.0 / lambda_u)
    a = min(a_raw * (1.0 + A_MARGIN), 0.5 * (1.0 + a_raw))
    if not a < 1.0:
        raise NotHyperbolic(f"cannot certify contraction factor below 1 (a_raw={a_raw})")

    basis_inv = np.linalg.inv(basis)
    ps = basis[:, :stable_dim] @ basis_inv[:stable_dim, :]
    pu = basis[:, stable_dim:] @ basis_inv[stable_dim:, :]
    coord = basis_inv @ mat @ basis
    sblock = coord[:stable_dim, :stable_dim].copy()
    ublock = coord[stable_dim:, stable_dim:].copy()

    return HyperbolicSplitting(
        automorphism=auto,
        dim=n,
        stable_dim=stable_dim,
        unstable_dim=unstable_dim,
        stable_basis=basis[:, :stable_dim].copy(),
        unstable_basis=basis[:, stable_dim:].copy(),
        lambda_s=lambda_s,
        lambda_u=lambda_u,
        a=float(a),
        basis=basis,
        basis_inv=basis_inv,
        stable_projector=ps,
        unstable_projector=pu,
        eigen_moduli=tuple(float(m) for m in sorted(moduli)),
        eigen_groups=tuple(groups),
        coord_matrix=coord,
        stable_block=sblock,
        unstable_block=ublock,
        unstable_block_inv=np.linalg.inv(ublock),
    )


# ---------------------------------------------------------------------------
# Expansivity constant of the torus automorphism in the adapted metric
# ---------------------------------------------------------------------------

def min_lattice_norm(split: HyperbolicSplitting, search_radius: int = 3) -> float:
    """Smallest adapted norm of a nonzero integer vector.

    The adapted norm is equivalent to the Euclidean norm, so the minimum over
    a small box of integer vectors is the global minimum once the box radius
    exceeds (min found) / (equivalence constant); the default radius is ample
    for the matrices used here and is re-checked by expanding once.
    """
    def scan(radius: int) -> float:
        rng = range(-radius, radius + 1)
        best = np.inf
        for k in itertools.product(rng, repeat=split.dim):
            if all(v == 0 for v in k):
                continue
            best = min(best, float(split.adapted_norm(np.array(k, dtype=float))))
        return best

    best = scan(search_radius)
    wider = scan(search_radius + 2)
    return min(best, wider)


def expansivity_constant(split: HyperbolicSplitting, safety: float = 0.9) -> float:
    """A valid expansivity constant for the automorphism in the adapted metric.

    Any two distinct torus orbits must separate beyond this at some time: a
    bi-infinite orbit-pair staying closer would lift to a bounded nonzero
    solution of the linear dynamics, which hyperbolicity forbids as long as
    the bound stays below half the minimal lattice norm.
    """
    return safety * 0.5 * min_lattice_norm(split)


# ---------------------------------------------------------------------------
# Search for example matrices with prescribed spectrum shapes
# ---------------------------------------------------------------------------

THREE_REAL_ORDERED = "THREE_REAL_ORDERED"
REAL_PLUS_COMPLEX_STABLE = "REAL_PLUS_COMPLEX_STABLE"
FOUR_REAL_TWO_EACH_SIDE = "FOUR_REAL_TWO_EACH_SIDE"

_SHAPE_DIMS = {
    THREE_REAL_ORDERED: 3,
    REAL_PLUS_COMPLEX_STABLE: 3,
    FOUR_REAL_TWO_EACH_SIDE: 4,
}


def companion_matrix(coeffs: tuple[int, ...]) -> np.ndarray:
    """Companion matrix of x^n + c_{n-1} x^{n-1} + ... + c_1 x + c_0.

    coeffs = (c_0, c_1, ..., c_{n-1}); the last row is (-c_0, ..., -c_{n-1}).
    """
    n = len(coeffs)
    mat = np.zeros((n, n), dtype=object)
    for i in range(n - 1):
        mat[i, i + 1] = 1
    for j, c in enumerate(coeffs):
        mat[n - 1, j] = -int(c)
    return mat


def _roots_match_shape(roots: np.ndarray, shape: str) -> bool:
    real_tol = 1e-9
    mods = np.abs(roots)
    if np.any(np.abs(mods - 1.0) <= UNIT_MODULUS_TOL):
        return False
    is_real = np.abs(roots.imag) <= real_tol * np.maximum(1.0, np.abs(roots.real))
    if shape in (THREE_REAL_ORDERED, FOUR_REAL_TWO_EACH_SIDE):
        if not np.all(is_real):
            return False
        vals = np.sort(roots.real)
        if np.any(vals <= 0):
            return False
        if np.any(np.diff(vals) <= 1e-6 * np.abs(vals[:-1])):
            return False
        n_stable = int(np.sum(vals < 1.0))
        want_stable = 1 if shape == THREE_REAL_ORDERED else 2
        return n_stable == want_stable
    if shape == REAL_PLUS_COMPLEX_STABLE:
        n_real = int(np.sum(is_real))
        if n_real != 1:
            return False
        real_root = roots[is_real][0].real
        pair_mod = mods[~is_real]
        return real_root > 1.0 and np.all(pair_mod < 1.0)
    raise ValueError(f"unknown spectrum shape {shape!r}")


def find_example_matrix(dim: int, spectrum_shape: str, entry_bound: int) -> list[ToralAutomorphism]:
    """Search companion matrices for a prescribed eigenvalue pattern.

    Enumerates characteristic polynomials x^n + c_{n-1} x^{n-1} + ... + c_0
    with |c_i| <= entry_bound and c_0 = +-1 (so |det| = 1); every realizable
    spectrum is the spectrum of such a companion matrix.  Returns matches in
    lexicographic matrix order; an empty list is a valid result (e.g. when
    the shape needs a different dimension).
    """
    if spectrum_shape not in _SHAPE_DIMS:
        raise ValueError(f"unknown spectrum shape {spectrum_shape!r}")
    if dim != _SHAPE_DIMS[spectrum_shape]:
        return []

    found = []
    inner = range(-entry_bound, entry_bound + 1)
    for c0 in (-1, 1):
        for rest in itertools.product(inner, repeat=dim - 1):
            coeffs = (c0,) + rest
            # np.roots wants highest degree first: x^n + c_{n-1} x^{n-1} + ... + c_0
            poly = np.array([1.0] + [float(coeffs[dim - 1 - i]) for i in range(dim)])
            roots = np.roots(poly)
            if _roots_match_shape(roots, spectrum_shape):
                found.append(toral_automorphism(companion_matrix(coeffs)))
    found.sort(key=lambda t: tuple(int(v) for v in t.matrix.ravel()))
    return found
