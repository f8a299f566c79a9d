"""Geometry of lattices in R^d: reduction, short vectors and primitive sublattices.

Bases store lattice vectors as columns.  A sublattice is described by integer
coefficient rows with respect to the ambient basis, kept in row-style Hermite
normal form so that every subgroup has a single representative.  Integer
algebra uses Python ints and is exact; geometry is in double precision.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import gcd, isqrt

import numpy as np

from .exceptions import ExplosionError, NumericalRankError, RankError

DET_TOL = 1e-9
COND_MAX = 1e12
LOVASZ = 0.99
DEFAULT_CAP = 10**6

# Hermite constants gamma_n for n <= 6.
HERMITE = {1: 1.0, 2: 2 / np.sqrt(3), 3: 2 ** (1 / 3), 4: np.sqrt(2), 5: 8 ** (1 / 5), 6: (64 / 3) ** (1 / 6)}


def condition_number(basis):
    """Condition number after scaling every column to unit length."""
    b = np.asarray(basis, dtype=float)
    norms = np.linalg.norm(b, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(b)):
        return np.inf
    return float(np.linalg.cond(b / norms))


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """Unimodular lattice ``B Z^d`` given by the columns of ``B``."""

    matrix: np.ndarray

    def __post_init__(self):
        b = np.array(self.matrix, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 2:
            raise ValueError("basis must be a square matrix of size at least 2")
        cond = condition_number(b)
        if not cond <= COND_MAX:
            raise NumericalRankError(f"condition number {cond:.3g} exceeds {COND_MAX:g}")
        det = np.linalg.det(b)
        if abs(abs(det) - 1.0) > DET_TOL:
            raise ValueError(f"|det| = {abs(det)!r} is not 1")
        b.setflags(write=False)
        object.__setattr__(self, "matrix", b)

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def condition(self):
        return condition_number(self.matrix)

    @classmethod
    def standard(cls, d):
        return cls(np.eye(d))

    @classmethod
    def normalized(cls, m):
        """Rescale a non-singular matrix to determinant ``+-1``."""
        m = np.asarray(m, dtype=float)
        return cls(m / abs(np.linalg.det(m)) ** (1.0 / m.shape[0]))

    def __repr__(self):
        return f"LatticeBasis(d={self.d})"


@dataclass(frozen=True)
class Sublattice:
    """Subgroup of ``B Z^d`` with HNF coefficient rows (rank 0 and rank d act as markers)."""

    coeffs: tuple
    d: int

    @classmethod
    def from_rows(cls, rows, d=None):
        """HNF-canonical sublattice spanned by independent integer rows."""
        rows = _ints(rows)
        if not rows:
            if d is None:
                raise ValueError("d is required for the zero sublattice")
            return cls((), d)
        return cls(tuple(map(tuple, hnf_canonicalize(rows))), len(rows[0]))

    @classmethod
    def zero(cls, d):
        return cls((), d)

    @classmethod
    def full(cls, d):
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)), d)

    @property
    def rank(self):
        return len(self.coeffs)

    @property
    def is_zero(self):
        return self.rank == 0

    @property
    def is_full(self):
        return self.rank == self.d

    def array(self):
        return np.array(self.coeffs, dtype=float).reshape(self.rank, self.d)

    def vectors(self, basis):
        """Real generators as columns."""
        return _matrix(basis) @ self.array().T


def _matrix(basis):
    return basis.matrix if isinstance(basis, LatticeBasis) else np.asarray(basis, dtype=float)


# ---------------------------------------------------------------- exact integer algebra

def _ints(m):
    return [[int(v) for v in row] for row in m]


def hnf_with_transform(rows):
    """Row-style Hermite normal form ``H = T A`` of an integer matrix.

    Non-zero rows of ``H`` come first, pivots are positive and entries above
    each pivot lie in ``[0, pivot)``.  Returns ``(H, T, rank)`` with ``T``
    unimodular.
    """
    A = _ints(rows)
    r = len(A)
    n = len(A[0]) if r else 0
    T = [[int(i == j) for j in range(r)] for i in range(r)]
    pivots = []
    row = 0
    for col in range(n):
        if row == r:
            break
        # Euclid on the column below ``row``.
        while True:
            nz = [k for k in range(row, r) if A[k][col] != 0]
            if not nz:
                break
            k = min(nz, key=lambda i: abs(A[i][col]))
            A[row], A[k] = A[k], A[row]
            T[row], T[k] = T[k], T[row]
            done = True
            for i in range(row + 1, r):
                if A[i][col]:
                    q = A[i][col] // A[row][col]
                    A[i] = [a - q * b for a, b in zip(A[i], A[row])]
                    T[i] = [a - q * b for a, b in zip(T[i], T[row])]
                    if A[i][col]:
                        done = False
            if done:
                break
        if all(A[k][col] == 0 for k in range(row, r)):
            continue
        if A[row][col] < 0:
            A[row] = [-a for a in A[row]]
            T[row] = [-a for a in T[row]]
        p = A[row][col]
        for i in range(row):
            q = A[i][col] // p
            if q:
                A[i] = [a - q * b for a, b in zip(A[i], A[row])]
                T[i] = [a - q * b for a, b in zip(T[i], T[row])]
        pivots.append(col)
        row += 1
    return A, T, row


def hnf_canonicalize(rows):
    """Unique row-style HNF of a full-row-rank integer matrix."""
    H, _, rank = hnf_with_transform(rows)
    if rank < len(H):
        raise RankError(f"matrix has rank {rank} < {len(H)} rows")
    return H


def integer_kernel(rows, n=None):
    """Z-basis (as rows) of ``{a in Z^n : M a = 0}``."""
    M = _ints(rows)
    n = n if n is not None else len(M[0])
    if not M:
        return [[int(i == j) for j in range(n)] for i in range(n)]
    Mt = [list(col) for col in zip(*M)]
    H, T, rank = hnf_with_transform(Mt)
    return [T[k] for k in range(rank, n)]


def left_kernel(rows):
    """Z-basis (as rows) of ``{x : x M = 0}``."""
    H, T, rank = hnf_with_transform(rows)
    return [T[k] for k in range(rank, len(H))]


def int_inverse(U):
    """Exact inverse of a unimodular integer matrix."""
    n = len(U)
    A = [[Fraction(int(v)) for v in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(U)]
    for c in range(n):
        p = next(k for k in range(c, n) if A[k][c] != 0)
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [v / piv for v in A[c]]
        for k in range(n):
            if k != c and A[k][c] != 0:
                f = A[k][c]
                A[k] = [a - f * b for a, b in zip(A[k], A[c])]
    out = [[v for v in row[n:]] for row in A]
    if any(v.denominator != 1 for row in out for v in row):
        raise RankError("matrix is not unimodular")
    return [[int(v) for v in row] for row in out]


def complete_to_unimodular(c):
    """Unimodular integer matrix whose first column is the primitive vector ``c``."""
    c = [int(v) for v in c]
    if reduce(gcd, c, 0) != 1:
        raise RankError("vector is not primitive")
    H, T, _ = hnf_with_transform([[v] for v in c])
    # T c = e_1, so c is the first column of T^{-1}.
    return int_inverse(T)


def _gram_det(rows):
    """Exact ``det(C C^T)`` for integer rows."""
    C = _ints(rows)
    G = [[Fraction(sum(a * b for a, b in zip(r, s))) for s in C] for r in C]
    n = len(G)
    det = Fraction(1)
    for c in range(n):
        p = next((k for k in range(c, n) if G[k][c] != 0), None)
        if p is None:
            return 0
        if p != c:
            G[c], G[p] = G[p], G[c]
            det = -det
        det *= G[c][c]
        for k in range(c + 1, n):
            f = G[k][c] / G[c][c]
            G[k] = [a - f * b for a, b in zip(G[k], G[c])]
    return int(det)


def saturate(sub):
    """Smallest primitive sublattice containing ``sub``."""
    if sub.is_zero:
        return sub
    kernel = integer_kernel(sub.coeffs, sub.d)
    if not kernel:
        return Sublattice.full(sub.d)
    sat = integer_kernel(kernel, sub.d)
    return Sublattice(tuple(map(tuple, hnf_canonicalize(sat))), sub.d)


def saturation_index(sub):
    """``[saturate(sub) : sub]``."""
    if sub.is_zero:
        return 1
    sat = saturate(sub)
    num, den = _gram_det(sub.coeffs), _gram_det(sat.coeffs)
    q, r = divmod(num, den)
    root = isqrt(q)
    if r or root * root != q:
        raise ArithmeticError("index is not an integer")
    return root


def is_primitive(sub):
    return saturate(sub) == sub


def sum_and_intersection(a, b):
    """Saturated sum and intersection of two sublattices of the same ambient lattice."""
    if a.d != b.d:
        raise ValueError("ambient dimensions differ")
    d = a.d
    stacked = list(a.coeffs) + list(b.coeffs)
    if stacked:
        H, _, rank = hnf_with_transform(stacked)
        total = saturate(Sublattice(tuple(map(tuple, H[:rank])), d)) if rank else Sublattice.zero(d)
    else:
        total = Sublattice.zero(d)
    if a.is_zero or b.is_zero:
        return total, Sublattice.zero(d)
    M = list(a.coeffs) + [[-v for v in row] for row in b.coeffs]
    kern = left_kernel(M)
    ra = a.rank
    rows = [[sum(x[k] * a.coeffs[k][j] for k in range(ra)) for j in range(d)] for x in kern]
    rows = [r for r in rows if any(r)]
    if not rows:
        return total, Sublattice.zero(d)
    H, _, rank = hnf_with_transform(rows)
    return total, Sublattice(tuple(map(tuple, H[:rank])), d)


# ---------------------------------------------------------------- geometry

def covolume(basis, sub):
    """Volume of a fundamental cell of ``sub`` inside its span."""
    if sub.is_zero:
        return 1.0
    v = sub.vectors(basis)
    r = np.linalg.qr(v, mode="r")
    return float(np.prod(np.abs(np.diag(r))))


def _gso(b):
    """Gram-Schmidt data for the columns of ``b``: squared norms and mu."""
    n = b.shape[1]
    bstar = np.zeros_like(b)
    mu = np.zeros((n, n))
    norms = np.zeros(n)
    for i in range(n):
        v = b[:, i].copy()
        for j in range(i):
            mu[i, j] = b[:, i] @ bstar[:, j] / norms[j]
            v -= mu[i, j] * bstar[:, j]
        bstar[:, i] = v
        norms[i] = v @ v
    return norms, mu


def lll_columns(b, delta=LOVASZ):
    """LLL-reduce the columns of a full-column-rank real matrix.

    Returns ``(reduced, U)`` with ``reduced = b @ U`` and ``U`` an integer
    matrix of Python ints (object array) with determinant ``+-1``.
    """
    b = np.array(b, dtype=float)
    n = b.shape[1]
    U = np.array([[int(i == j) for j in range(n)] for i in range(n)], dtype=object)
    norms, mu = _gso(b)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise NumericalRankError("columns are numerically dependent")
    k = 1
    guard = 0
    while k < n:
        guard += 1
        if guard > 100000:
            raise NumericalRankError("LLL failed to converge")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                b[:, k] -= q * b[:, j]
                U[:, k] = U[:, k] - int(q) * U[:, j]
                mu[k, :j + 1] -= q * np.append(mu[j, :j], 1.0)
        if norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            b[:, [k - 1, k]] = b[:, [k, k - 1]]
            U[:, [k - 1, k]] = U[:, [k, k - 1]]
            norms, mu = _gso(b)
            k = max(k - 1, 1)
    return b, U


def lll_reduce(basis, delta=LOVASZ):
    """LLL-reduced basis of the same lattice and the integer transform ``U`` (``B' = B U``)."""
    b = _matrix(basis)
    if condition_number(b) > COND_MAX:
        raise NumericalRankError("basis is numerically singular")
    red, U = lll_columns(b, delta)
    return LatticeBasis(red), U


def _enumerate(R, bound2, cap, primitive=False):
    """All integer ``x != 0`` with ``|R x|^2 <= bound2`` for upper-triangular ``R`` (both signs).

    With ``primitive``, multiples of the first basis vector are skipped, so a
    very short first vector does not flood the search with ``k b_1``.
    """
    n = R.shape[0]
    out = []
    x = [0] * n
    diag = np.abs(np.diag(R))

    def rec(k, rest):
        center = -sum(R[k, j] * x[j] for j in range(k + 1, n)) / R[k, k]
        width = np.sqrt(max(rest, 0.0)) / diag[k]
        lo, hi = int(np.ceil(center - width - 1e-12)), int(np.floor(center + width + 1e-12))
        values = range(lo, hi + 1)
        if primitive and k == 0 and not any(x[1:]):
            values = [v for v in (-1, 1) if lo <= v <= hi]
        for v in values:
            x[k] = v
            t = R[k, k] * (v - center)
            left = rest - t * t
            if left < -1e-12 * bound2:
                continue
            if k == 0:
                if any(x):
                    out.append(tuple(x))
                    if len(out) > 2 * cap:
                        raise ExplosionError(f"more than {cap} short vectors")
            else:
                rec(k - 1, left)
        x[k] = 0

    rec(n - 1, bound2)
    return out


def _sign_normal(v):
    for c in v:
        if c:
            return c > 0
    return False


def short_vector_coeffs(b, bound, cap=DEFAULT_CAP, primitive=False):
    """Coefficients (w.r.t. columns of ``b``) of all non-zero vectors of norm ``<= bound``, one per +- pair.

    ``primitive`` restricts the search to primitive vectors; ``U`` is
    unimodular, so primitivity in reduced coordinates is the same thing.
    """
    red, U = lll_columns(b)
    R = np.linalg.qr(red, mode="r")
    raw = _enumerate(R, bound * bound * (1 + 1e-12), cap, primitive)
    Uo = U
    out = set()
    for x in raw:
        c = tuple(int(sum(Uo[i, j] * x[j] for j in range(len(x)))) for i in range(Uo.shape[0]))
        if _sign_normal(c):
            v = b @ np.array(c, dtype=float)
            if v @ v <= bound * bound * (1 + 1e-9):
                out.add(c)
    if len(out) > cap:
        raise ExplosionError(f"more than {cap} short vectors")
    return sorted(out)


def short_vectors(basis, bound, cap=DEFAULT_CAP):
    """Integer coefficient vectors of all lattice vectors of norm ``<= bound``, up to sign."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    return short_vector_coeffs(_matrix(basis), bound, cap)


def _primitive(c):
    return reduce(gcd, (abs(v) for v in c), 0) == 1


def _sublattices_general(b, rank, bound, cap):
    """Primitive rank-``rank`` sublattices of ``b Z^n`` with covolume ``<= bound`` (coefficient row tuples).

    ``b`` is any full-column-rank real matrix.  The shortest vector of such a
    sublattice has norm ``<= sqrt(gamma_rank) bound^{1/rank}``; projecting
    along it maps the sublattice to a primitive rank ``rank - 1`` sublattice
    of covolume ``covol / |b1|`` in the projected lattice.
    """
    n = b.shape[1]
    if rank == 0:
        return {()}
    if rank == n:
        vol = float(np.prod(np.abs(np.diag(np.linalg.qr(b, mode="r")))))
        return {tuple(tuple(int(i == j) for j in range(n)) for i in range(n))} if vol <= bound else set()
    radius = np.sqrt(HERMITE[rank]) * bound ** (1.0 / rank) * (1 + 1e-9)
    firsts = [c for c in short_vector_coeffs(b, radius, cap, primitive=True) if _primitive(c)]
    found = set()
    for c in firsts:
        v = b @ np.array(c, dtype=float)
        nv = float(np.linalg.norm(v))
        if rank == 1:
            if nv <= bound * (1 + 1e-12):
                found.add((c,))
            continue
        W = complete_to_unimodular(c)
        Wf = np.array(W, dtype=float)
        rest = b @ Wf[:, 1:]
        u = v / nv
        proj = rest - np.outer(u, u @ rest)
        # Coordinates in an orthonormal basis of the complement of v.
        q, _ = np.linalg.qr(np.column_stack([u, proj]))
        proj = q[:, 1:].T @ proj
        for low in _sublattices_general(proj, rank - 1, bound / nv * (1 + 1e-12), cap):
            rows = [c] + [tuple(sum(r[k] * W[i][k + 1] for k in range(n - 1)) for i in range(n)) for r in low]
            found.add(tuple(map(tuple, hnf_canonicalize(rows))))
            if len(found) > cap:
                raise ExplosionError(f"more than {cap} sublattices")
    return found


def enumerate_small_sublattices(basis, rank, covolume_bound, cap=DEFAULT_CAP):
    """All primitive sublattices of the given rank with covolume ``<= covolume_bound``.

    Ranks above ``d/2`` are handled through the dual lattice: for a
    unimodular lattice, orthogonal complements give a covolume-preserving
    bijection between primitive rank-``i`` sublattices of ``x`` and primitive
    rank-``(d - i)`` sublattices of the dual.
    """
    b = _matrix(basis)
    d = b.shape[0]
    if not 1 <= rank <= d - 1:
        raise ValueError("rank must lie in 1..d-1")
    if not covolume_bound > 0:
        raise ValueError("covolume bound must be positive")
    if 2 * rank > d:
        dual = np.linalg.inv(b).T
        subs = []
        for rows in _sublattices_general(dual, d - rank, covolume_bound, cap):
            subs.append(Sublattice(tuple(map(tuple, hnf_canonicalize(integer_kernel(rows, d)))), d))
    else:
        subs = [Sublattice(rows, d) for rows in _sublattices_general(b, rank, covolume_bound, cap)]
    out = [s for s in subs if covolume(b, s) <= covolume_bound]
    return sorted(out, key=lambda s: s.coeffs)


def random_unimodular(d, rng, steps=12, scale=2):
    """Random integer matrix with determinant ``+-1`` built from elementary operations."""
    U = np.eye(d, dtype=np.int64)
    for _ in range(steps):
        i, j = rng.choice(d, 2, replace=False)
        U[i] += int(rng.integers(-scale, scale + 1)) * U[j]
    if rng.random() < 0.5:
        U[0] = -U[0]
    return U


def gauss_reduce_batch(b):
    """Lagrange-Gauss reduction of a batch of ``2 x 2`` bases (columns); returns the shortest column."""
    u = np.array(b[..., :, 0], dtype=float)
    v = np.array(b[..., :, 1], dtype=float)
    nu = np.einsum("...i,...i->...", u, u)
    nv = np.einsum("...i,...i->...", v, v)
    swap = nv < nu
    u[swap], v[swap] = v[swap].copy(), u[swap].copy()
    nu, nv = np.minimum(nu, nv), np.maximum(nu, nv)
    active = np.ones(u.shape[0], dtype=bool)
    for _ in range(200):
        if not np.any(active):
            break
        q = np.round(np.einsum("...i,...i->...", u, v) / nu)
        q = np.where(active, q, 0.0)
        v = v - q[:, None] * u
        nv = np.einsum("...i,...i->...", v, v)
        active = nv < nu
        u[active], v[active] = v[active].copy(), u[active].copy()
        nu, nv = np.where(active, nv, nu), np.where(active, nu, nv)
    return u, v
