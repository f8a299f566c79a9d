"""The Benoist-Quint drift function on the space of unimodular lattices.

For a random walk whose group is Zariski dense in ``SL_d(R)``, the height of
a lattice ``x`` is measured through its primitive sublattices ``Delta``:

    phi_A(Delta) = -(A i (d - i) + log covol(Delta)) / lambda^(i),   i = rank(Delta)
    f_A(x) = max(0, max_Delta phi_A(Delta))

where ``lambda^(i)`` is the sum of the top ``i`` Lyapunov exponents, i.e.
the top exponent of the walk on the ``i``-th exterior power.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .chain import ChainKernel, DriftFunction, glue_drift, max_drift  # noqa: F401  (re-exported)
from .dist import empirical_distribution, truncated_tail_expectation
from .exceptions import DomainError, ExplosionError
from .lattice import (
    LatticeBasis,
    Sublattice,
    covolume,
    enumerate_small_sublattices,
    gauss_reduce_batch,
    lll_columns,
)
from .rng import UniformStreams, stream


@dataclass(frozen=True, eq=False)
class MatrixMeasure:
    """Finitely supported probability measure on ``SL_d(R)``.

    Parameters
    ----------
    matrices : array_like, shape (k, d, d)
    weights : array_like, shape (k,)
    """

    matrices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] != w.size or w.size == 0:
            raise ValueError("need k square matrices and k weights")
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        dets = np.linalg.det(m)
        if np.any(np.abs(np.abs(dets) - 1) > 1e-9):
            raise ValueError("every matrix must have |det| = 1")
        cum = np.cumsum(w)
        cum[-1] = 1.0
        for a in (m, w, cum):
            a.setflags(write=False)
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cum", cum)

    @property
    def d(self):
        return self.matrices.shape[1]

    @classmethod
    def uniform(cls, matrices):
        matrices = np.asarray(matrices, dtype=float)
        return cls(matrices, np.full(len(matrices), 1.0 / len(matrices)))

    @classmethod
    def point(cls, g):
        return cls(np.asarray(g, dtype=float)[None], [1.0])

    def pick(self, u):
        """Atom index for uniforms ``u`` in ``[0, 1)``."""
        return np.searchsorted(self._cum, u, side="right")

    def symmetric(self, tol=1e-12):
        """True if the measure is invariant under ``g -> g^{-T}``."""
        inv = np.linalg.inv(self.matrices).transpose(0, 2, 1)
        for g, w in zip(inv, self.weights):
            hit = np.all(np.abs(self.matrices - g) <= tol, axis=(1, 2))
            if abs(self.weights[hit].sum() - w) > tol:
                return False
        return True


def sl2_generators():
    """``L, R, L^-1, R^-1`` with ``L``, ``R`` the elementary unipotents."""
    L = np.array([[1.0, 0.0], [1.0, 1.0]])
    R = np.array([[1.0, 1.0], [0.0, 1.0]])
    return np.stack([L, R, np.linalg.inv(L), np.linalg.inv(R)])


def elementary_generators(d):
    """All ``I +- E_ij`` for ``i != j``; a symmetric generating set of ``SL_d(Z)``."""
    out = []
    for i in range(d):
        for j in range(d):
            if i != j:
                for s in (1.0, -1.0):
                    g = np.eye(d)
                    g[i, j] = s
                    out.append(g)
    return np.stack(out)


def wedge(g, i):
    """Matrix of the ``i``-th exterior power of ``g`` in the basis ``e_I``, ``I`` sorted."""
    g = np.asarray(g, dtype=float)
    d = g.shape[-1]
    idx = list(combinations(range(d), i))
    out = np.empty(g.shape[:-2] + (len(idx), len(idx)))
    for r, I in enumerate(idx):
        for c, J in enumerate(idx):
            out[..., r, c] = np.linalg.det(g[..., list(I), :][..., list(J)])
    return out


@dataclass(frozen=True)
class QuasiNormParams:
    """``(d, A, (lambda^(1), ..., lambda^(d-1)))``."""

    d: int
    A: float
    exponents: tuple

    def __post_init__(self):
        ex = tuple(float(v) for v in self.exponents)
        if len(ex) != self.d - 1:
            raise ValueError("need one exponent per rank 1..d-1")
        if not all(v > 0 for v in ex):
            raise ValueError("exponents must be positive")
        if not self.A > 0:
            raise ValueError("A must be positive")
        object.__setattr__(self, "exponents", ex)

    def lam(self, i):
        return self.exponents[i - 1]

    def threshold(self, i):
        """Covolume below which a rank-``i`` sublattice has positive ``phi_A``."""
        return float(np.exp(-self.A * i * (self.d - i)))

    def with_A(self, A):
        return QuasiNormParams(self.d, A, self.exponents)

    def duality_gaps(self):
        """``|lambda^(i) - lambda^(d-i)|`` per rank."""
        return [abs(self.lam(i) - self.lam(self.d - i)) for i in range(1, self.d)]


# ---------------------------------------------------------------- Lyapunov exponents

def estimate_lyapunov(mu, i, steps, trials, seed, burn_in=50, n_sigma=3.0):
    """Growth rate of ``i``-frames under the walk; returns ``(estimate, ci)``.

    Each trial draws a random ``i``-frame, runs ``burn_in`` steps to align it,
    then averages ``log |det R|`` of the QR renormalisation over ``steps``
    steps.  This is ``(1/n) log |wedge^i(g_n ... g_1) v|`` for a decomposable
    unit ``v``.
    """
    d = mu.d
    if not 1 <= i <= d - 1:
        raise DomainError("rank must lie in 1..d-1")
    gens = [stream(seed, t) for t in range(trials)]
    frames = np.stack([g.standard_normal((d, i)) for g in gens])
    frames, _ = np.linalg.qr(frames)
    streams = UniformStreams.from_generators(gens, np.arange(trials))
    total = np.zeros(trials)
    done = 0
    chunk = 512
    while done < burn_in + steps:
        m = min(chunk, burn_in + steps - done)
        u = streams.next(m)[:, :, 0]
        for j in range(m):
            frames = mu.matrices[mu.pick(u[:, j])] @ frames
            frames, r = np.linalg.qr(frames)
            if done + j >= burn_in:
                total += np.log(np.abs(np.diagonal(r, axis1=1, axis2=2))).sum(axis=1)
        done += m
    rates = total / steps
    est = float(rates.mean())
    ci = float(n_sigma * rates.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
    return est, ci


def lyapunov_spectrum(mu, steps, trials, seed, burn_in=50):
    """``[(lambda^(i), ci_i)]`` for ``i = 1..d-1``."""
    return [estimate_lyapunov(mu, i, steps, trials, seed + i, burn_in) for i in range(1, mu.d)]


# ---------------------------------------------------------------- phi_A and f_A

def phi_A_value(rank, covol, params):
    return -(params.A * rank * (params.d - rank) + np.log(covol)) / params.lam(rank)


def phi_A(sub, basis, params):
    """``-(A i (d - i) + log covol) / lambda^(i)`` for a sublattice of rank ``0 < i < d``."""
    if sub.is_zero or sub.is_full:
        raise DomainError("phi_A is defined for ranks 1..d-1; use 0 for the trivial ones")
    return float(phi_A_value(sub.rank, covolume(basis, sub), params))


def _as_array(basis):
    return basis.matrix if isinstance(basis, LatticeBasis) else np.asarray(basis, dtype=float)


def _rank_bound(b_red, i, params):
    """Covolume cap for the rank-``i`` maximiser: the threshold, or less if LLL already found better."""
    r = np.linalg.qr(b_red[:, :i], mode="r")
    span = float(np.prod(np.abs(np.diag(r))))
    return min(params.threshold(i), span)


def f_A_argmax(basis, params, cap=10**6):
    """``f_A`` and a maximising sublattice (``None`` when ``f_A = 0``)."""
    b = _as_array(basis)
    d = b.shape[0]
    if d != params.d:
        raise ValueError("dimension mismatch")
    red, U = lll_columns(b)
    best, arg = 0.0, None
    for i in range(1, d):
        bound = _rank_bound(red, i, params)
        for sub in enumerate_small_sublattices(b, i, bound * (1 + 1e-9), cap):
            val = phi_A(sub, b, params)
            if val > best:
                best, arg = val, sub
    return best, arg


def f_A(basis, params, cap=10**6):
    """Benoist-Quint height ``max(0, max phi_A)``."""
    b = _as_array(basis)
    if b.shape[0] == 2:
        return float(f_A_batch_2d(b[None], params)[0])
    return f_A_argmax(b, params, cap)[0]


def shortest_norm_2d(bases):
    u, _ = gauss_reduce_batch(np.asarray(bases, dtype=float))
    return np.linalg.norm(u, axis=-1)


def f_A_batch_2d(bases, params):
    """Vectorised ``f_A`` for a batch of ``2 x 2`` bases: only the shortest vector matters."""
    s = shortest_norm_2d(bases)
    return np.maximum(0.0, -(params.A + np.log(s)) / params.lam(1))


def f_A_batch(bases, params, cap=10**6):
    bases = np.asarray(bases, dtype=float)
    if bases.shape[-1] == 2:
        return f_A_batch_2d(bases, params)
    return np.array([f_A_argmax(b, params, cap)[0] for b in bases])


def lattice_drift(params):
    """``f_A`` as a :class:`DriftFunction` on batches of bases."""
    return DriftFunction(lambda x: f_A_batch(x, params), f"f_A(A={params.A:g})")


def variation_constant(params):
    """``C = max_i i (d - 1) / lambda^(i)``: bounds ``phi_A(g Delta) - phi_A(Delta)`` by ``C log |g|``."""
    return max(i * (params.d - 1) / params.lam(i) for i in range(1, params.d))


# ---------------------------------------------------------------- walks on lattices

def reduce_bases(b):
    """Reduced bases of the same lattices (Gauss for d = 2, LLL otherwise)."""
    b = np.asarray(b, dtype=float)
    if b.shape[-1] == 2:
        u, v = gauss_reduce_batch(b)
        return np.stack([u, v], axis=-1)
    return np.stack([lll_columns(x)[0] for x in b])


def matrix_walk_kernel(mu, reduce=True):
    """Kernel ``x -> g x`` with ``g ~ mu`` on batches of bases, re-reduced after every step."""

    def update(x, u):
        nxt = mu.matrices[mu.pick(u[:, 0])] @ x
        return reduce_bases(nxt) if reduce else nxt

    return ChainKernel(update, 1, name="matrix-walk")


def sample_products(mu, n, count, seed, start=0):
    """``count`` independent products ``g_n ... g_1`` from streams ``start..start+count-1``."""
    streams = UniformStreams(seed, np.arange(start, start + count), 1)
    u = streams.next(n)[:, :, 0]
    g = np.broadcast_to(np.eye(mu.d), (count, mu.d, mu.d)).copy()
    for j in range(n):
        g = mu.matrices[mu.pick(u[:, j])] @ g
    return g


def push_lattices(mu, n, basis, count, seed, start=0):
    """``g x`` for ``count`` samples ``g ~ mu^{*n}``, reducing along the way for stability."""
    streams = UniformStreams(seed, np.arange(start, start + count), 1)
    u = streams.next(n)[:, :, 0]
    x = np.broadcast_to(_as_array(basis), (count, mu.d, mu.d)).copy()
    x = reduce_bases(x)
    for j in range(n):
        x = reduce_bases(mu.matrices[mu.pick(u[:, j])] @ x)
    return x


# ---------------------------------------------------------------- drift checks

@dataclass
class DecreaseRow:
    index: int
    f_before: float
    fraction: float
    skipped: bool


@dataclass
class DecreaseReport:
    lam: float
    n: int
    rows: list = field(default_factory=list)

    def fractions(self):
        return np.array([r.fraction for r in self.rows if not r.skipped])


def check_probable_decrease(mu, params, n, lattices, A0, trials, seed, lam=None):
    """Fraction of ``g ~ mu^{*n}`` with ``f_A(g x) <= f_A(x) - n lam``, per lattice.

    ``lam`` defaults to half the smallest exponent.  Lattices with
    ``f_A <= A0`` violate the precondition and are reported as skipped.
    """
    if lam is None:
        lam = 0.5 * min(params.exponents)
    report = DecreaseReport(float(lam), int(n))
    for k, x in enumerate(lattices):
        fx = f_A(x, params)
        if not fx > A0:
            report.rows.append(DecreaseRow(k, fx, float("nan"), True))
            continue
        moved = push_lattices(mu, n, x, trials, seed, start=k * trials)
        after = f_A_batch(moved, params)
        report.rows.append(DecreaseRow(k, fx, float(np.mean(after <= fx - n * lam)), False))
    return report


def top_sublattices(basis, params, A0, cap=10**6):
    """Per rank, every primitive sublattice with ``phi_A >= f_A - A0``; ``None`` if ``f_A <= A0``."""
    b = _as_array(basis)
    fx, _ = f_A_argmax(b, params, cap)
    if not fx > A0:
        return None
    out = {}
    for i in range(1, params.d):
        level = fx - A0
        bound = float(np.exp(-params.A * i * (params.d - i) - params.lam(i) * level))
        subs = enumerate_small_sublattices(b, i, bound * (1 + 1e-9), cap)
        out[i] = [s for s in subs if phi_A(s, b, params) >= level - 1e-12]
    return out


def check_uniqueness_at_top(basis, params, A0, cap=10**4):
    """At most one primitive sublattice per rank within ``A0`` of the maximum.

    Vacuously true when ``f_A <= A0`` (the precondition fails).  More than
    ``cap`` candidates near the top is reported as a violation.
    """
    try:
        tops = top_sublattices(basis, params, A0, cap)
    except ExplosionError:
        return False
    if tops is None:
        return True
    return all(len(v) <= 1 for v in tops.values())


def calibrate_A(params, lattices, A0, start=None, max_doublings=20, cap=10**4):
    """Double ``A`` until uniqueness holds on every lattice that clears ``A0``.

    ``lattices`` is a sequence of bases, or a callable ``params -> bases`` so
    that each candidate ``A`` is validated on lattices that are high for it.
    A candidate only passes if at least one lattice was tested.  Returns the
    calibrated parameters and the log of ``(A, violations, tested)``.
    """
    A = params.A if start is None else start
    log = []
    for _ in range(max_doublings):
        p = params.with_A(A)
        tested = viol = 0
        for x in (lattices(p) if callable(lattices) else lattices):
            try:
                tops = top_sublattices(x, p, A0, cap)
            except ExplosionError:
                tested += 1
                viol += 1
                continue
            if tops is None:
                continue
            tested += 1
            viol += any(len(v) > 1 for v in tops.values())
        log.append((A, viol, tested))
        if viol == 0 and tested > 0:
            return p, log
        A *= 2
    raise DomainError(f"no A up to {A:g} makes the top unique")


def truncated_log_norm_expectation(mu, n, alpha, trials, seed, rank=None):
    """``E[Z'_n 1_(0, alpha]]`` for the empirical law of ``log |Phi(g)|``, ``g ~ mu^{*n}``.

    ``Phi`` is the ``rank``-th exterior power, or the matrix itself when
    ``rank`` is ``None``.
    """
    if trials < 100:
        raise DomainError("need at least 100 samples")
    g = sample_products(mu, n, trials, seed)
    if rank is not None:
        g = wedge(g, rank)
    z = np.log(np.linalg.norm(g, ord=2, axis=(1, 2)))
    return truncated_tail_expectation(empirical_distribution(z), alpha)


def variation_samples(mu, params, m, lattices, seed, rank_subs=None):
    """``(phi_A(g Delta) - phi_A(Delta), C log |g|)`` for tracked sublattices of each lattice.

    Every lattice is paired with one ``g ~ mu^{*m}`` per tracked sublattice
    (default: the LLL-based rank-``i`` flag sublattices for every ``i``).
    """
    C = variation_constant(params)
    lhs, rhs = [], []
    for k, x in enumerate(lattices):
        b = _as_array(x)
        subs = rank_subs[k] if rank_subs is not None else _flag_sublattices(b)
        g = sample_products(mu, m, len(subs), seed, start=k * params.d)
        for sub, gk in zip(subs, g):
            before = phi_A(sub, b, params)
            after = phi_A(sub, gk @ b, params)
            lhs.append(after - before)
            rhs.append(C * np.log(np.linalg.norm(gk, 2)))
    return np.array(lhs), np.array(rhs)


def _flag_sublattices(b):
    """Primitive sublattices spanned by the first ``i`` LLL vectors, ``i = 1..d-1``."""
    _, U = lll_columns(b)
    cols = [[int(v) for v in U[:, j]] for j in range(U.shape[1])]
    d = b.shape[0]
    return [Sublattice.from_rows(cols[:i]) for i in range(1, d)]


def enumerate_at_level(basis, params, level, cap=10**6):
    """All primitive sublattices with ``phi_A >= level`` (``level > 0``), by rank."""
    b = _as_array(basis)
    out = {}
    for i in range(1, params.d):
        bound = float(np.exp(-params.A * i * (params.d - i) - params.lam(i) * level))
        out[i] = enumerate_small_sublattices(b, i, bound * (1 + 1e-9), cap)
    return out



# ---------------------------------------------------------------- lattice samplers

def generic_basis(d):
    """Fixed unimodular basis with no rational relations among its Gram entries.

    Upper-triangular with fractional parts of square roots of primes above the
    diagonal, scaled to determinant one.
    """
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]
    m = np.eye(d)
    k = 0
    for i in range(d):
        m[i, i] = 1.0 + 0.1 * (np.sqrt(primes[k % len(primes)]) % 1)
        k += 1
        for j in range(i + 1, d):
            m[i, j] = np.sqrt(primes[k % len(primes)]) % 1
            k += 1
    return LatticeBasis.normalized(m).matrix


def random_lattice(d, rng, spread=1.0, steps=6):
    """``Q diag(e^s) U`` with ``Q`` orthogonal, ``sum s = 0`` and ``U`` a random unimodular integer matrix."""
    from .lattice import random_unimodular

    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = rng.uniform(-spread, spread, d)
    s -= s.mean()
    return q @ np.diag(np.exp(s)) @ random_unimodular(d, rng, steps=steps, scale=1)


def sample_high_lattices(params, A0, count, seed, stretch=0.25, cap=10**6):
    """``count`` lattices with ``f_A > A0``, as reduced bases.

    Lattice ``k`` uses ``stream(seed, k)`` and has Iwasawa form
    ``Q diag(e^{t w}) N Z^d`` with ``Q`` orthogonal, ``w`` a random traceless
    direction and ``N`` unipotent upper triangular with entries in
    ``[-1/2, 1/2]``, which is already close to reduced.  ``t`` is bisected to the
    height ``A0`` and then enlarged by a random factor up to ``1 + stretch``.
    """
    d = params.d
    out = []
    k = 0
    while len(out) < count:
        rng = stream(seed, k)
        k += 1
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        N = np.eye(d) + np.triu(rng.uniform(-0.5, 0.5, (d, d)), 1)
        w = np.sort(rng.standard_normal(d))
        w -= w.mean()
        w /= np.abs(w).max()

        def height(t):
            return f_A(q @ np.diag(np.exp(t * w)) @ N, params, cap)

        lo, hi = 0.0, 1.0
        while height(hi) <= A0:
            lo, hi = hi, 2 * hi
            if hi > 1e3:
                raise DomainError("could not reach the requested height")
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if height(mid) > A0 else (mid, hi)
        t = hi * (1.0 + stretch * rng.random())
        # No unimodular scrambling: at these heights it would cancel away the short vectors.
        x = reduce_bases((q @ np.diag(np.exp(t * w)) @ N)[None])[0]
        if f_A(x, params, cap) > A0:
            out.append(x)
    return out
