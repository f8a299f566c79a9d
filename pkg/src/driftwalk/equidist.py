"""Long matrix walks on unimodular lattices: occupation of sublevel sets and ball counts.

For ``d = 2`` the walk runs in a plain Python loop over a Gauss-reduced basis,
which is far cheaper per step than batched numpy for a single trajectory.
It reads its uniforms from the same per-trajectory streams as the batched
kernel and picks atoms with the same rule.  The two agree up to rounding,
but the walk is chaotic on the space of lattices: rounding differences grow
at the Lyapunov rate, so long paths from the two engines separate while each
stays reproducible.
"""

from bisect import bisect_right
from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy.special import zeta

from .bq import _as_array, f_A_batch, matrix_walk_kernel, shortest_norm_2d
from .chain import simulate
from .exceptions import DomainError
from .lattice import gauss_reduce_batch
from .rng import stream

CHUNK = 1 << 16


def walk_2d(mu, x0, steps, seed, index=0):
    """Reduced bases ``X_1, ..., X_steps`` of a ``d = 2`` walk; shape ``(steps, 2, 2)``.

    Trajectory ``index`` reads its uniforms from ``stream(seed, index)``.
    Columns are ``(u, v)`` with ``u`` a shortest vector.
    """
    if mu.d != 2:
        raise DomainError("walk_2d needs d = 2")
    u0, v0 = gauss_reduce_batch(_as_array(x0)[None])
    a, c = float(u0[0, 0]), float(u0[0, 1])
    b, e = float(v0[0, 0]), float(v0[0, 1])
    mats = [tuple(float(t) for t in g.reshape(-1)) for g in mu.matrices]
    cum = [float(t) for t in np.cumsum(mu.weights)]
    cum[-1] = 1.0
    gen = stream(seed, index)
    out = np.empty((steps, 2, 2))
    k = 0
    while k < steps:
        m = min(CHUNK, steps - k)
        block = np.empty((m, 4))
        for j, s in enumerate(gen.random(m).tolist()):
            g00, g01, g10, g11 = mats[bisect_right(cum, s)]
            a, c = g00 * a + g01 * c, g10 * a + g11 * c
            b, e = g00 * b + g01 * e, g10 * b + g11 * e
            nu = a * a + c * c
            nv = b * b + e * e
            if nv < nu:
                a, c, b, e, nu, nv = b, e, a, c, nv, nu
            while True:
                q = round((a * b + c * e) / nu)
                if q == 0:
                    break
                b -= q * a
                e -= q * c
                nv = b * b + e * e
                if nv < nu:
                    a, c, b, e, nu, nv = b, e, a, c, nv, nu
                else:
                    break
            block[j] = (a, b, c, e)
        out[k:k + m] = block.reshape(m, 2, 2)
        k += m
    return out


def primitive_ball_count(bases, r):
    """``#{primitive v in x : |v| <= r}`` (both signs) for Gauss-reduced ``2 x 2`` bases.

    A vector ``m u + n v`` has norm at least ``|n| / |u|`` (the height of
    ``v`` over ``u`` for covolume 1), so ``|n| <= r |u|``.
    """
    bases = np.asarray(bases, dtype=float)
    u, v = bases[..., 0], bases[..., 1]
    nu = np.einsum("...i,...i->...", u, u)
    uv = np.einsum("...i,...i->...", u, v)
    vv = np.einsum("...i,...i->...", v, v)
    r2 = r * r * (1 + 1e-12)
    count = 2 * (nu <= r2).astype(np.int64)
    n_top = int(np.floor(r * np.sqrt(nu.max()) + 1e-9)) if nu.size else 0
    for n in range(1, n_top + 1):
        disc = (n * uv) ** 2 - nu * (n * n * vv - r * r)
        ok = disc >= 0
        if not np.any(ok):
            continue
        root = np.sqrt(np.where(ok, disc, 0.0))
        lo = np.floor((-n * uv - root) / nu) - 1
        hi = np.ceil((-n * uv + root) / nu) + 1
        width = int(np.max(np.where(ok, hi - lo, 0)))
        for j in range(width + 1):
            m = lo + j
            inside = ok & (m <= hi)
            norm2 = m * m * nu + 2 * m * n * uv + n * n * vv
            prim = np.gcd(m.astype(np.int64), n) == 1
            # (m, n) and (-m, -n) both count.
            count += 2 * (inside & prim & (norm2 <= r2))
    return count


def siegel_reference(d, r):
    """Haar mean of the primitive ball count: ``vol(B_r) / zeta(d)``."""
    if d < 2:
        raise DomainError("d must be at least 2")
    return float(pi ** (d / 2) / gamma(d / 2 + 1) * r**d / zeta(d))


@dataclass
class SiegelReport:
    average: float
    reference: float
    relative_error: float
    per_trajectory: np.ndarray
    r: float
    steps: int


def siegel_equidistribution(mu, x0, steps, r, trials, seed):
    """Cesaro average of primitive ball counts over ``k = 0..steps-1`` and ``trials`` trajectories."""
    if not r > 0:
        raise DomainError("r must be positive")
    if mu.d != 2:
        raise DomainError("ball counts are implemented for d = 2")
    if steps < 1 or trials < 1:
        raise DomainError("steps and trials must be positive")
    u0, v0 = gauss_reduce_batch(_as_array(x0)[None])
    start = np.stack([u0[0], v0[0]], axis=-1)[None]
    per = np.empty(trials)
    for t in range(trials):
        path = walk_2d(mu, x0, steps - 1, seed, t) if steps > 1 else np.empty((0, 2, 2))
        counts = primitive_ball_count(np.concatenate([start, path]), r)
        per[t] = counts.mean()
    ref = siegel_reference(2, r)
    avg = float(per.mean())
    return SiegelReport(avg, ref, abs(avg - ref) / ref, per, float(r), int(steps))


def drift_path(mu, params, x0, steps, seed, index=0):
    """``f_A(X_k)`` for ``k = 1..steps`` along one walk."""
    if mu.d == 2:
        s = shortest_norm_2d(walk_2d(mu, x0, steps, seed, index))
        return np.maximum(0.0, -(params.A + np.log(s)) / params.lam(1))
    if index:
        raise DomainError("d > 2 paths use stream 0")
    path = simulate(matrix_walk_kernel(mu), _as_array(x0), steps, seed)[1:]
    return f_A_batch(path, params)


@dataclass
class OccupationTable:
    R: np.ndarray
    at_most: np.ndarray
    above: np.ndarray
    steps: int


def occupation_experiment(mu, params, x0, steps, R_grid, seed):
    """Fraction of ``k in 1..steps`` with ``f_A(X_k) <= R`` for every ``R`` in the grid."""
    if steps < 1000:
        raise DomainError("steps must be at least 1000")
    R = np.asarray(R_grid, dtype=float)
    vals = np.sort(drift_path(mu, params, x0, steps, seed))
    at_most = np.searchsorted(vals, R, side="right") / steps
    order = np.argsort(R, kind="stable")
    if np.any(np.diff(at_most[order]) < 0):
        raise AssertionError("occupation fractions must be monotone in R")
    return OccupationTable(R, at_most, 1.0 - at_most, int(steps))

