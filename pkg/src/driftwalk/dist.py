"""Finite-support distributions, standard realisations and stochastic dominance.

A :class:`FiniteDist` is an immutable list of atoms sorted by value.  Its
standard realisation is the non-increasing step function
``s -> max{t : P(Z >= t) >= s}`` on ``(0, 1]``; two distributions are ordered
by stochastic dominance exactly when their realisations are ordered
pointwise.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DominanceGapError, DomainError, EmptySampleError

WEIGHT_TOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """Probability distribution with finitely many atoms.

    Parameters
    ----------
    values : array_like
        Strictly increasing atom locations.
    weights : array_like
        Positive weights summing to one (within ``1e-12``).
    """

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values).reshape(-1)
        weights = _frozen(self.weights).reshape(-1)
        if values.size == 0 or values.shape != weights.shape:
            raise ValueError("need the same non-zero number of values and weights")
        if not np.all(np.isfinite(values)):
            raise ValueError("atom values must be finite")
        if np.any(np.diff(values) <= 0):
            raise ValueError("atom values must be strictly increasing")
        if np.any(weights <= 0) or np.any(weights > 1):
            raise ValueError("weights must lie in (0, 1]")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_pairs(cls, pairs):
        """Build from ``(value, weight)`` pairs, merging equal values and dropping zero weights."""
        acc = {}
        for v, w in pairs:
            v = float(v)
            acc[v] = acc.get(v, 0.0) + float(w)
        items = sorted((v, w) for v, w in acc.items() if w > 0)
        return cls([v for v, _ in items], [w for _, w in items])

    @classmethod
    def point(cls, c):
        return cls([c], [1.0])

    @classmethod
    def uniform(cls, values):
        values = sorted(set(float(v) for v in values))
        return cls(values, [1.0 / len(values)] * len(values))

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return (np.array_equal(self.values, other.values)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.values.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        atoms = ", ".join(f"{v:g}: {w:g}" for v, w in zip(self.values, self.weights))
        return f"FiniteDist({{{atoms}}})"

    def mean(self):
        return float(np.dot(self.values, self.weights))

    def upper_cumulative(self):
        """``P(Z >= a_k)`` for atoms taken in decreasing order (last entry pinned to 1)."""
        upper = np.cumsum(self.weights[::-1])
        upper[-1] = 1.0
        return upper

    def tail(self, t):
        """``P(Z > t)``; vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        # Atoms strictly above t are the last (size - idx) ones; summing them
        # from the top keeps tail values bitwise equal to the realisation's
        # breakpoints.
        idx = np.searchsorted(self.values, t, side="right")
        upper = np.concatenate([[0.0], self.upper_cumulative()])
        return upper[self.values.size - idx]

    def cdf(self, t):
        return 1.0 - self.tail(t)

    def sample(self, rng, size=None):
        return rng.choice(self.values, size=size, p=self.weights)


@dataclass(frozen=True, eq=False)
class StepRealisation:
    """Right-closed step function on ``(0, 1]``.

    ``values[k]`` is taken on ``(breakpoints[k-1], breakpoints[k]]`` with
    ``breakpoints[-1] == 1`` and the implicit left end ``0``.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = _frozen(self.breakpoints)
        v = _frozen(self.values)
        if b.shape != v.shape or b.size == 0:
            raise ValueError("breakpoints and values must have the same non-zero length")
        if b[-1] != 1.0 or b[0] <= 0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must increase strictly from (0, 1] up to 1")
        if np.any(np.diff(v) > 0):
            raise ValueError("realisation values must be non-increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any((s <= 0) | (s > 1)):
            raise ValueError("realisations are defined on (0, 1]")
        idx = np.searchsorted(self.breakpoints, s, side="left")
        return self.values[idx]

    def lengths(self):
        return np.diff(np.concatenate([[0.0], self.breakpoints]))

    def measure_above(self, t):
        """Lebesgue measure of ``{s : Z'(s) > t}``."""
        above = np.flatnonzero(self.values > t)
        return 0.0 if above.size == 0 else float(self.breakpoints[above[-1]])

    def integral(self, alpha):
        """``integral over (0, alpha] of Z'(s) ds``, computed piecewise."""
        left = np.concatenate([[0.0], self.breakpoints[:-1]])
        overlap = np.clip(np.minimum(self.breakpoints, alpha) - left, 0.0, None)
        return float(np.dot(overlap, self.values))

    def pushforward(self):
        return FiniteDist.from_pairs(zip(self.values, self.lengths()))


@dataclass(frozen=True)
class DriftSpec:
    """Certificate for the dominance condition: a sublevel set and two dominating laws.

    Increments from ``{f <= R0}`` are dominated by ``Z0``; increments from
    outside are dominated by ``Z1`` whose mean is ``-lambda1 < 0``.
    """

    R0: float
    lambda1: float
    Z0: FiniteDist
    Z1: FiniteDist

    def __post_init__(self):
        m = self.Z1.mean()
        if not m < 0:
            raise ValueError(f"Z1 must have negative mean, got {m!r}")
        if not self.lambda1 > 0 or abs(self.lambda1 + m) > WEIGHT_TOL:
            raise ValueError(f"lambda1={self.lambda1!r} does not match -mean(Z1)={-m!r}")

    def bound_for(self, fx):
        """Law dominating the increment from a point with drift value ``fx``."""
        return self.Z0 if fx <= self.R0 else self.Z1


def standard_realisation(dist):
    """Standard realisation ``s -> max{t : P(Z >= t) >= s}`` of ``dist``."""
    return StepRealisation(dist.upper_cumulative(), dist.values[::-1])


def dominates(upper, lower, tol=0.0):
    """True iff ``P(lower > t) <= P(upper > t) + tol`` for every real ``t``.

    Both tails are right-continuous step functions, so comparing them at the
    merged atom set is exhaustive.
    """
    grid = np.union1d(upper.values, lower.values)
    return bool(np.all(lower.tail(grid) <= upper.tail(grid) + tol))


def dominance_gap(upper, lower):
    """Largest ``P(lower > t) - P(upper > t)`` and the ``t`` attaining it."""
    grid = np.union1d(upper.values, lower.values)
    gap = lower.tail(grid) - upper.tail(grid)
    k = int(np.argmax(gap))
    return float(gap[k]), float(grid[k])


def truncated_tail_expectation(dist, alpha):
    """``E[Z' 1_(0, alpha]]`` for the standard realisation ``Z'`` of ``dist``."""
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    return standard_realisation(dist).integral(alpha)


def build_dominating_pair(Z, R0, lam, alpha):
    """Turn an overshoot bound and a probable decrease into a dominance certificate.

    If increments are dominated by ``Z >= 0`` everywhere and are ``<= -lam``
    with probability ``>= 1 - alpha`` outside ``{f <= R0}``, then outside that
    set they are also dominated by the law of
    ``Z' 1_(0, alpha] - lam 1_(alpha, 1]``, whose mean is ``-lambda1``.

    Raises
    ------
    DominanceGapError
        If ``E[Z' 1_(0, alpha]] >= lam * (1 - alpha)``.
    """
    if not lam > 0:
        raise DomainError("lam must be positive")
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if Z.values[0] < 0:
        raise DomainError("Z must be supported on [0, inf)")
    real = standard_realisation(Z)
    head = real.integral(alpha)
    lambda1 = lam * (1 - alpha) - head
    if not lambda1 > 0:
        raise DominanceGapError(
            f"E[Z' 1_(0,{alpha:g}]] = {head:.6g} >= lambda (1 - alpha) = {lam * (1 - alpha):.6g}")
    left = np.concatenate([[0.0], real.breakpoints[:-1]])
    mass = np.clip(np.minimum(real.breakpoints, alpha) - left, 0.0, None)
    pairs = [(v, w) for v, w in zip(real.values, mass) if w > 0]
    pairs.append((-lam, 1.0 - alpha))
    Z1 = FiniteDist.from_pairs(pairs)
    return DriftSpec(R0=float(R0), lambda1=float(lambda1), Z0=Z, Z1=Z1)


def empirical_distribution(samples):
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise EmptySampleError("cannot build a distribution from an empty sample")
    values, counts = np.unique(samples, return_counts=True)
    return FiniteDist(values, counts / samples.size)
