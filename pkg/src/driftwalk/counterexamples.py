"""Two chains with negative drift and ``L^1``-bounded increments that still escape.

The mass-escape chain loses mass to infinity along a schedule of ever rarer
jumps; the empirical-escape chain has excursions long enough that its
time averages escape even though every excursion returns.
"""

from dataclasses import dataclass

import numpy as np

from .chain import ChainKernel, DriftFunction, iterate
from .dist import FiniteDist
from .exceptions import DomainError, ScheduleValidationError
from .rng import uniform_block

IDENTITY = DriftFunction(lambda x: np.asarray(x, dtype=float), "identity")


# ---------------------------------------------------------------- escape of mass

def return_point(i):
    return 2.0 ** (-i - 1)


def stay_probability(alpha, R):
    """``(1 - alpha)^floor(1/alpha - R)``: chance of sitting at a return point long enough."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not 1.0 / alpha > R:
        raise DomainError("need 1/alpha > R")
    k = int(np.floor(1.0 / alpha - R))
    return float((1.0 - alpha) ** k)


@dataclass(frozen=True)
class MassEscapeSchedule:
    """Return points ``x_i = 2^{-i-1}``, jump sizes and checkpoints.

    From ``x_i`` the chain jumps to ``1/alpha_i = N_i + x_{i+1}`` and walks
    down by one per step to ``x_{i+1}``.  The last level jumps to the integer
    ``N_m`` and walks down to the absorbing state ``0``.

    Attributes
    ----------
    jumps : tuple of int
        ``N_i``, strictly increasing.
    checkpoints : tuple of int
        ``n_i`` maximising the estimated ``P(X_n = x_i)``.
    confidence : tuple of float
        Achieved estimate of ``P(X_{n_i} = x_i)``.
    """

    jumps: tuple
    checkpoints: tuple
    confidence: tuple

    def __post_init__(self):
        N = np.asarray(self.jumps)
        if N.size == 0 or np.any(N < 1) or np.any(np.diff(N) <= 0):
            raise ScheduleValidationError("jump sizes must be positive and strictly increasing")
        if not len(self.checkpoints) == len(self.confidence) == N.size:
            raise ScheduleValidationError("one checkpoint and confidence per level")
        a = self.alphas
        if np.any(np.diff(a) >= 0):
            raise ScheduleValidationError("rates must decrease")

    @property
    def levels(self):
        return len(self.jumps)

    @property
    def points(self):
        return np.array([return_point(i) for i in range(self.levels)])

    @property
    def targets(self):
        """Jump destinations ``1/alpha_i``."""
        m = self.levels
        return np.array([n + (return_point(i + 1) if i < m - 1 else 0.0) for i, n in enumerate(self.jumps)])

    @property
    def alphas(self):
        return 1.0 / self.targets

    def required(self, i):
        return 1.0 - 1.0 / i if i >= 1 else 1.0

    def rows(self):
        """``(i, x_i, alpha_i, n_i)`` rows."""
        return [(i, x, a, n) for i, (x, a, n) in enumerate(zip(self.points, self.alphas, self.checkpoints))]

    @classmethod
    def from_jumps(cls, jumps, trials=20_000, seed=0, validate=True):
        """Compute checkpoints for given jump sizes; optionally enforce ``1 - 1/i``."""
        jumps = tuple(int(n) for n in jumps)
        probe = cls(jumps, (0,) * len(jumps), (1.0,) * len(jumps))
        arrivals = _arrival_times(probe, uniform_block(seed, trials, probe.levels))
        cps, conf = [0], [1.0]
        for i in range(1, probe.levels):
            n, p = best_checkpoint(arrivals[:, i], probe.alphas[i])
            cps.append(n)
            conf.append(p)
        sched = cls(jumps, tuple(cps), tuple(conf))
        if validate:
            for i in range(1, sched.levels):
                if conf[i] < sched.required(i):
                    raise ScheduleValidationError(
                        f"level {i}: estimated P(X_n = x_i) = {conf[i]:.4f} < {sched.required(i):.4f}")
        return sched


def best_checkpoint(arrivals, alpha):
    """Maximise ``E[1{T <= n} (1 - alpha)^{n - T}]`` over ``n`` given arrival samples ``T``.

    The maximum sits at an arrival time; the running sum is updated in one
    pass over the sorted samples.
    """
    t = np.sort(np.asarray(arrivals, dtype=float))
    decay = np.log1p(-alpha)
    best_n, best, s = 0, -1.0, 0.0
    prev = t[0]
    for v in t:
        s = s * np.exp(decay * (v - prev)) + 1.0
        prev = v
        if s > best:
            best, best_n = s, int(v)
    return best_n, best / t.size


def _geometric(u, alpha):
    """Steps until the first jump, ``>= 1``, from uniforms in ``[0, 1)``."""
    return np.floor(np.log1p(-u) / np.log1p(-alpha)) + 1.0


def _arrival_times(schedule, u):
    """Arrival times at each ``x_i`` (column ``i``) plus absorption (last column)."""
    m = schedule.levels
    out = np.zeros((u.shape[0], m + 1))
    for i in range(m):
        g = _geometric(u[:, i], schedule.alphas[i])
        out[:, i + 1] = out[:, i] + g + schedule.jumps[i]
    return out


def mass_escape_positions(schedule, times, trials, seed):
    """Exact state at each time in ``times`` for ``trials`` trajectories from ``x_0``.

    Event driven: one uniform per level decides how long the chain sits at
    the return point.  Returns shape ``(len(times), trials)``.
    """
    u = uniform_block(seed, trials, schedule.levels)
    arr = _arrival_times(schedule, u)
    m = schedule.levels
    jump = arr[:, :m] + _geometric(u, schedule.alphas[None, :])
    targets = schedule.targets
    points = schedule.points
    out = np.empty((len(times), trials))
    for r, t in enumerate(times):
        level = np.sum(arr[:, 1:] <= t, axis=1)
        pos = np.zeros(trials)
        live = level < m
        lv = level[live]
        j = jump[live, lv]
        sitting = t < j
        val = np.where(sitting, points[lv], targets[lv] - (t - j))
        pos[live] = val
        out[r] = pos
    return out


def build_mass_escape_chain(schedule, validate=True, trials=20_000, seed=0):
    """Step kernel of the mass-escape chain restricted to its reachable states."""
    if validate:
        pos = mass_escape_positions(schedule, list(schedule.checkpoints), trials, seed)
        for i in range(1, schedule.levels):
            p = float(np.mean(pos[i] == schedule.points[i]))
            if p < schedule.required(i):
                raise ScheduleValidationError(
                    f"level {i}: Monte Carlo P(X_{schedule.checkpoints[i]} = x_{i}) = {p:.4f}")
    alphas = schedule.alphas
    targets = schedule.targets
    m = schedule.levels

    def level_of(x):
        # x = 2^{-i-1} has frexp exponent -i.
        _, e = np.frexp(x)
        return -e

    def update(x, u):
        nxt = np.where(x >= 1.0, x - 1.0, x)
        ret = (x > 0) & (x < 1.0)
        if np.any(ret):
            i = level_of(x[ret])
            if np.any(i >= m) or np.any(x[ret] != np.ldexp(0.5, -i)):
                raise DomainError("state is not a return point of the schedule")
            nxt[ret] = np.where(u[ret, 0] < alphas[i], targets[i], x[ret])
        return nxt

    def exact(x):
        x = float(x)
        if x == 0:
            return FiniteDist.point(0.0)
        if x >= 1:
            return FiniteDist.point(x - 1.0)
        i = int(level_of(np.array([x]))[0])
        return FiniteDist.from_pairs([(x, 1 - alphas[i]), (targets[i], alphas[i])])

    return ChainKernel(update, 1, exact=exact, name="mass-escape")


def greedy_schedule(levels=5, trials=20_000, seed=0, first=1, margin=3.0):
    """Double each jump until the checkpoint confidence clears ``1 - 1/i`` by ``margin`` sigma."""
    jumps = [int(first)]
    for i in range(1, levels):
        n = 2 * jumps[-1]
        while True:
            cand = MassEscapeSchedule.from_jumps(jumps + [n], trials, seed, validate=False)
            p = cand.confidence[i]
            need = 1.0 - 1.0 / i
            if p - margin * np.sqrt(max(p * (1 - p), 1e-12) / trials) >= need:
                break
            n *= 2
        jumps.append(n)
    return MassEscapeSchedule.from_jumps(jumps, trials, seed)


@dataclass
class MassEscapeCheckpoint:
    i: int
    alpha: float
    n: int
    k: int
    estimate: float
    half_width: float
    analytic: float
    slack: float
    confidence: float
    consistent: bool
    flagged: bool


def demonstrate_mass_escape(schedule, R, trials, seed, n_sigma=3.0):
    """Compare ``P(X_{n_i + k_i} <= R)`` with ``(1 - alpha_i)^{k_i}`` at every usable checkpoint.

    Returns the per-checkpoint rows and the first ``i`` where
    ``P(X > R) >= 1/2`` (``None`` if there is none).
    """
    if trials < 10_000:
        raise DomainError("need at least 10^4 trials")
    rows = []
    usable = [i for i in range(schedule.levels) if 1.0 / schedule.alphas[i] > R]
    times = []
    for i in usable:
        k = int(np.floor(1.0 / schedule.alphas[i] - R))
        times.append(schedule.checkpoints[i] + k)
    pos = mass_escape_positions(schedule, times, trials, seed) if times else np.empty((0, trials))
    first = None
    for r, i in enumerate(usable):
        a = float(schedule.alphas[i])
        k = times[r] - schedule.checkpoints[i]
        p = float(np.mean(pos[r] <= R))
        hw = float(n_sigma * np.sqrt(p * (1 - p) / trials))
        exact = stay_probability(a, R)
        slack = 1.0 / i if i >= 1 else 0.0
        flagged = (1 - p) >= 0.5
        if flagged and first is None:
            first = i
        rows.append(MassEscapeCheckpoint(i, a, schedule.checkpoints[i], k, p, hw, exact, slack,
                                         float(schedule.confidence[i]), abs(p - exact) <= hw + slack, flagged))
    return rows, first


# ---------------------------------------------------------------- escape of empirical measures

def long_jump_probability(i):
    return 1.0 / (i * np.log(i))


def long_jump_height(i):
    return int(np.floor(i * np.sqrt(np.log(i))))


def excursion_law(j):
    """Law of the ``j``-th excursion length, ``j >= 1``."""
    i = j + 2
    p = long_jump_probability(i)
    return FiniteDist.from_pairs([(1, 1 - p), (long_jump_height(i) + 1, p)])


def empirical_value(states):
    """``x_i + h`` for states ``(i, h)`` with ``x_i = 2^{-i}``."""
    states = np.asarray(states, dtype=float)
    return states[..., 1] + np.ldexp(1.0, -states[..., 0].astype(np.int64))


def at_most(states, R):
    """Exact ``x_i + h <= R``."""
    states = np.asarray(states, dtype=float)
    d = R - states[..., 1]
    # d >= 2^{-i} iff d > 0 and its binary exponent is at least 1 - i; no underflow.
    _, e = np.frexp(d)
    return (d > 0) & (e - 1 >= -states[..., 0])


def build_empirical_escape_chain():
    """Kernel on states ``(i, h)`` representing the point ``2^{-i} + h``.

    From ``(i, 0)`` the chain moves to ``(i+1, 0)`` or, with probability
    ``1/(i log i)``, to ``(i+1, floor(i sqrt(log i)))``; from ``h >= 1`` it
    moves to ``(i, h-1)``.  Start from ``(3, 0)``.
    """

    def update(x, u):
        i, h = x[:, 0], x[:, 1]
        low = h == 0
        nxt = x.copy()
        nxt[:, 1] = np.where(low, 0.0, h - 1.0)
        if np.any(low):
            il = i[low]
            p = 1.0 / (il * np.log(il))
            jump = np.floor(il * np.sqrt(np.log(il)))
            nxt[low, 0] = il + 1
            nxt[low, 1] = np.where(u[low, 0] < p, jump, 0.0)
        return nxt

    def exact(x):
        i, h = int(x[0]), int(x[1])
        if h >= 1:
            return FiniteDist.point(float(h - 1) + 2.0 ** -i)
        p = long_jump_probability(i)
        return FiniteDist.from_pairs([(2.0 ** -(i + 1), 1 - p), (long_jump_height(i) + 2.0 ** -(i + 1), p)])

    return ChainKernel(update, 1, exact=exact, name="empirical-escape")


EMPIRICAL_START = (3.0, 0.0)


@dataclass
class EmpiricalEscapeReport:
    n0: np.ndarray
    found_fraction: float
    harmonic_log_partial: float
    excursions: np.ndarray


def harmonic_log_partial_sum(n):
    """``sum_{k=3}^{n} 1/(k log k)``."""
    k = np.arange(3, max(int(n), 3) + 1, dtype=float)
    return float(np.sum(1.0 / (k * np.log(k))))


def demonstrate_empirical_escape(epsilon, R, horizon, trials, seed):
    """Smallest ``n0 <= horizon`` with ``#{k <= n0 : X_k <= R} < epsilon n0`` per trajectory.

    ``n0`` is ``0`` where no such time exists within the horizon.
    """
    if not 0 < epsilon <= 1:
        raise DomainError("epsilon must lie in (0, 1]")
    if horizon < 1000:
        raise DomainError("horizon must be at least 1000")
    kernel = build_empirical_escape_chain()
    start = np.repeat(np.array([EMPIRICAL_START]), trials, axis=0)
    count = np.zeros(trials, dtype=np.int64)
    n0 = np.zeros(trials, dtype=np.int64)
    exc = np.zeros(trials, dtype=np.int64)

    def visit(k, x, idx):
        below = at_most(x, R)
        count[idx] += below
        exc[idx] += (x[:, 1] == 0)
        hit = count[idx] < epsilon * k
        n0[idx[hit]] = k
        return ~hit

    final, left = iterate(kernel, start, np.arange(trials), horizon, seed, visit)
    return EmpiricalEscapeReport(n0, float(np.mean(n0 > 0)), harmonic_log_partial_sum(horizon + 2), exc)
