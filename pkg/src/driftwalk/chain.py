"""Markov chain simulation and empirical checks of negative-drift recurrence.

States are numpy arrays with a leading batch axis: a batch of scalar states
has shape ``(batch,)``, a batch of ``2 x 2`` bases has shape ``(batch, 2, 2)``.
A :class:`ChainKernel` advances a whole batch at once from a block of
uniforms (a random mapping representation), and trajectory ``t`` always reads
its uniforms from ``rng.stream(seed, t)``.  Results therefore do not depend on
batch sizes or on which trajectories are still running.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dist import FiniteDist, dominance_gap, empirical_distribution, standard_realisation
from .exceptions import CensoringError, DomainError
from .rng import UniformStreams

CHUNK = 256


@dataclass(frozen=True)
class ChainKernel:
    """Markov transition given as a vectorised random mapping.

    Parameters
    ----------
    update : callable
        ``update(states, u) -> states`` where ``u`` has shape
        ``(batch, n_uniforms)`` with entries in ``[0, 1)``.
    n_uniforms : int
        Uniforms consumed per step and trajectory.
    exact : callable, optional
        ``exact(state) -> FiniteDist`` over next states, for chains on a
        countable subset of the reals.
    name : str
    """

    update: Callable
    n_uniforms: int = 1
    exact: Optional[Callable] = None
    name: str = "kernel"

    def step(self, states, u):
        return self.update(states, u)


@dataclass(frozen=True)
class DriftFunction:
    """Vectorised map from a batch of states to ``[0, +inf]``."""

    evaluate: Callable
    label: str = "f"

    def __call__(self, states):
        return np.asarray(self.evaluate(states), dtype=float)


@dataclass(frozen=True)
class Censored:
    """No return happened before ``horizon``."""

    horizon: int


@dataclass(frozen=True)
class MomentParams:
    M: float
    eta: float
    R0: float
    lambda1: float

    def __post_init__(self):
        if not (self.M > 0 and self.eta > 0 and self.lambda1 > 0 and self.R0 >= 0):
            raise DomainError("need M > 0, eta > 0, lambda1 > 0 and R0 >= 0")


IDENTITY = DriftFunction(lambda x: np.asarray(x, dtype=float), "identity")


def as_drift(f):
    if isinstance(f, DriftFunction):
        return f
    return DriftFunction(f, getattr(f, "__name__", "f"))


def max_drift(f0, f1):
    """Pointwise maximum of two drift functions."""
    f0, f1 = as_drift(f0), as_drift(f1)
    return DriftFunction(lambda x: np.maximum(f0(x), f1(x)), f"max({f0.label}, {f1.label})")


def glue_drift(f0, f1, c, T0, Tprime):
    """``x -> c_x f0(x) + f1(x)`` with ``c_x`` ramping affinely from 0 at ``T0`` to ``c`` at ``Tprime``."""
    if not c > 1:
        raise DomainError("c must exceed 1")
    if not Tprime > T0:
        raise DomainError("Tprime must exceed T0")
    f0, f1 = as_drift(f0), as_drift(f1)

    def evaluate(x):
        v0 = f0(x)
        cx = c * np.clip((v0 - T0) / (Tprime - T0), 0.0, 1.0)
        # Keep 0 * inf out of the sum below T0.
        part = np.where(cx > 0, cx * v0, 0.0)
        return part + f1(x)

    return DriftFunction(evaluate, f"glue({f0.label}, {f1.label})")


# ---------------------------------------------------------------- kernels

def deterministic_kernel(fn, name="deterministic"):
    """Kernel ``x -> fn(x)``; consumes one (ignored) uniform per step."""
    return ChainKernel(lambda x, u: fn(x), 1, exact=lambda x: FiniteDist.point(float(fn(np.asarray([x]))[0])),
                       name=name)


def increment_kernel(increments, floor=None, name=None):
    """Random walk ``x -> x + D`` with ``D ~ increments``, optionally ``max(., floor)``.

    ``D`` is drawn as ``D'(1 - u)`` through the standard realisation, so one
    uniform per step suffices.
    """
    real = standard_realisation(increments)

    def update(x, u):
        s = 1.0 - u[:, 0]
        nxt = x + real.values[np.searchsorted(real.breakpoints, s, side="left")]
        return nxt if floor is None else np.maximum(nxt, floor)

    def exact(x):
        nxt = np.asarray(increments.values) + x
        if floor is not None:
            nxt = np.maximum(nxt, floor)
        return FiniteDist.from_pairs(zip(nxt, increments.weights))

    return ChainKernel(update, 1, exact=exact, name=name or f"walk{increments!r}")


def finite_kernel(P, name="finite"):
    """Chain on ``{0, ..., m-1}`` with row-stochastic matrix ``P``."""
    P = np.asarray(P, dtype=float)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0

    def update(x, u):
        rows = cum[x.astype(np.int64)]
        return (rows <= u[:, :1]).sum(axis=1).astype(float)

    def exact(x):
        row = P[int(x)]
        keep = row > 0
        return FiniteDist(np.flatnonzero(keep).astype(float), row[keep])

    return ChainKernel(update, 1, exact=exact, name=name)


# ---------------------------------------------------------------- engine

def _batch(x0, size):
    x0 = np.asarray(x0, dtype=float)
    return np.repeat(x0[None], size, axis=0)


def _starts(starts, trials):
    """Stack ``trials`` copies of every probe state, probe-major."""
    starts = np.asarray(starts, dtype=float)
    return np.repeat(starts, trials, axis=0)


def simulate(kernel, x0, n, seed):
    """One trajectory ``X_0, ..., X_n`` driven by stream 0 of ``seed``."""
    if n < 0:
        raise DomainError("n must be non-negative")
    streams = UniformStreams(seed, [0], kernel.n_uniforms)
    states = _batch(x0, 1)
    out = np.empty((n + 1,) + states.shape[1:])
    out[0] = states[0]
    k = 0
    while k < n:
        m = min(CHUNK * 16, n - k)
        u = streams.next(m)
        for j in range(m):
            states = kernel.update(states, u[:, j])
            out[k + j + 1] = states[0]
        k += m
    return out


def iterate(kernel, states, indices, steps, seed, visit):
    """Advance a batch ``steps`` times, calling ``visit(k, states)`` after step ``k``.

    ``visit`` may return a boolean mask of trajectories to keep; dropped
    trajectories stop consuming their streams.  Returns the final states of
    the trajectories still running and their indices.
    """
    streams = UniformStreams(seed, indices, kernel.n_uniforms)
    idx = np.asarray(indices)
    k = 0
    while k < steps and len(idx):
        m = min(CHUNK, steps - k)
        u = streams.next(m)
        for j in range(m):
            states = kernel.update(states, u[:, j])
            keep = visit(k + j + 1, states, idx)
            if keep is not None and not np.all(keep):
                states, idx, u = states[keep], idx[keep], u[keep]
                streams = streams.subset(keep)
                if not len(idx):
                    break
        k += m
    return states, idx


def return_times(kernel, f, R0, starts, seed, horizon, indices=None):
    """First ``n >= 1`` with ``f(X_n) <= R0`` per start; ``horizon + 1`` marks censoring."""
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    f = as_drift(f)
    states = np.asarray(starts, dtype=float)
    indices = np.arange(len(states)) if indices is None else np.asarray(indices)
    pos = {int(i): k for k, i in enumerate(indices)}
    tau = np.full(len(states), horizon + 1, dtype=np.int64)

    def visit(k, x, idx):
        hit = f(x) <= R0
        if np.any(hit):
            tau[[pos[int(i)] for i in idx[hit]]] = k
        return ~hit

    iterate(kernel, states, indices, horizon, seed, visit)
    return tau


def first_return_time(kernel, f, R0, x0, seed, horizon):
    """First return time to ``{f <= R0}`` of one trajectory, or :class:`Censored`."""
    tau = return_times(kernel, f, R0, _batch(x0, 1), seed, horizon)[0]
    return Censored(horizon) if tau > horizon else int(tau)


def _wald(p, n, n_sigma):
    return n_sigma * np.sqrt(p * (1 - p) / n)


@dataclass
class ReturnTailProfile:
    n: np.ndarray
    tail: np.ndarray
    half_width: np.ndarray
    partial_sum: np.ndarray
    argmax_probe: np.ndarray
    censored_fraction: float


def return_tail_profile(kernel, f, R0, starts, trials, horizon, seed, n_sigma=3.0):
    """Estimate ``max over probes of P_x(tau >= n)`` for ``n = 1..horizon``.

    Trajectory ``p * trials + t`` starts from probe ``p``.
    """
    if trials < 1:
        raise DomainError("trials must be positive")
    starts = np.asarray(starts, dtype=float)
    tau = return_times(kernel, f, R0, _starts(starts, trials), seed, horizon)
    tau = tau.reshape(len(starts), trials)
    n = np.arange(1, horizon + 1)
    # counts[p, n-1] = #{tau >= n}
    hist = np.stack([np.bincount(row, minlength=horizon + 2) for row in tau])
    at_least = hist[:, ::-1].cumsum(axis=1)[:, ::-1][:, 1:horizon + 1]
    est = at_least / trials
    arg = est.argmax(axis=0)
    tail = est[arg, np.arange(horizon)]
    return ReturnTailProfile(n=n, tail=tail, half_width=_wald(tail, trials, n_sigma),
                             partial_sum=np.cumsum(tail), argmax_probe=arg,
                             censored_fraction=float(np.mean(tau > horizon)))


@dataclass
class FosterReport:
    mean: float
    half_width: float
    bound: float
    censored_fraction: float
    passed: bool


def foster_bound_check(kernel, f, spec, x0, trials, horizon, seed, slack=0.05, n_sigma=3.0,
                       max_censored=0.01):
    """Compare the empirical mean return time with ``f(x0) / lambda1``."""
    f = as_drift(f)
    fx = float(f(_batch(x0, 1))[0])
    if not fx > spec.R0:
        raise DomainError("x0 must lie outside {f <= R0}")
    tau = return_times(kernel, f, spec.R0, _batch(x0, trials), seed, horizon)
    cens = float(np.mean(tau > horizon))
    if cens > max_censored:
        raise CensoringError(f"{cens:.2%} of {trials} runs did not return within {horizon} steps")
    mean = float(tau.mean())
    hw = float(n_sigma * tau.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
    bound = fx / spec.lambda1
    return FosterReport(mean, hw, bound, cens, mean + hw <= bound * (1 + slack))


def moment_bound_m1(params, fx):
    """``L^{1+eta}`` bound on the return time from a point with drift value ``fx``.

    Returns ``(fx/l)^{1+eta} + M fx / l + M1`` where
    ``M1 = 1 + 4((M^{1/(1+eta)} + R0)^{1+eta} + M (M + R0) / l)`` and ``l = lambda1``.
    """
    M, eta, R0, lam = params.M, params.eta, params.R0, params.lambda1
    m1 = 1 + 4 * ((M ** (1 / (1 + eta)) + R0) ** (1 + eta) + M * (M + R0) / lam)
    r = fx / lam
    return r ** (1 + eta) + M * r + m1


@dataclass
class MassProfile:
    n: np.ndarray
    estimate: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    bound: np.ndarray
    flagged: np.ndarray

    @property
    def violations(self):
        return int(self.flagged.sum())


def rec_law_bound(n, fx, eps, lambda1):
    return eps + fx / (np.asarray(n, dtype=float) * lambda1)


def states_at(kernel, x0, grid, trials, seed, f):
    """``f(X_n)`` for every ``n`` in ``grid`` and every trajectory; shape ``(len(grid), trials)``."""
    grid = np.asarray(grid, dtype=np.int64)
    if grid.size == 0 or np.any(grid < 0):
        raise DomainError("grid must be a non-empty set of non-negative times")
    f = as_drift(f)
    order = {int(n): k for k, n in enumerate(grid)}
    out = np.empty((grid.size, trials))
    start = _batch(x0, trials)
    if 0 in order:
        out[order[0]] = f(start)

    def visit(k, x, idx):
        if k in order:
            out[order[k]] = f(x)

    iterate(kernel, start, np.arange(trials), int(grid.max()), seed, visit)
    return out


def mass_escape_profile(kernel, f, R, x0, grid, trials, seed, eps=0.0, lambda1=None, n_sigma=3.0):
    """Estimate ``P(f(X_n) > R)`` on ``grid``, with the bound ``eps + f(x0) / (n lambda1)``."""
    f = as_drift(f)
    grid = np.asarray(grid, dtype=np.int64)
    vals = states_at(kernel, x0, grid, trials, seed, f)
    est = np.mean(vals > R, axis=1)
    hw = _wald(est, trials, n_sigma)
    if lambda1 is None:
        bound = np.full(grid.size, np.nan)
    else:
        fx = float(f(_batch(x0, 1))[0])
        bound = np.where(grid > 0, rec_law_bound(np.maximum(grid, 1), fx, eps, lambda1), np.inf)
    flagged = (est - hw) > bound
    return MassProfile(grid, est, np.clip(est - hw, 0, 1), np.clip(est + hw, 0, 1), bound, flagged)


def occupation_fraction(kernel, f, R, x0, n, seed):
    """Fraction of ``k in 1..n`` with ``f(X_k) > R`` along one trajectory."""
    if n < 1:
        raise DomainError("n must be positive")
    f = as_drift(f)
    count = 0
    x = _batch(x0, 1)
    streams = UniformStreams(seed, [0], kernel.n_uniforms)
    k = 0
    while k < n:
        m = min(CHUNK * 16, n - k)
        u = streams.next(m)
        block = np.empty((m,) + x.shape[1:])
        for j in range(m):
            x = kernel.update(x, u[:, j])
            block[j] = x[0]
        count += int(np.count_nonzero(f(block) > R))
        k += m
    return count / n


@dataclass
class TrajectoryStats:
    seed: int
    n: int
    thresholds: np.ndarray
    counts: np.ndarray
    return_times: np.ndarray
    terminal: float


def trajectory_stats(kernel, f, x0, n, seed, thresholds, R0):
    """Occupation counts above each threshold and the gaps between visits to ``{f <= R0}``."""
    f = as_drift(f)
    path = simulate(kernel, x0, n, seed)
    vals = f(path)
    thresholds = np.asarray(thresholds, dtype=float)
    counts = (vals[1:, None] > thresholds[None, :]).sum(axis=0)
    visits = np.flatnonzero(vals <= R0)
    return TrajectoryStats(int(seed), int(n), thresholds, counts, np.diff(visits), float(vals[-1]))


def dkw_epsilon(n, confidence):
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band at the given confidence."""
    return float(np.sqrt(np.log(2.0 / (1.0 - confidence)) / (2.0 * n)))


@dataclass
class SDProbe:
    state: np.ndarray
    inside: bool
    increments: FiniteDist
    reference: FiniteDist
    gap: float
    at: float
    band: float
    passed: bool


@dataclass
class SDReport:
    probes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(p.passed for p in self.probes)


def verify_sd(kernel, f, spec, probes, trials, seed, confidence=0.99):
    """Test the one-step increments of ``f`` at each probe against ``Z0`` or ``Z1``.

    The probe fails when the empirical tail exceeds the reference tail by more
    than the DKW half-width anywhere.
    """
    if trials < 100:
        raise DomainError("verify_sd needs at least 100 trials per probe")
    f = as_drift(f)
    probes = np.asarray(probes, dtype=float)
    band = dkw_epsilon(trials, confidence)
    report = SDReport()
    for p, x in enumerate(probes):
        start = _batch(x, trials)
        fx = float(f(start[:1])[0])
        nxt = np.empty(trials)

        def visit(k, states, idx):
            nxt[:] = f(states)

        iterate(kernel, start, p * trials + np.arange(trials), 1, seed, visit)
        inc = empirical_distribution(nxt - fx)
        inside = fx <= spec.R0
        ref = spec.Z0 if inside else spec.Z1
        gap, at = dominance_gap(ref, inc)
        report.probes.append(SDProbe(x, inside, inc, ref, gap, at, band, gap <= band))
    return report


# ---------------------------------------------------------------- renewal

@dataclass
class RenewalWindow:
    l: int
    probability: float
    horizon: int


def _gaps_to_last_visit(inside):
    """``n - max{i <= n : inside[i]}`` per row (``n + 1`` when there is no visit yet)."""
    steps = inside.shape[1]
    n = np.arange(steps)
    last = np.where(inside, n, -1)
    last = np.maximum.accumulate(last, axis=1)
    return np.where(last >= 0, n - last, n + 1)


def renewal_window(kernel, f, R0, starts, alpha, horizon, trials, seed):
    """Smallest ``l`` with ``P_x(some X_i in K, n - l <= i <= n) > 1 - alpha`` for all ``n <= horizon``.

    Probability is minimised over the start probes and over ``n``.
    """
    f = as_drift(f)
    starts = np.asarray(starts, dtype=float)
    batch = _starts(starts, trials)
    inside = np.empty((len(batch), horizon + 1), dtype=bool)
    inside[:, 0] = f(batch) <= R0

    def visit(k, x, idx):
        inside[:, k] = f(x) <= R0

    iterate(kernel, batch, np.arange(len(batch)), horizon, seed, visit)
    gaps = _gaps_to_last_visit(inside).reshape(len(starts), trials, horizon + 1)

    def worst(l):
        return float(np.min(np.mean(gaps <= l, axis=1)))

    lo, hi = 0, horizon + 1
    if worst(hi) <= 1 - alpha:
        raise CensoringError("no window up to the horizon reaches the requested probability")
    while lo < hi:
        mid = (lo + hi) // 2
        if worst(mid) > 1 - alpha:
            hi = mid
        else:
            lo = mid + 1
    return RenewalWindow(lo, worst(lo), horizon)


@dataclass
class RecLawChoice:
    R: float
    eps: float
    window: RenewalWindow
    excursion_tail: float


def rec_law_search(kernel, f, R0, starts, eps, horizon, trials, seed):
    """Pick ``R`` for a target ``eps`` following the renewal argument.

    A window ``l`` is found with return probability above ``1 - eps/2``; then
    ``R`` is the smallest observed level with
    ``P_x(max_{k <= l} f(X_k) > R) < eps/2`` over the probes in ``K``.
    """
    f = as_drift(f)
    win = renewal_window(kernel, f, R0, starts, eps / 2, horizon, trials, seed)
    starts = np.asarray(starts, dtype=float)
    batch = _starts(starts, trials)
    peak = f(batch)

    def visit(k, x, idx):
        np.maximum(peak, f(x), out=peak)

    iterate(kernel, batch, np.arange(len(batch)), max(win.l, 1), seed + 1, visit)
    peak = peak.reshape(len(starts), trials)
    levels = np.unique(peak)
    for R in levels:
        tail = float(np.max(np.mean(peak > R, axis=1)))
        if tail < eps / 2:
            return RecLawChoice(float(R), float(eps), win, tail)
    raise AssertionError("unreachable: the top level has empty tail")
