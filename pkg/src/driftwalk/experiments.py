"""End-to-end experiment runs driven by an :class:`ExperimentConfig`.

``run`` dispatches on ``config.kind``, writes every CSV artifact atomically
into ``config.out`` (each with a ``#`` line carrying the tool version and the
config hash) and finishes with ``summary.txt``.  Everything except the wall
time in the summary depends only on the config.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bq import (
    MatrixMeasure,
    QuasiNormParams,
    calibrate_A,
    check_probable_decrease,
    check_uniqueness_at_top,
    elementary_generators,
    f_A_argmax,
    generic_basis,
    lattice_drift,
    lyapunov_spectrum,
    matrix_walk_kernel,
    sample_high_lattices,
    sample_products,
    sl2_generators,
    variation_constant,
    variation_samples,
)
from .chain import (
    IDENTITY,
    foster_bound_check,
    increment_kernel,
    mass_escape_profile,
    rec_law_search,
    return_tail_profile,
    simulate,
    verify_sd,
)
from .config import ExperimentConfig, config_hash
from .counterexamples import (
    MassEscapeSchedule,
    demonstrate_empirical_escape,
    demonstrate_mass_escape,
    greedy_schedule,
)
from .dist import DriftSpec, FiniteDist
from .equidist import occupation_experiment, siegel_equidistribution
from .exceptions import ConfigParseError
from .io import atomic_write, fmt, meta_line, read_basis, read_measure, render_csv


@dataclass
class RunSummary:
    """Outcome of one run: pass/fail per criterion plus key statistics."""

    kind: str
    seed: int
    config_hash: str
    wall_time: float = 0.0
    criteria: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for _, ok in self.criteria)

    def render(self):
        lines = [
            f"driftwalk {__version__}",
            f"kind = {self.kind}",
            f"seed = {self.seed}",
            f"config = {self.config_hash}",
        ]
        lines += [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in self.criteria]
        lines += [f"{k} = {fmt(v)}" for k, v in self.stats.items()]
        lines += [f"artifact {a}" for a in self.artifacts]
        lines.append(f"result = {'PASS' if self.passed else 'FAIL'}")
        lines.append(f"wall_time = {self.wall_time:.3f} s")
        return "\n".join(lines) + "\n"


class _Run:
    """Collects artifacts and criteria while an experiment runs."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.summary = RunSummary(cfg.kind, cfg.seed, config_hash(cfg))
        self.meta = meta_line(self.summary.config_hash)

    def csv(self, name, header, rows):
        atomic_write(os.path.join(self.cfg.out, name), render_csv(header, rows, self.meta))
        self.summary.artifacts.append(name)

    def check(self, name, ok):
        self.summary.criteria.append((name, bool(ok)))

    def stat(self, key, value):
        self.summary.stats[key] = value


# ---------------------------------------------------------------- builders

def _chain(cfg):
    """Increment walk ``x -> max(x + D, floor)`` with ``f`` the identity."""
    model = cfg.get("chain", "model", "walk")
    if model != "walk":
        raise ConfigParseError(f"unknown chain model {model!r}", key="model")
    inc = cfg.get("chain", "increments", (-2.0, 1.0))
    probs = cfg.get("chain", "probs", tuple(1.0 / len(inc) for _ in inc))
    if len(probs) != len(inc):
        raise ConfigParseError("increments and probs differ in length", key="probs")
    D = FiniteDist.from_pairs(zip(inc, probs))
    kernel = increment_kernel(D, floor=cfg.get("chain", "floor", 0.0))
    return kernel, D


def _drift_spec(cfg, D, r0=0.0):
    """Certificate: ``Z1`` defaults to the increment law, ``Z0`` to its positive part."""
    r0 = cfg.get("chain", "r0", r0)
    z1v, z1w = cfg.get("chain", "z1_values"), cfg.get("chain", "z1_weights")
    Z1 = D if z1v is None else FiniteDist.from_pairs(zip(z1v, z1w))
    z0v, z0w = cfg.get("chain", "z0_values"), cfg.get("chain", "z0_weights")
    if z0v is None:
        Z0 = FiniteDist.from_pairs(zip(np.maximum(D.values, 0.0), D.weights))
    else:
        Z0 = FiniteDist.from_pairs(zip(z0v, z0w))
    lam = cfg.get("chain", "lambda1", -Z1.mean())
    return DriftSpec(R0=r0, lambda1=lam, Z0=Z0, Z1=Z1)


def _measure(cfg):
    name = cfg.get("measure", "name", "sl2")
    if name == "sl2":
        return MatrixMeasure.uniform(sl2_generators())
    if name == "elementary":
        return MatrixMeasure.uniform(elementary_generators(cfg.get("measure", "d", 3)))
    if name == "file":
        path = cfg.path("measure", "file")
        if path is None:
            raise ConfigParseError("measure name 'file' needs a 'file' key", key="file")
        return read_measure(path)
    raise ConfigParseError(f"unknown measure {name!r}", key="name")


def _basis(cfg, d):
    which = cfg.path("measure", "basis", "generic")
    if which == "standard":
        return np.eye(d)
    if which == "generic":
        return generic_basis(d)
    b = read_basis(which).matrix
    if b.shape[0] != d:
        raise ConfigParseError("basis dimension does not match the measure", key="basis")
    return b


def _exponents(cfg, run, mu):
    ex = cfg.get("measure", "exponents")
    if ex is not None:
        return [(v, 0.0) for v in ex]
    steps = cfg.get("measure", "lyapunov_steps", 20_000)
    trials = cfg.get("measure", "lyapunov_trials", 20)
    spec = lyapunov_spectrum(mu, steps, trials, cfg.seed)
    run.csv("exponents.csv", ["i", "lambda", "ci"], [(i + 1, v, c) for i, (v, c) in enumerate(spec)])
    return spec


def _params(cfg, run, mu):
    spec = _exponents(cfg, run, mu)
    return QuasiNormParams(mu.d, cfg.get("measure", "a", 1.0), tuple(v for v, _ in spec))


# ---------------------------------------------------------------- kinds

def _simulate(cfg, run):
    kernel, _ = _chain(cfg)
    steps = cfg.get("grid", "steps", 1000)
    path = simulate(kernel, cfg.get("chain", "x0", 20.0), steps, cfg.seed)
    run.csv("trajectory.csv", ["n", "state"], zip(range(steps + 1), path))
    run.stat("terminal_state", float(path[-1]))


def _returns(cfg, run):
    kernel, D = _chain(cfg)
    spec = _drift_spec(cfg, D)
    x0 = cfg.get("chain", "x0", 20.0)
    trials = cfg.get("grid", "trials", 10_000)
    horizon = cfg.get("chain", "horizon", 20_000)
    prof = return_tail_profile(kernel, IDENTITY, spec.R0, [x0], trials, horizon, cfg.seed)
    run.csv("returns.csv", ["n", "tail", "partial_sum"], zip(prof.n, prof.tail, prof.partial_sum))
    rep = foster_bound_check(kernel, IDENTITY, spec, x0, trials, horizon, cfg.seed,
                             slack=cfg.get("chain", "slack", 0.05))
    run.stat("mean_return_time", rep.mean)
    run.stat("half_width", rep.half_width)
    run.stat("foster_bound", rep.bound)
    run.check("foster bound", rep.passed)


def _mass_profile(cfg, run):
    trials = cfg.get("grid", "trials", 10_000)
    grid = cfg.get("grid", "n", tuple(int(v) for v in np.unique(np.geomspace(10, 4000, 20).astype(int))))
    eps = cfg.get("chain", "epsilon", 0.1)
    if cfg.get("measure", "name") is None:
        kernel, D = _chain(cfg)
        spec = _drift_spec(cfg, D)
        probes = cfg.get("chain", "probes", (spec.R0,))
        choice = rec_law_search(kernel, IDENTITY, spec.R0, probes, eps,
                                cfg.get("chain", "horizon", 2000), trials, cfg.seed)
        run.stat("window", choice.window.l)
        run.stat("R", choice.R)
        run.stat("epsilon", eps)
        prof = mass_escape_profile(kernel, IDENTITY, choice.R, cfg.get("chain", "x0", 20.0), grid,
                                   trials, cfg.seed + 2, eps=eps, lambda1=spec.lambda1)
    else:
        mu = _measure(cfg)
        params = _params(cfg, run, mu)
        R = cfg.get("measure", "r", 1.0)
        run.stat("R", R)
        x0 = _basis(cfg, mu.d)
        prof = mass_escape_profile(matrix_walk_kernel(mu), lattice_drift(params), R, x0, grid, trials,
                                   cfg.seed, eps=eps, lambda1=cfg.get("measure", "lambda1"))
    run.csv("mass_profile.csv", ["n", "estimate", "ci_low", "ci_high", "bound"],
            zip(prof.n, prof.estimate, prof.ci_low, prof.ci_high, prof.bound))
    run.stat("violations", int(prof.violations))
    run.check("mass profile under bound", prof.violations == 0)


def _occupation(cfg, run):
    mu = _measure(cfg)
    params = _params(cfg, run, mu)
    R = cfg.get("grid", "r", (0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, float("inf")))
    table = occupation_experiment(mu, params, _basis(cfg, mu.d), cfg.get("grid", "steps", 100_000), R,
                                  cfg.seed)
    run.csv("occupation.csv", ["R", "at_most", "above"], zip(table.R, table.at_most, table.above))
    eps = cfg.get("grid", "epsilon", 0.05)
    run.stat("min_above", float(table.above.min()))
    run.check(f"some R with occupation above R below {eps:g}", bool(np.any(table.above < eps)))


def _sd_check(cfg, run):
    kernel, D = _chain(cfg)
    # With a floor at 0 the state 1 moves by max(D, -1), which D does not dominate; K = {0, 1} works.
    spec = _drift_spec(cfg, D, r0=1.0)
    probes = cfg.get("chain", "probes", tuple(float(v) for v in range(0, 11)))
    rep = verify_sd(kernel, IDENTITY, spec, probes, cfg.get("grid", "trials", 10_000), cfg.seed,
                    confidence=cfg.get("chain", "confidence", 0.99))
    run.csv("sd_check.csv", ["state", "inside", "gap", "at", "band", "passed"],
            [(float(p.state), p.inside, p.gap, p.at, p.band, p.passed) for p in rep.probes])
    run.stat("max_gap", max(p.gap for p in rep.probes))
    run.check("dominance within DKW band", rep.passed)


def _counterexample_mass(cfg, run):
    trials = cfg.get("grid", "trials", 100_000)
    ctrials = cfg.get("schedule", "checkpoint_trials", 20_000)
    jumps = cfg.get("schedule", "jumps")
    if jumps is None and cfg.get("schedule", "levels") is None:
        jumps = (1, 1000)
    if jumps is not None:
        sched = MassEscapeSchedule.from_jumps(jumps, ctrials, cfg.seed, validate=False)
    else:
        sched = greedy_schedule(cfg.get("schedule", "levels"), ctrials, cfg.seed)
    run.csv("schedule.csv", ["i", "x_i", "alpha_i", "n_i"], sched.rows())
    rows, first = demonstrate_mass_escape(sched, cfg.get("schedule", "r", 10.0), trials, cfg.seed + 1)
    run.csv("checkpoints.csv",
            ["i", "alpha", "n", "k", "estimate", "half_width", "analytic", "slack", "confidence",
             "consistent", "flagged"],
            [(r.i, r.alpha, r.n, r.k, r.estimate, r.half_width, r.analytic, r.slack, r.confidence,
              r.consistent, r.flagged) for r in rows])
    run.stat("first_flagged_level", -1 if first is None else first)
    run.check("checkpoints match the analytic stay probability", all(r.consistent for r in rows))
    run.check("escape flagged at some checkpoint", first is not None)


def _counterexample_empirical(cfg, run):
    rep = demonstrate_empirical_escape(cfg.get("schedule", "epsilon", 0.5), cfg.get("schedule", "r", 2.0),
                                       cfg.get("schedule", "horizon", 10_000),
                                       cfg.get("grid", "trials", 200), cfg.seed)
    run.csv("trajectories.csv", ["trajectory", "n0", "excursions"],
            zip(range(len(rep.n0)), rep.n0, rep.excursions))
    run.stat("found_fraction", rep.found_fraction)
    run.stat("harmonic_log_partial", rep.harmonic_log_partial)
    run.check("escape time found on some trajectory", rep.found_fraction > 0)


def _lyapunov(cfg, run):
    mu = _measure(cfg)
    steps = cfg.get("measure", "lyapunov_steps", 20_000)
    trials = cfg.get("measure", "lyapunov_trials", 20)
    spec = lyapunov_spectrum(mu, steps, trials, cfg.seed)
    run.csv("exponents.csv", ["i", "lambda", "ci"], [(i + 1, v, c) for i, (v, c) in enumerate(spec)])
    for i, (v, c) in enumerate(spec, start=1):
        run.stat(f"lambda_{i}", v)
    run.stat("duality_gap_max", max(abs(spec[i][0] - spec[mu.d - 2 - i][0]) for i in range(mu.d - 1)))
    run.check("exponents positive", all(v - c > 0 for v, c in spec))


def _drift_eval(cfg, run):
    mu = _measure(cfg)
    params = _params(cfg, run, mu)
    x = _basis(cfg, mu.d)
    val, sub = f_A_argmax(x, params)
    run.csv("drift.csv", ["quantity", "value"],
            [("f_A", val), ("rank", 0 if sub is None else sub.rank), ("C", variation_constant(params))])
    if sub is not None:
        run.csv("argmax.csv", None, sub.coeffs)
    run.stat("f_A", val)


def _drift_check(cfg, run):
    mu = _measure(cfg)
    params = _params(cfg, run, mu)
    n = cfg.get("measure", "n", 50)
    count = cfg.get("grid", "count", 200)
    samples = cfg.get("grid", "samples", 500)
    lam = cfg.get("measure", "lam", 0.5 * min(params.exponents))
    C = variation_constant(params)
    A0 = cfg.get("measure", "a0")
    if A0 is None:
        # Twice the upper 2.5% quantile of C log|g_n|: beyond it one n-step move cannot cross the top.
        g = sample_products(mu, n, 2000, cfg.seed, start=10**6)
        A0 = 2 * float(np.quantile(C * np.log(np.linalg.norm(g, 2, axis=(1, 2))), 0.975))
    run.stat("A0", A0)
    if cfg.get("measure", "calibrate", False):
        # Fresh validation lattices per candidate A, high for that A.
        params, log = calibrate_A(params, lambda p: sample_high_lattices(p, A0, 50, cfg.seed + 3), A0)
        run.csv("calibration.csv", ["A", "violations", "tested"], log)
    run.stat("A", params.A)
    lattices = sample_high_lattices(params, A0, count, cfg.seed + 1)
    rep = check_probable_decrease(mu, params, n, lattices, A0, samples, cfg.seed + 2, lam=lam)
    run.csv("decrease.csv", ["lattice", "f_before", "fraction"],
            [(r.index, r.f_before, r.fraction) for r in rep.rows])
    lhs, rhs = variation_samples(mu, params, n, lattices, cfg.seed + 4)
    run.csv("variation.csv", ["delta_phi", "bound"], zip(lhs, rhs))
    unique = [check_uniqueness_at_top(x, params, A0) for x in lattices]
    fr = rep.fractions()
    thr = cfg.get("grid", "threshold", 0.9)
    run.stat("lambda", lam)
    run.stat("min_fraction", float(fr.min()))
    run.stat("variation_violations", int(np.sum(lhs > rhs + 1e-9)))
    run.check(f"decrease fraction >= {thr:g} on every lattice", bool(np.all(fr >= thr)))
    run.check("variation bound", bool(np.all(lhs <= rhs + 1e-9)))
    run.check("unique top sublattices", all(unique))


def _equidistribute(cfg, run):
    mu = _measure(cfg)
    r = cfg.get("grid", "radius", 1.0)
    rep = siegel_equidistribution(mu, _basis(cfg, mu.d), cfg.get("grid", "steps", 100_000), r,
                                  cfg.get("grid", "trials", 10), cfg.seed)
    run.csv("equidistribution.csv", ["trajectory", "average"], enumerate(rep.per_trajectory))
    tol = cfg.get("grid", "tolerance", 0.05)
    run.stat("average", rep.average)
    run.stat("reference", rep.reference)
    run.stat("relative_error", rep.relative_error)
    run.check(f"relative error <= {tol:g}", rep.relative_error <= tol)


DISPATCH = {
    "simulate": _simulate,
    "returns": _returns,
    "mass-profile": _mass_profile,
    "occupation": _occupation,
    "sd-check": _sd_check,
    "counterexample-mass": _counterexample_mass,
    "counterexample-empirical": _counterexample_empirical,
    "lyapunov": _lyapunov,
    "drift-eval": _drift_eval,
    "drift-check": _drift_check,
    "equidistribute": _equidistribute,
}


def run(cfg: ExperimentConfig) -> RunSummary:
    """Run one experiment and write its artifacts and ``summary.txt`` into ``cfg.out``."""
    t0 = time.perf_counter()
    r = _Run(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    DISPATCH[cfg.kind](cfg, r)
    r.summary.wall_time = time.perf_counter() - t0
    atomic_write(os.path.join(cfg.out, "summary.txt"), r.summary.render())
    return r.summary

