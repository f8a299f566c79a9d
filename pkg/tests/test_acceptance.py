"""Acceptance criteria 1-12, each at its stated tolerance and runtime budget."""

import os
import time

import numpy as np
import pytest

from driftwalk.bq import (
    MatrixMeasure,
    QuasiNormParams,
    calibrate_A,
    check_probable_decrease,
    check_uniqueness_at_top,
    elementary_generators,
    estimate_lyapunov,
    f_A,
    f_A_argmax,
    lyapunov_spectrum,
    random_lattice,
    sample_high_lattices,
    sample_products,
    sl2_generators,
    variation_constant,
    variation_samples,
)
from driftwalk.chain import (
    IDENTITY,
    foster_bound_check,
    increment_kernel,
    mass_escape_profile,
    rec_law_search,
)
from driftwalk.cli import main
from driftwalk.counterexamples import MassEscapeSchedule, demonstrate_mass_escape, stay_probability
from driftwalk.dist import DriftSpec, FiniteDist, build_dominating_pair, dominates, standard_realisation
from driftwalk.equidist import occupation_experiment, siegel_equidistribution
from driftwalk.bq import generic_basis
from driftwalk.constants import SIEGEL_D2_R1, SIEGEL_D2_R1_STDERR
from driftwalk.exceptions import DominanceGapError
from driftwalk.lattice import hnf_canonicalize

from brute import rank1, rank2_in_3
from conftest import record
from oracles import mean_return_time, walk_matrix

STEP = FiniteDist.uniform([-2.0, 1.0])
REFLECTED = increment_kernel(STEP, floor=0.0)
SL2 = MatrixMeasure.uniform(sl2_generators())


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed <= self.seconds


def finish(number, ok, budget, detail):
    ok = bool(ok) and budget.ok
    record(number, ok, f"{detail} [{budget.elapsed:.1f} s of {budget.seconds} s]")
    assert ok, detail


# ---------------------------------------------------------------- 1

def test_criterion_01_mass_escape_checkpoint():
    with Budget(120) as b:
        sched = MassEscapeSchedule.from_jumps([1, 1000], trials=100_000, seed=0)
        rows, first = demonstrate_mass_escape(sched, R=10.0, trials=100_000, seed=1)
    row = next(r for r in rows if r.alpha == pytest.approx(1e-3))
    exact = stay_probability(1e-3, 10.0)
    ok = abs(row.estimate - exact) <= 0.01 and abs(row.estimate - 0.3718) <= 0.01 and row.flagged
    finish(1, ok, b, f"P(X<=R)={row.estimate:.5f} analytic={exact:.5f} flagged={row.flagged} "
                     f"checkpoint n={row.n}+{row.k}")


# ---------------------------------------------------------------- 2

def _dyadic_dist(rng, max_atoms=20):
    k = int(rng.integers(1, max_atoms + 1))
    values = np.sort(rng.choice(np.arange(-60, 61), size=k, replace=False)).astype(float) / 4
    cuts = np.sort(rng.choice(np.arange(1, 1 << 20), size=k - 1, replace=False))
    edges = np.concatenate([[0], cuts, [1 << 20]])
    return FiniteDist(values, np.diff(edges) / float(1 << 20))


def test_criterion_02_realisation_and_dominance():
    rng = np.random.default_rng(2)
    violations = 0
    with Budget(30) as b:
        dists = [_dyadic_dist(rng) for _ in range(10_000)]
        for z in dists:
            r = standard_realisation(z)
            if r.pushforward() != z:
                violations += 1
            if np.any(np.diff(r.values) >= 0) or r.breakpoints[-1] != 1.0:
                violations += 1
        for a, c in zip(dists[::2], dists[1::2]):
            # Push some pairs towards dominance by shifting values up.
            cands = [(a, c), (FiniteDist(a.values + 20, a.weights), a), (a, FiniteDist(a.values - 1, a.weights))]
            for u, v in cands:
                ru, rv = standard_realisation(u), standard_realisation(v)
                s = np.union1d(ru.breakpoints, rv.breakpoints)
                if dominates(u, v) != bool(np.all(rv(s) <= ru(s))):
                    violations += 1
    finish(2, violations == 0, b, f"{len(dists)} laws, {violations} violations")


# ---------------------------------------------------------------- 3

def _random_Z(rng):
    k = int(rng.integers(1, 8))
    vals = np.unique(np.round(rng.exponential(1.0, k), 3))
    w = rng.dirichlet(np.ones(vals.size))
    return FiniteDist(vals, w)


def _adversaries(rng, Z, lam, alpha, count):
    """Increment laws below Z' on (0, a] and at or below -lam elsewhere, a <= alpha, plus random laws."""
    real = standard_realisation(Z)
    left = np.concatenate([[0.0], real.breakpoints[:-1]])
    out = []
    for j in range(count):
        a = alpha * (1.0 if j % 2 == 0 else rng.random())
        mass = np.clip(np.minimum(real.breakpoints, a) - left, 0.0, None)
        pairs = [(v - (0.0 if j % 3 == 0 else rng.exponential(0.2)), w) for v, w in zip(real.values, mass) if w > 0]
        rest = 1.0 - sum(w for _, w in pairs)
        if rest > 0:
            pieces = rng.dirichlet(np.ones(3)) * rest
            pairs += [(-lam - (0.0 if j % 4 == 0 else rng.exponential(0.5)), p) for p in pieces]
        out.append(FiniteDist.from_pairs(pairs))
    for _ in range(count):
        k = int(rng.integers(1, 6))
        out.append(FiniteDist(np.unique(rng.normal(-lam, 1.0, k)), None) if False else
                   FiniteDist.from_pairs(zip(rng.normal(-lam, 1.0, k), rng.dirichlet(np.ones(k)))))
    return out


def test_criterion_03_dominating_pair():
    rng = np.random.default_rng(3)
    triples = counter = tested = 0
    worst_mean = 0.0
    with Budget(60) as b:
        while triples < 1000:
            Z = _random_Z(rng)
            lam, alpha = float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.01, 0.5))
            try:
                spec = build_dominating_pair(Z, 1.0, lam, alpha)
            except DominanceGapError:
                continue
            triples += 1
            worst_mean = max(worst_mean, abs(spec.Z1.mean() + spec.lambda1))
            for D in _adversaries(rng, Z, lam, alpha, 10):
                if dominates(Z, D) and D.cdf(-lam) >= 1 - alpha - 1e-15:
                    tested += 1
                    counter += not dominates(spec.Z1, D, tol=1e-12)
    ok = worst_mean <= 1e-12 and counter == 0 and tested > 1000
    finish(3, ok, b, f"{triples} triples, |mean(Z1)+lambda1|<={worst_mean:.1e}, "
                     f"{tested} admissible laws, {counter} counterexamples")


# ---------------------------------------------------------------- 4

def test_criterion_04_foster_bound():
    spec = DriftSpec(0.0, 0.5, FiniteDist.uniform([0.0, 1.0]), STEP)
    with Budget(60) as b:
        rep = foster_bound_check(REFLECTED, IDENTITY, spec, 20.0, 100_000, 20_000, seed=4)
    exact = mean_return_time(walk_matrix([-2, 1], [0.5, 0.5], 400), 20, [0])
    ok = rep.mean <= 40 * 1.05 and abs(rep.mean - exact) <= 0.01 * exact
    finish(4, ok, b, f"mean={rep.mean:.3f} exact={exact:.3f} bound={rep.bound:g}")


# ---------------------------------------------------------------- 5

def test_criterion_05_rec_law():
    eps = 0.1
    grid = np.unique(np.geomspace(5, 2000, 20).astype(int))
    assert grid.size == 20
    with Budget(120) as b:
        choice = rec_law_search(REFLECTED, IDENTITY, 0.0, [0.0], eps, 2000, 10_000, seed=5)
        prof = mass_escape_profile(REFLECTED, IDENTITY, choice.R, 20.0, grid, 10_000, seed=6,
                                   eps=eps, lambda1=0.5)
    ok = prof.violations == 0
    finish(5, ok, b, f"R={choice.R:g} window={choice.window.l} eps={eps} "
                     f"max(P-3sd-bound)={np.max(prof.ci_low - prof.bound):.3f} violations={prof.violations}")


# ---------------------------------------------------------------- 6

def _brute_argmax(b, params):
    """Largest phi_A over box-enumerated candidates; the maximiser as a normal form key."""
    d = params.d
    best, key = 0.0, None
    for a, c in rank1(b, params.threshold(1)).items():
        v = -(params.A * (d - 1) + np.log(c)) / params.lam(1)
        if v > best:
            best, key = v, ("rank1", tuple(hnf_canonicalize([a])[0]))
    if d == 3:
        for n, c in rank2_in_3(b, params.threshold(2)).items():
            v = -(params.A * 2 + np.log(c)) / params.lam(2)
            if v > best:
                best, key = v, ("rank2", n)
    return best, key


def _key(sub):
    if sub is None:
        return None
    if sub.rank == 1:
        return ("rank1", sub.coeffs[0])
    return "rank2", sub.coeffs


def test_criterion_06_f_A_brute_force():
    rng = np.random.default_rng(6)
    mismatches = positive = 0
    worst = 0.0
    with Budget(300) as b:
        for k in range(1000):
            d = 2 if k % 2 == 0 else 3
            params = QuasiNormParams(d, 0.05, (0.3, 0.5)[: d - 1])
            x = random_lattice(d, rng, spread=2.0)
            val, sub = f_A_argmax(x, params)
            ref, key = _brute_argmax(x, params)
            positive += ref > 0
            worst = max(worst, abs(val - ref), abs(f_A(x, params) - ref))
            mine = _key(sub)
            if mine is not None and mine[0] == "rank2":
                same = key is not None and key[0] == "rank2" and all(np.dot(r, key[1]) == 0 for r in mine[1])
            else:
                same = mine == key
            mismatches += not same or abs(val - ref) > 1e-9
    finish(6, mismatches == 0, b, f"1000 lattices ({positive} with f_A > 0), max |diff|={worst:.1e}, "
                                  f"{mismatches} mismatches")


# ---------------------------------------------------------------- 7

def test_criterion_07_uniqueness_at_top():
    mu = MatrixMeasure.uniform(elementary_generators(3))
    with Budget(300) as b:
        ex = tuple(v for v, _ in lyapunov_spectrum(mu, 3000, 20, seed=70))
        start = QuasiNormParams(3, 1.0, ex)
        C = variation_constant(start)
        g = sample_products(mu, 10, 2000, seed=71)
        A0 = 2 * float(np.quantile(C * np.log(np.linalg.norm(g, 2, axis=(1, 2))), 0.975))
        params, log = calibrate_A(start, lambda p: sample_high_lattices(p, A0, 100, seed=72), A0)
        lattices = sample_high_lattices(params, A0, 1000, seed=73)
        bad = sum(not check_uniqueness_at_top(x, params, A0) for x in lattices)
    finish(7, bad == 0, b, f"A={params.A:g} (log {log}) A0={A0:.1f}, 1000 lattices, {bad} with two tops")


# ---------------------------------------------------------------- 8

def test_criterion_08_probable_decrease():
    n = 50
    with Budget(600) as b:
        lam_hat, _ = estimate_lyapunov(SL2, 1, 20_000, 20, seed=80)
        params = QuasiNormParams(2, 1.0, (lam_hat,))
        C = variation_constant(params)
        g = sample_products(SL2, n, 2000, seed=81)
        A0 = 2 * float(np.quantile(C * np.log(np.linalg.norm(g, 2, axis=(1, 2))), 0.975))
        lattices = sample_high_lattices(params, A0, 200, seed=82)
        rep = check_probable_decrease(SL2, params, n, lattices, A0, 500, seed=83, lam=lam_hat / 2)
    fr = rep.fractions()
    ok = fr.size == 200 and np.all(fr >= 0.9)
    finish(8, ok, b, f"lambda_hat={lam_hat:.4f} A0={A0:.1f} min fraction={fr.min():.3f} "
                     f"mean={fr.mean():.3f} over {fr.size} lattices")


# ---------------------------------------------------------------- 9

def test_criterion_09_variation_control():
    rng = np.random.default_rng(9)
    mu3 = MatrixMeasure.uniform(elementary_generators(3))
    with Budget(120) as b:
        p3 = QuasiNormParams(3, 0.5, tuple(v for v, _ in lyapunov_spectrum(mu3, 2000, 10, seed=90)))
        p2 = QuasiNormParams(2, 0.5, (estimate_lyapunov(SL2, 1, 2000, 10, seed=91)[0],))
        l3 = [random_lattice(3, rng, spread=2.0) for _ in range(3000)]
        l2 = [random_lattice(2, rng, spread=2.0) for _ in range(4000)]
        lhs3, rhs3 = variation_samples(mu3, p3, 5, l3, seed=92)
        lhs2, rhs2 = variation_samples(SL2, p2, 20, l2, seed=93)
        lhs, rhs = np.concatenate([lhs3, lhs2]), np.concatenate([rhs3, rhs2])
    bad = int(np.sum(lhs > rhs + 1e-9))
    finish(9, bad == 0 and lhs.size >= 10_000, b,
           f"{lhs.size} samples, {bad} violations, max slack used {np.max(lhs - rhs):.3f}")


# ---------------------------------------------------------------- 10

def test_criterion_10_non_escape():
    grid = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
    with Budget(300) as b:
        lam_hat, _ = estimate_lyapunov(SL2, 1, 20_000, 20, seed=100)
        params = QuasiNormParams(2, 1.0, (lam_hat,))
        std = occupation_experiment(SL2, params, np.eye(2), 1_000_000, grid, seed=101)
        gen = occupation_experiment(SL2, params, generic_basis(2), 1_000_000, grid, seed=102)
    ok = np.any(std.above < 0.05) and np.any(gen.above < 0.05)
    first = grid[int(np.argmax(gen.above < 0.05))] if np.any(gen.above < 0.05) else None
    finish(10, ok, b, f"from Z^2 above(R=0)={std.above[0]:.3f}; generic start: "
                      f"above={np.round(gen.above, 4).tolist()} first R={first}")


# ---------------------------------------------------------------- 11

def test_criterion_11_equidistribution():
    with Budget(600) as b:
        rep = siegel_equidistribution(SL2, generic_basis(2), 100_000, 1.0, 10, seed=110)
    oracle_ok = abs(rep.reference - SIEGEL_D2_R1) <= 3 * SIEGEL_D2_R1_STDERR
    ok = rep.relative_error <= 0.05 and oracle_ok
    finish(11, ok, b, f"average={rep.average:.5f} reference={rep.reference:.5f} (oracle {SIEGEL_D2_R1}) "
                      f"relative error={rep.relative_error:.4f}")


# ---------------------------------------------------------------- 12

CLI_RUNS = [
    (["counterexample", "mass"], ""),
    (["returns"], "[grid]\ntrials = 20000\n"),
    (["mass-profile"], "[chain]\nepsilon = 0.1\n[grid]\ntrials = 5000\n"),
    (["sd-check"], "[grid]\ntrials = 5000\n"),
    (["occupation"], "[measure]\nbasis = standard\n[grid]\nsteps = 200000\n"),
    (["equidistribute"], "[grid]\nsteps = 20000\ntrials = 3\n"),
    (["drift-check"], "[grid]\ncount = 40\nsamples = 200\n"),
    (["counterexample", "empirical"], ""),
    (["lyapunov"], "[measure]\nlyapunov_steps = 5000\n"),
]


def _artifacts(folder):
    return {n: (folder / n).read_bytes() for n in sorted(os.listdir(folder)) if n.endswith(".csv")}


def test_criterion_12_determinism(tmp_path):
    diffs = []
    with Budget(600) as b:
        for argv, extra in CLI_RUNS:
            kind = "-".join(argv)
            cfg = tmp_path / f"{kind}.cfg"
            cfg.write_text(f"[experiment]\nkind = {kind}\nseed = 12\n{extra}")
            outs = []
            for rep in ("a", "b"):
                out = tmp_path / f"{kind}-{rep}"
                code = main(argv + ["--config", str(cfg), "--out", str(out)])
                outs.append((code, _artifacts(out)))
            if outs[0] != outs[1] or not outs[0][1]:
                diffs.append(kind)
    finish(12, not diffs, b, f"{len(CLI_RUNS)} experiments rerun, differing: {diffs or 'none'}")
