from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftwalk.dist import (
    DriftSpec,
    FiniteDist,
    build_dominating_pair,
    dominates,
    empirical_distribution,
    standard_realisation,
    truncated_tail_expectation,
)
from driftwalk.exceptions import DominanceGapError, EmptySampleError


def brute_realisation(values, weights, s):
    """max{t : P(Z >= t) >= s} by scanning candidate t over the atoms, in exact arithmetic."""
    best = None
    for t in values:
        p = sum(w for v, w in zip(values, weights) if v >= t)
        if p >= s and (best is None or t > best):
            best = t
    return best


@st.composite
def dyadic_dists(draw, max_atoms=20):
    # Dyadic weights keep every float sum exact.
    k = draw(st.integers(1, max_atoms))
    values = sorted(draw(st.sets(st.integers(-50, 50), min_size=k, max_size=k)))
    cuts = sorted(draw(st.sets(st.integers(1, 1023), min_size=k - 1, max_size=k - 1)))
    edges = [0] + cuts + [1024]
    weights = [(b - a) / 1024 for a, b in zip(edges, edges[1:])]
    return FiniteDist([float(v) for v in values], weights)


def test_rejects_bad_atoms():
    with pytest.raises(ValueError):
        FiniteDist([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        FiniteDist([0.0, 1.0], [0.5, 0.4])
    with pytest.raises(ValueError):
        FiniteDist([0.0, 1.0], [1.0, 0.0])


def test_realisation_two_point():
    r = standard_realisation(FiniteDist.uniform([-1, 1]))
    assert list(r.breakpoints) == [0.5, 1.0]
    assert list(r.values) == [1.0, -1.0]
    assert r(0.5) == 1.0 and r(0.5000001) == -1.0 and r(1.0) == -1.0


def test_realisation_constant():
    r = standard_realisation(FiniteDist.point(3.5))
    assert list(r.values) == [3.5]
    assert r(1e-9) == 3.5 and r(1.0) == 3.5


def test_realisation_three_atoms_against_exact_inversion():
    values = [0, 1, 2]
    weights = [Fraction(1, 3)] * 3
    r = standard_realisation(FiniteDist.uniform(values))
    for s in [Fraction(1, 10), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(9, 10), Fraction(1)]:
        assert r(float(s)) == brute_realisation(values, weights, s)
    np.testing.assert_allclose(r.breakpoints, [1 / 3, 2 / 3, 1.0])
    assert list(r.values) == [2.0, 1.0, 0.0]


def test_dominates_examples():
    d0, d1 = FiniteDist.point(0), FiniteDist.point(1)
    z = FiniteDist.uniform([0, 2])
    assert dominates(d1, d0)
    assert dominates(z, z)
    # P(delta_1 > 1.5) = 0 < 1/2 and P(delta_1 > 0.5) = 1 > 1/2.
    assert not dominates(d1, z)
    assert not dominates(z, d1)


def test_truncated_tail_expectation_examples():
    assert truncated_tail_expectation(FiniteDist.point(2), 0.25) == pytest.approx(0.5)
    # 1 on (0, 0.5]: integral 0.5.
    assert truncated_tail_expectation(FiniteDist.uniform([-1, 1]), 0.5) == pytest.approx(0.5)
    z = FiniteDist([0.0, 1.0, 4.0], [0.5, 0.25, 0.25])
    assert truncated_tail_expectation(z, 1.0) == pytest.approx(z.mean())
    assert truncated_tail_expectation(z, 1 - 1e-12) == pytest.approx(z.mean(), abs=1e-10)


def test_build_dominating_pair_example_matches_monte_carlo():
    spec = build_dominating_pair(FiniteDist.point(1), R0=10, lam=0.5, alpha=0.1)
    assert spec.lambda1 == pytest.approx(0.35, abs=1e-15)
    assert spec.Z1 == FiniteDist.from_pairs([(1.0, 0.1), (-0.5, 0.9)])
    # Independent route: integrate Z'(s) 1_(0, alpha] - lam 1_(alpha, 1] over uniform s.
    s = np.random.default_rng(0).uniform(0, 1, 400_000)
    mc = np.where(s <= 0.1, 1.0, -0.5).mean()
    assert -mc == pytest.approx(0.35, abs=5e-3)


def test_build_dominating_pair_gap_error():
    with pytest.raises(DominanceGapError):
        build_dominating_pair(FiniteDist.point(1), 10, 0.5, 0.9)


@pytest.mark.parametrize("lam,alpha", [(0.5, 0.1), (2.0, 0.7), (1e-3, 0.5)])
def test_build_dominating_pair_zero_overshoot(lam, alpha):
    spec = build_dominating_pair(FiniteDist.point(0), 3.0, lam, alpha)
    assert spec.lambda1 == pytest.approx(lam * (1 - alpha), rel=1e-12)
    assert spec.Z0 == FiniteDist.point(0)


def test_drift_spec_invariants():
    with pytest.raises(ValueError):
        DriftSpec(0.0, 0.5, FiniteDist.point(1), FiniteDist.point(0.5))
    with pytest.raises(ValueError):
        DriftSpec(0.0, 0.4, FiniteDist.point(1), FiniteDist.point(-0.5))


def test_empirical_distribution():
    d = empirical_distribution([1, 1, 2])
    np.testing.assert_allclose(d.weights, [2 / 3, 1 / 3])
    assert empirical_distribution([5]) == FiniteDist.point(5)
    assert empirical_distribution([0, 1, 0, 1]) == FiniteDist.uniform([0, 1])
    with pytest.raises(EmptySampleError):
        empirical_distribution([])


@settings(max_examples=200, deadline=None)
@given(dyadic_dists())
def test_pushforward_law_is_exact(z):
    r = standard_realisation(z)
    assert r.pushforward() == z
    for t in np.concatenate([z.values, z.values - 0.5, [z.values[-1] + 1]]):
        assert r.measure_above(t) == z.tail(t)


@settings(max_examples=200, deadline=None)
@given(dyadic_dists(8), dyadic_dists(8))
def test_dominance_iff_realisations_ordered(a, b):
    ra, rb = standard_realisation(a), standard_realisation(b)
    s = np.union1d(ra.breakpoints, rb.breakpoints)
    assert dominates(a, b) == bool(np.all(rb(s) <= ra(s)))


@settings(max_examples=200, deadline=None)
@given(dyadic_dists(6), dyadic_dists(6), dyadic_dists(6))
def test_dominance_is_a_partial_order(a, b, c):
    assert dominates(a, a)
    if dominates(a, b) and dominates(b, a):
        assert a == b
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


def test_csv_round_trip(tmp_path):
    from driftwalk.io import read_finite_dist, write_finite_dist

    z = FiniteDist([-0.1, 1 / 3, 2.0], [0.2, 0.3, 0.5])
    path = tmp_path / "z.csv"
    write_finite_dist(path, z)
    assert path.read_text().splitlines()[0] == "value,weight"
    assert read_finite_dist(path) == z
