import numpy as np
import pytest

from driftwalk.bq import MatrixMeasure, QuasiNormParams, generic_basis, matrix_walk_kernel, shortest_norm_2d, sl2_generators
from driftwalk.chain import simulate
from driftwalk.constants import SIEGEL_D2_R1, SIEGEL_D2_R1_STDERR
from driftwalk.equidist import (
    drift_path,
    occupation_experiment,
    primitive_ball_count,
    siegel_equidistribution,
    siegel_reference,
    walk_2d,
)
from driftwalk.exceptions import DomainError
from driftwalk.lattice import short_vectors

MU = MatrixMeasure.uniform(sl2_generators())


def test_reference_constant_matches_oracle():
    assert siegel_reference(2, 1.0) == pytest.approx(6 / np.pi, rel=1e-14)
    assert abs(siegel_reference(2, 1.0) - SIEGEL_D2_R1) < 3 * SIEGEL_D2_R1_STDERR
    assert siegel_reference(2, 2.0) == pytest.approx(4 * siegel_reference(2, 1.0))
    assert siegel_reference(2, 1e-9) < 1e-16


def test_fast_walk_matches_batched_kernel():
    x0 = generic_basis(2)
    # Same draws and atom choices; rounding differences grow at the Lyapunov rate,
    # so the two engines are compared over the first 100 steps only.
    fast = walk_2d(MU, x0, 100, seed=4, index=0)
    slow = simulate(matrix_walk_kernel(MU), x0, 100, seed=4)[1:]
    np.testing.assert_allclose(shortest_norm_2d(fast), shortest_norm_2d(slow), rtol=1e-9)
    long = walk_2d(MU, x0, 5000, seed=4, index=0)
    assert np.allclose(np.abs(np.linalg.det(long)), 1.0)
    np.testing.assert_array_equal(long, walk_2d(MU, x0, 5000, seed=4, index=0))


@pytest.mark.parametrize("r", [0.5, 1.0, 1.7, 3.0])
def test_ball_count_matches_enumeration(r):
    path = walk_2d(MU, generic_basis(2), 400, seed=2)
    got = primitive_ball_count(path, r)
    want = [2 * sum(1 for a in short_vectors(b, r) if np.gcd(*a) == 1) for b in path]
    assert got.tolist() == want


def test_ball_count_small_radius_and_standard_lattice():
    assert primitive_ball_count(np.eye(2)[None], 1.0).tolist() == [4]
    assert primitive_ball_count(np.eye(2)[None], np.sqrt(2)).tolist() == [8]
    assert primitive_ball_count(np.eye(2)[None], 0.5).tolist() == [0]


def test_siegel_report_and_small_radius():
    rep = siegel_equidistribution(MU, generic_basis(2), 20_000, 1.0, 2, seed=0)
    assert rep.relative_error < 0.1 and rep.per_trajectory.shape == (2,)
    tiny = siegel_equidistribution(MU, generic_basis(2), 1000, 1e-6, 1, seed=0)
    assert tiny.average == 0.0
    with pytest.raises(DomainError):
        siegel_equidistribution(MU, generic_basis(2), 10, 0.0, 1, 0)


def test_occupation_examples():
    params = QuasiNormParams(2, 1.0, (0.1,))
    R = [float("inf"), 0.0, 5.0, 1.0, 50.0]
    tab = occupation_experiment(MU, params, generic_basis(2), 5000, R, seed=1)
    assert tab.at_most[0] == 1.0
    vals = drift_path(MU, params, generic_basis(2), 5000, seed=1)
    assert tab.at_most[1] == np.mean(vals == 0.0)
    order = np.argsort(R)
    assert np.all(np.diff(tab.at_most[order]) >= 0)
    # Z^2 is fixed by integer matrices, so f_A stays 0.
    flat = occupation_experiment(MU, params, np.eye(2), 1000, [0.0], seed=1)
    assert flat.at_most.tolist() == [1.0]
    with pytest.raises(DomainError):
        occupation_experiment(MU, params, np.eye(2), 999, [0.0], seed=1)
