import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starris.numerics import (
    NoSignChange,
    NotHermitian,
    NotPSD,
    PhaseGrid,
    bisect_decreasing_batch,
    bisect_root,
    hermitian_eig,
    proj_discrete_phase,
    wrap_angle,
)


def test_grid_points_exact():
    assert np.array_equal(PhaseGrid(4).points(), 2 * math.pi * np.arange(4) / 4)
    with pytest.raises(ValueError):
        PhaseGrid(0).points()
    with pytest.raises(ValueError):
        PhaseGrid(-1)


@pytest.mark.parametrize(
    "theta,L,expected",
    [(0.3, 4, 0.0), (2.0, 4, math.pi / 2), (math.pi / 2, 2, 0.0), (-0.1, 4, 0.0), (6.2, 8, 0.0)],
)
def test_projection_examples(theta, L, expected):
    assert proj_discrete_phase(theta, PhaseGrid(L)) == pytest.approx(expected, abs=1e-15)


def test_continuous_wraps():
    assert proj_discrete_phase(-0.5, PhaseGrid(0)) == pytest.approx(2 * math.pi - 0.5)
    assert proj_discrete_phase(7.0, PhaseGrid(0)) == pytest.approx(7.0 - 2 * math.pi)


def test_wrap_range():
    t = wrap_angle(np.array([-1e-17, 2 * math.pi, -2 * math.pi, 10.0]))
    assert np.all((t >= 0) & (t < 2 * math.pi))


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50, allow_nan=False), st.integers(1, 64))
def test_projection_is_nearest_point(theta, L):
    grid = PhaseGrid(L)
    got = proj_discrete_phase(theta, grid)
    pts = grid.points()
    dist = np.abs(np.exp(1j * theta) - np.exp(1j * pts))
    assert abs(np.exp(1j * theta) - np.exp(1j * got)) <= dist.min() + 1e-12
    # idempotent on grid points
    assert proj_discrete_phase(got, grid) == pytest.approx(got, abs=1e-12)


def test_eig_identity_and_rank_one():
    U, lam = hermitian_eig(np.eye(3))
    assert np.allclose(lam, 1) and np.allclose(U @ U.conj().T, np.eye(3))
    q = np.array([1, 1j, 0]) / math.sqrt(2)
    _, lam = hermitian_eig(np.outer(q, q.conj()))
    assert np.allclose(lam, [1, 0, 0], atol=1e-14)


def test_eig_reconstruction_random_psd():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = A @ A.conj().T
    U, lam = hermitian_eig(H)
    assert np.all(np.diff(lam) <= 0)
    assert np.linalg.norm(U @ np.diag(lam) @ U.conj().T - H) <= 1e-8 * max(1, np.linalg.norm(H))
    assert np.linalg.norm(U.conj().T @ U - np.eye(8)) <= 1e-8


def test_eig_errors():
    with pytest.raises(NotHermitian):
        hermitian_eig(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(NotPSD):
        hermitian_eig(np.diag([1.0, -1.0]))


def test_bisect_examples():
    assert bisect_root(lambda x: x - 1, 0, 2, 1e-10) == pytest.approx(1.0, abs=1e-10)
    assert bisect_root(lambda m: 1 / (1 + m) ** 2 - 0.25, 0, 4, 1e-12) == pytest.approx(1.0, abs=1e-10)
    f = lambda x: math.tanh(x - 0.3)
    assert bisect_root(f, -2, 2) == pytest.approx(bisect_root(lambda x: -f(x), -2, 2), abs=1e-12)
    with pytest.raises(NoSignChange):
        bisect_root(lambda x: x + 5, 0, 1)


def test_bisect_iteration_bound():
    calls = []

    def f(x):
        calls.append(x)
        return x - 0.123456

    bisect_root(f, 0, 1, 1e-6)
    assert len(calls) - 2 <= math.ceil(math.log2(1 / 1e-6)) + 2


def test_batch_bisection_keeps_upper_end():
    target = np.array([0.5, 2.0, 3.7])
    mu = bisect_decreasing_batch(lambda m: target - m, np.zeros(3), np.full(3, 4.0), 1e-9)
    assert np.all(mu >= target) and np.all(mu - target <= 1e-8)
