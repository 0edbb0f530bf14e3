import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from trdopen.projection import (NormStats, ProjectionTriple, denormalize, fit_norm_stats,
                                normalize, orthogonal_project)


def brute_force_project(cube):
    t_n, m_n, n_n = cube.shape
    f_rd = np.zeros((m_n, n_n))
    f_td = np.zeros((t_n, n_n))
    f_tr = np.zeros((t_n, m_n))
    for t in range(t_n):
        for m in range(m_n):
            for n in range(n_n):
                v = cube[t, m, n]
                f_rd[m, n] += v / t_n
                f_td[t, n] += v / m_n
                f_tr[t, m] += v / n_n
    return f_rd, f_td, f_tr


def test_all_ones():
    for plane in orthogonal_project(np.ones((3, 5, 2))).planes():
        np.testing.assert_array_equal(plane, 1.0)


def test_matches_triple_loop(rng):
    cube = rng.random((5, 4, 3))
    for got, want in zip(orthogonal_project(cube).planes(), brute_force_project(cube)):
        assert np.abs(got - want).max() < 1e-12


def test_shapes(rng):
    trip = orthogonal_project(rng.random((7, 6, 5)))
    assert [p.shape for p in trip.planes()] == [(6, 5), (7, 5), (7, 6)]


def test_single_nonzero():
    cube = np.zeros((4, 5, 6))
    cube[1, 2, 3] = 6.0
    trip = orthogonal_project(cube)
    assert trip.f_rd[2, 3] == pytest.approx(6 / 4)
    assert trip.f_td[1, 3] == pytest.approx(6 / 5)
    assert trip.f_tr[1, 2] == pytest.approx(6 / 6)
    assert [np.count_nonzero(p) for p in trip.planes()] == [1, 1, 1]


def test_rejects_non_cube():
    with pytest.raises(ValueError):
        orthogonal_project(np.zeros((2, 2)))


cube_shapes = st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8))
finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.data(), cube_shapes, st.floats(-10, 10), st.floats(-10, 10))
def test_linearity(data, shape, a, b):
    x = data.draw(arrays(np.float64, shape, elements=finite))
    y = data.draw(arrays(np.float64, shape, elements=finite))
    lhs = orthogonal_project(a * x + b * y)
    px, py = orthogonal_project(x), orthogonal_project(y)
    for l, u, v in zip(lhs.planes(), px.planes(), py.planes()):
        scale = max(1.0, np.abs(a * u).max(), np.abs(b * v).max())
        assert np.abs(l - (a * u + b * v)).max() <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, cube_shapes, elements=finite))
def test_mean_preservation(cube):
    grand = cube.mean()
    for plane in orthogonal_project(cube).planes():
        assert abs(plane.mean() - grand) <= 1e-12 * max(1.0, np.abs(cube).max())


@settings(max_examples=60, deadline=None)
@given(cube_shapes, st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_argmax_stable_under_positive_scaling(shape, seed, c):
    cube = np.random.default_rng(seed).random(shape)
    for p, q in zip(orthogonal_project(cube).planes(), orthogonal_project(c * cube).planes()):
        assert p.argmax() == q.argmax()


def _triple(v):
    a = np.array([[float(v)]])
    return ProjectionTriple(a, a, a)


def test_norm_stats_constant_floor():
    stats = fit_norm_stats([_triple(3.0), _triple(3.0)])
    assert all(s.mean == 3.0 and s.std == 1e-8 for s in stats)


def test_norm_stats_population_std():
    stats = fit_norm_stats([_triple(0), _triple(2)])
    assert all(s.mean == 1.0 and s.std == 1.0 for s in stats)


def test_norm_stats_change_with_extra_sample():
    train = [_triple(0), _triple(2)]
    assert fit_norm_stats(train) != fit_norm_stats(train + [_triple(10)])


def test_norm_stats_errors():
    with pytest.raises(ValueError):
        fit_norm_stats([])
    with pytest.raises(ValueError):
        NormStats(0.0, 0.0)


def test_normalize_own_mean_is_zero():
    trip = ProjectionTriple(np.full((2, 2), 4.0), np.full((3, 2), 5.0), np.full((3, 2), 6.0))
    stats = (NormStats(4.0, 2.0), NormStats(5.0, 1.0), NormStats(6.0, 0.5))
    for p in normalize(trip, stats).planes():
        np.testing.assert_array_equal(p, 0.0)


def test_normalize_round_trip(rng):
    trip = orthogonal_project(rng.random((4, 5, 6)))
    stats = (NormStats(0.3, 2.0), NormStats(-1.0, 0.1), NormStats(7.0, 3.0))
    back = denormalize(normalize(trip, stats), stats)
    for a, b in zip(back.planes(), trip.planes()):
        assert np.abs(a - b).max() < 1e-12


def test_normalized_training_moments(rng):
    triples = [orthogonal_project(rng.random((6, 5, 4)) * 3 + 1) for _ in range(20)]
    stats = fit_norm_stats(triples)
    normed = [normalize(t, stats) for t in triples]
    for i in range(3):
        values = np.concatenate([n.planes()[i].ravel() for n in normed])
        assert abs(values.mean()) < 1e-6
        assert abs(values.std() - 1) < 1e-6
