import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from easvar.core import Graph
from easvar.eas import (EasParams, EpsilonMode, bmin_statistic, calibrate_d, epsilon_default, h_function,
                        h_function_for_graph, scatter_alpha)
from easvar.estim import least_squares

from conftest import random_series
from oracles import constrained_min, random_spd


def test_bmin_single_coordinate():
    assert bmin_statistic(np.array([[3.0]]), np.array([2.0])) == pytest.approx(0.5 * 36.0)


def test_bmin_identity_is_half_min_square():
    alpha = np.array([0.3, -2.0, 1.5])
    assert bmin_statistic(np.eye(3), alpha) == pytest.approx(0.5 * 0.09)


def test_bmin_matches_support_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(60):
        size = int(rng.integers(1, 7))
        m = random_spd(rng, size)
        alpha = rng.normal(size=size)
        ref = constrained_min(m, alpha)
        assert bmin_statistic(m, alpha) == pytest.approx(ref, rel=1e-8)


def test_bmin_singular_is_zero():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert bmin_statistic(m, np.array([1.0, 2.0])) == 0.0


def test_bmin_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        bmin_statistic(np.eye(2), np.ones(3))


def test_epsilon_modes():
    practical = EasParams()
    assert epsilon_default(7.0, 100, 3, 4, practical) == 7.0
    full = EasParams(EpsilonMode.FULL_DEFAULT, rho=0.4, g_o_size_hint=3)
    growth = 100 ** 0.6 * 9 * (0.5 * math.log(math.log(100)) * 4 - 3)
    assert epsilon_default(2.0, 100, 3, 4, full) == pytest.approx(2.0 * max(1.0, growth))
    # a small graph pushes the growth term below one
    assert epsilon_default(2.0, 100, 3, 1, full) == 2.0
    np.testing.assert_allclose(epsilon_default(np.array([1.0, 3.0]), 100, 3, 4, practical), [1.0, 3.0])
    with pytest.raises(ValueError):
        epsilon_default(1.0, 100, 3, 4, EasParams("full"))


@pytest.mark.parametrize("kwargs", [dict(rho=0.5), dict(rho=0.0), dict(d=-1.0), dict(c_bound=0.0),
                                    dict(c_bound=1.5), dict(epsilon_mode="nope")])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        EasParams(**kwargs)


def dense_h(data, graph, alpha, sigma2, params):
    """h computed from the dense vec-form matrices."""
    p, n = data.p, data.n
    z = np.kron(data.x_mat.T, np.eye(p))[:, graph.sorted_active()]
    winv = np.kron(np.eye(n), np.diag(1.0 / sigma2))
    m = z.T @ winv @ z
    lam = np.trace(m)
    fit = least_squares(data, graph)
    ok = (bmin_statistic(m, alpha) >= lam and fit.rss.min() >= params.d
          and np.linalg.norm(scatter_alpha(graph, alpha), 2) < 1.0)
    return int(ok), bmin_statistic(m, alpha), lam


def test_h_matches_dense_construction():
    rng = np.random.default_rng(3)
    data = random_series(3, 80, seed=3)
    params = EasParams(d=0.5)
    tried = agree = ones = 0
    for _ in range(200):
        g = Graph.from_mask(rng.random((3, 3)) < 0.5)
        if g.size == 0:
            continue
        tried += 1
        fit = least_squares(data, g)
        sigma2 = rng.uniform(0.5, 1.5, 3)
        alpha = fit.alpha_vector() + rng.normal(scale=0.2, size=g.size)
        ref, _, _ = dense_h(data, g, alpha, sigma2, params)
        got = h_function(alpha, sigma2, fit, params)
        agree += got == ref
        ones += got
    assert agree == tried
    assert 0 < ones < tried


def test_h_components():
    data = random_series(2, 200, seed=4)
    g = Graph.diagonal(2)
    fit = least_squares(data, g)
    sigma2 = np.ones(2)
    alpha = np.array([0.5, 0.5])
    assert h_function(alpha, sigma2, fit, EasParams()) == 1
    # epsilon above the statistic
    assert h_function(alpha, sigma2, fit, EasParams(), epsilon=1e12) == 0
    # RSS floor above the smallest residual sum of squares
    assert h_function(alpha, sigma2, fit, EasParams(d=fit.rss.min() * 1.01)) == 0
    # spectral constraint, strict at c = 1 and closed below 1
    assert h_function(np.array([1.0, 0.5]), sigma2, fit, EasParams(), epsilon=0.0) == 0
    assert h_function(np.array([0.7, 0.5]), sigma2, fit, EasParams(c_bound=0.7), epsilon=0.0) == 1
    assert h_function(np.array([0.71, 0.5]), sigma2, fit, EasParams(c_bound=0.7), epsilon=0.0) == 0


def test_h_for_graph_handles_degenerate_graphs():
    data = random_series(2, 30, seed=1)
    assert h_function_for_graph(data, Graph(2, frozenset()), np.zeros(0), np.ones(2), EasParams()) == 0
    series = np.zeros((2, 11))
    series[:, 1:] = np.random.default_rng(0).normal(size=10)
    from easvar.core import TimeSeriesData
    collinear = TimeSeriesData(series)
    assert h_function_for_graph(collinear, Graph.full(2), np.ones(4) * 0.1, np.ones(2), EasParams()) == 0


def test_calibrate_d():
    data = random_series(3, 60, seed=8)
    g = Graph.diagonal(3)
    assert calibrate_d(data, g) == pytest.approx(least_squares(data, g).rss.min() / 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_bmin_never_exceeds_half_min_gram_scaled(size, seed):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, size)
    alpha = rng.normal(size=size)
    value = bmin_statistic(m, alpha)
    # setting b = alpha with one coordinate zeroed is always feasible
    i = int(np.argmin(np.abs(alpha)))
    e = np.zeros(size)
    e[i] = alpha[i]
    assert 0.0 <= value <= 0.5 * float(e @ m @ m @ e) * (1 + 1e-9)
