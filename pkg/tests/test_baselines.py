import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from easvar.baselines import (EnetConfig, coordinate_descent, cv_errors, enet_objective, enet_var,
                              forward_chain_splits, kkt_residual, lambda_grid, lambda_max, lasso_var,
                              soft_threshold)
from easvar.core import Graph, TimeSeriesData, generate_pattern, simulate_var
from easvar.estim import least_squares

from conftest import random_series


def moments(data):
    return data.xx / data.n, data.xy.T / data.n, np.sum(data.y_mat ** 2, axis=1) / data.n


def test_soft_threshold():
    np.testing.assert_allclose(soft_threshold(np.array([-3.0, -0.5, 0.0, 2.0]), 1.0), [-2.0, 0.0, 0.0, 1.0])


def test_zero_penalty_is_least_squares():
    data = random_series(4, 120, seed=1)
    a_hat, g = enet_var(data, EnetConfig(lambda_grid=(0.0,), tol=1e-12, max_iter=100_000))
    ls = least_squares(data, Graph.full(4)).a_matrix()
    assert np.max(np.abs(a_hat - ls)) < 1e-6
    assert g == Graph.full(4)


@pytest.mark.parametrize("l1", [1.0, 0.5, 0.1])
def test_lambda_max_kills_everything(l1):
    data = random_series(3, 80, seed=2)
    gram, cross, _ = moments(data)
    top = lambda_max(data, l1)
    assert np.all(coordinate_descent(gram, cross, top, l1) == 0)
    assert np.any(coordinate_descent(gram, cross, 0.95 * top, l1) != 0)


def test_kkt_at_returned_solutions():
    for seed in range(5):
        data = random_series(5, 100, seed=seed)
        gram, cross, _ = moments(data)
        for l1 in (1.0, 0.5):
            for frac in (0.5, 0.1, 0.01):
                lam = frac * lambda_max(data, l1)
                b = coordinate_descent(gram, cross, lam, l1, tol=1e-10)
                assert kkt_residual(gram, cross, b, lam, l1) < 1e-5


def test_enet_var_solution_satisfies_kkt_with_chosen_penalty():
    a0, _ = generate_pattern("random", 4, 3)
    data = simulate_var(a0, np.ones(4), 120, 3)
    cfg = EnetConfig(tol=1e-10)
    a_hat, _ = enet_var(data, cfg)
    gram, cross, _ = moments(data)
    # recover each row's penalty by scanning the grid for the smallest KKT residual
    grid = lambda_grid(data, cfg)
    per_row = [min(kkt_residual(gram, cross[j:j + 1], a_hat[j:j + 1], lam, cfg.l1_ratio) for lam in grid)
               for j in range(4)]
    assert max(per_row) < 1e-5


def test_objective_never_increases():
    data = random_series(4, 60, seed=4)
    gram, cross, yy = moments(data)
    lam = 0.05 * lambda_max(data, 0.5)
    values = []
    coordinate_descent(gram, cross, lam, 0.5, tol=1e-12,
                       callback=lambda b: values.append(enet_objective(gram, cross, yy, b, lam, 0.5)))
    values = np.array(values)
    start = enet_objective(gram, cross, yy, np.zeros_like(cross), lam, 0.5)
    assert np.all(values[0] <= start + 1e-12)
    assert np.all(np.diff(values, axis=0) <= 1e-12)


def test_lasso_equals_enet_with_unit_ratio():
    data = random_series(4, 100, seed=5)
    cfg = EnetConfig(l1_ratio=1.0, tol=1e-12)
    a1, g1 = enet_var(data, cfg)
    a2, g2 = lasso_var(data, EnetConfig(l1_ratio=0.3, tol=1e-12))
    assert np.max(np.abs(a1 - a2)) < 1e-8 and g1 == g2


@settings(max_examples=40, deadline=None)
@given(st.integers(6, 400), st.integers(1, 8))
def test_forward_chain_never_validates_on_the_past(n, folds):
    if n < folds + 1:
        return
    prev_train_end = 0
    for train, val in forward_chain_splits(n, folds):
        assert train[0] == 0 and np.all(np.diff(train) == 1)
        assert train[-1] + 1 == val[0] and val[-1] < n
        assert train.size > prev_train_end
        prev_train_end = train.size


def test_cv_uses_no_future_data():
    data = random_series(3, 90, seed=6)
    cfg = EnetConfig()
    grid = lambda_grid(data, cfg)
    seen = []

    def first_fold_only(n, folds):
        train, val = next(forward_chain_splits(n, folds))
        seen.append((train, val))
        yield train, val

    base = cv_errors(data, cfg, grid, first_fold_only)
    _, val = seen[0]
    # scramble everything after the validation block; the fold's errors must not move
    series = data.series.copy()
    series[:, val[-1] + 2:] = np.random.default_rng(0).normal(size=series[:, val[-1] + 2:].shape) * 50
    np.testing.assert_array_equal(base, cv_errors(TimeSeriesData(series), cfg, grid, first_fold_only))


def test_grid_is_descending_log_spaced():
    data = random_series(3, 60, seed=7)
    grid = lambda_grid(data, EnetConfig())
    assert grid.size == 50 and grid[0] == pytest.approx(lambda_max(data, 0.5))
    assert grid[-1] == pytest.approx(1e-3 * grid[0])
    np.testing.assert_allclose(np.diff(np.log(grid)), np.diff(np.log(grid))[0])


@pytest.mark.parametrize("kwargs", [dict(l1_ratio=0.0), dict(l1_ratio=1.5), dict(tol=0.0), dict(cv_folds=0),
                                    dict(lambda_grid=(1.0, 2.0)), dict(lambda_grid=()),
                                    dict(lambda_grid=(1.0, -1.0))])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EnetConfig(**kwargs)


def test_degenerate_inputs_rejected():
    with pytest.raises(ValueError):
        enet_var(TimeSeriesData(np.zeros((2, 30))))
    with pytest.raises(ValueError):
        enet_var(random_series(2, 4, seed=0), EnetConfig(cv_folds=5))
