"""LASSO / elastic-net VAR(1) baselines with forward-chaining cross-validation.

Every equation of a VAR(1) shares the same lagged design, so coordinate
descent is run on all equations at once in covariance form: with
``H = X X'/n`` and ``C[j] = X y_j'/n`` the objective of equation j is

    1/2 (y_j y_j'/n - 2 a' C[j] + a' H a) + lam (l1 |a|_1 + (1 - l1)/2 |a|^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .core import Graph, TimeSeriesData


@dataclass(frozen=True)
class EnetConfig:
    lambda_grid: Optional[tuple] = None
    l1_ratio: float = 0.5
    cv_folds: int = 5
    tol: float = 1e-7
    max_iter: int = 10000
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.l1_ratio <= 1.0:
            raise ValueError("l1_ratio must lie in (0, 1]")
        if self.cv_folds < 1 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("cv_folds, tol and max_iter must be positive")
        if self.lambda_grid is not None:
            grid = tuple(float(x) for x in self.lambda_grid)
            # a trailing 0 is allowed as an unpenalized sentinel
            if not grid or min(grid) < 0:
                raise ValueError("lambda grid must be nonempty and nonnegative")
            if any(a < b for a, b in zip(grid, grid[1:])):
                raise ValueError("lambda grid must be sorted descending")
            object.__setattr__(self, "lambda_grid", grid)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def enet_objective(gram, cross, yy, coef, lam, l1_ratio) -> np.ndarray:
    """Per-equation objective values for coefficient rows ``coef``."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (coef.shape[0],))
    smooth = 0.5 * (yy - 2.0 * np.sum(coef * cross, axis=1) + np.einsum("jk,kl,jl->j", coef, gram, coef))
    pen = lam * (l1_ratio * np.sum(np.abs(coef), axis=1) + 0.5 * (1.0 - l1_ratio) * np.sum(coef ** 2, axis=1))
    return smooth + pen


def coordinate_descent(gram: np.ndarray, cross: np.ndarray, lam, l1_ratio: float,
                       tol: float = 1e-7, max_iter: int = 10000,
                       init: Optional[np.ndarray] = None,
                       callback: Optional[Callable[[np.ndarray], None]] = None) -> np.ndarray:
    """Cyclic coordinate descent for all equations (rows of ``cross``) jointly.

    ``lam`` is a scalar or one value per equation.  Iterates until the
    largest coefficient change in a sweep is below ``tol``.
    """
    q, p = cross.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (q,))
    b = np.zeros((q, p)) if init is None else np.array(init, dtype=float)
    thresh = lam * l1_ratio
    denom = np.diag(gram)[None, :] + (lam * (1.0 - l1_ratio))[:, None]
    for _ in range(max_iter):
        delta = 0.0
        for k in range(p):
            old = b[:, k].copy()
            rho = cross[:, k] - b @ gram[:, k] + old * gram[k, k]
            with np.errstate(invalid="ignore", divide="ignore"):
                new = np.where(denom[:, k] > 0, soft_threshold(rho, thresh) / denom[:, k], 0.0)
            b[:, k] = new
            delta = max(delta, float(np.max(np.abs(new - old))))
        if callback is not None:
            callback(b)
        if delta < tol:
            break
    return b


def kkt_residual(gram, cross, coef, lam, l1_ratio) -> float:
    """Largest violation of the elastic-net optimality conditions."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (coef.shape[0],))[:, None]
    grad = cross - coef @ gram - lam * (1.0 - l1_ratio) * coef
    t = lam * l1_ratio
    active = coef != 0
    viol = np.where(active, np.abs(grad - t * np.sign(coef)), np.maximum(np.abs(grad) - t, 0.0))
    return float(np.max(viol))


def forward_chain_splits(n: int, folds: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Expanding-window splits: train on an initial segment, validate on the next block."""
    block = n // (folds + 1)
    if block < 1:
        raise ValueError("too few time points for the requested number of folds")
    for f in range(1, folds + 1):
        stop = n if f == folds else (f + 1) * block
        yield np.arange(0, f * block), np.arange(f * block, stop)


def lambda_max(data: TimeSeriesData, l1_ratio: float = 1.0) -> float:
    """Smallest penalty at which every coefficient is zero."""
    return float(np.max(np.abs(data.xy)) / (data.n * l1_ratio))


def lambda_grid(data: TimeSeriesData, cfg: EnetConfig) -> np.ndarray:
    if cfg.lambda_grid is not None:
        return np.array(cfg.lambda_grid)
    top = lambda_max(data, cfg.l1_ratio)
    if top <= 0:
        raise ValueError("all-zero data: degenerate penalty grid")
    return np.geomspace(top, cfg.lambda_min_ratio * top, cfg.n_lambda)


def _moments(x: np.ndarray, y: np.ndarray):
    n = x.shape[1]
    return x @ x.T / n, y @ x.T / n


def cv_errors(data: TimeSeriesData, cfg: EnetConfig, grid: np.ndarray,
              splitter=forward_chain_splits) -> np.ndarray:
    """Validation MSE for each equation and penalty, summed over folds; shape ``(p, len(grid))``."""
    x, y = data.x_mat, data.y_mat
    errs = np.zeros((data.p, grid.size))
    for train, val in splitter(data.n, cfg.cv_folds):
        gram, cross = _moments(x[:, train], y[:, train])
        b = None
        for i, lam in enumerate(grid):
            b = coordinate_descent(gram, cross, lam, cfg.l1_ratio, cfg.tol, cfg.max_iter, init=b)
            resid = y[:, val] - b @ x[:, val]
            errs[:, i] += np.mean(resid ** 2, axis=1)
    return errs


def enet_var(data: TimeSeriesData, cfg: EnetConfig = EnetConfig(),
             splitter=forward_chain_splits) -> tuple[np.ndarray, Graph]:
    """Elastic-net estimate of A with per-equation penalties chosen by forward-chaining CV."""
    if data.n < cfg.cv_folds + 1:
        raise ValueError("need n >= cv_folds + 1")
    if not np.any(data.series):
        raise ValueError("all-zero data")
    grid = lambda_grid(data, cfg)
    errs = cv_errors(data, cfg, grid, splitter)
    chosen = grid[np.argmin(errs, axis=1)]
    gram, cross = _moments(data.x_mat, data.y_mat)
    # warm start along the grid down to each equation's penalty
    b = None
    for lam in grid[grid >= chosen.min()]:
        b = coordinate_descent(gram, cross, np.maximum(lam, chosen), cfg.l1_ratio, cfg.tol, cfg.max_iter, init=b)
    return b, Graph.from_mask(b != 0)


def lasso_var(data: TimeSeriesData, cfg: EnetConfig = EnetConfig(l1_ratio=1.0),
              splitter=forward_chain_splits) -> tuple[np.ndarray, Graph]:
    if cfg.l1_ratio != 1.0:
        cfg = EnetConfig(cfg.lambda_grid, 1.0, cfg.cv_folds, cfg.tol, cfg.max_iter, cfg.n_lambda, cfg.lambda_min_ratio)
    return enet_var(data, cfg, splitter)


def baseline_metrics(test_data: TimeSeriesData, a_hat: np.ndarray, a_true=None, g_true=None):
    """Prediction, estimation and support metrics for a baseline estimate."""
    from .bench import compute_metrics

    oracle = None if a_true is None else (a_true, g_true)
    return compute_metrics(test_data, a_hat, oracle=oracle, graph=Graph.from_mask(a_hat != 0))
