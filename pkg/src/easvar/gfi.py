"""Generalized fiducial graph mass ``r(G | Y)`` (unnormalized, in log space).

For a graph G with per-equation fits, the log mass is

    log E[h * |D'D|^{1/2}]
      + sum_j [ lgamma((n - |r_j|)/2) - (n - |r_j|)/2 * log(m_j / 2) ]
      - |G|/2 * log(n / 2 pi) - 1/2 sum_j log |(X X')_{r_j, r_j}|

where ``D = [Z_G | R]`` stacks the design columns and the per-equation
least-squares residuals.  Because each residual is orthogonal to its own
equation's regressors, ``D'D`` is block diagonal and
``log |D'D|^{1/2} = 1/2 (sum_j log|(X X')_{r_j,r_j}| + sum_j log m_j)``.
The expectation of ``h`` is estimated by importance sampling from the
inverse-gamma / Gaussian fiducial distribution of ``(sigma, alpha)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import Graph, TimeSeriesData, make_rng
from .eas import EasParams, epsilon_default, inverse_square_diagonal
from .estim import GraphFit, RankDeficient, least_squares, rss_min

DEFAULT_DRAWS = 250
_CHUNK = 20000


class DegenerateGraph(ValueError):
    """The graph has no proper fiducial distribution (zero RSS or too many predictors)."""


@dataclass(frozen=True)
class MassEstimate:
    log_mass: float
    log_jacobian: float
    admissible_fraction: float
    draws: int
    seed: int

    @property
    def admissible(self) -> int:
        return int(round(self.admissible_fraction * self.draws))


def jacobian_logdet(data: TimeSeriesData, fit: GraphFit, normalize_residuals: bool = False) -> float:
    """``1/2 log det(D'D)`` for ``D = [Z_G | masked residuals]``.

    With ``normalize_residuals`` the residual columns are scaled to unit
    length, which drops the ``sum_j log m_j`` term.
    """
    if np.any(fit.rss <= 0.0):
        return -math.inf
    total = float(np.sum(fit.logdet_blocks))
    if not normalize_residuals:
        total += float(np.sum(np.log(fit.rss)))
    return 0.5 * total


def _check_drawable(fit: GraphFit) -> None:
    shapes = fit.n - fit.sizes
    if np.any(shapes <= 0):
        raise DegenerateGraph("an equation has at least n predictors")
    if np.any(fit.rss <= 0.0):
        raise DegenerateGraph("an equation has zero residual sum of squares")


def _sampling_matrix(fit: GraphFit) -> np.ndarray:
    """T with ``z @ T ~ N(0, blockdiag((X X')_{r_j,r_j}^{-1}))`` in vec order."""
    size = fit.graph.size
    t = np.zeros((size, size))
    entries = fit.graph.entries()
    where = {e: i for i, e in enumerate(entries)}
    for j, cols in enumerate(fit.graph.predictors):
        if not cols:
            continue
        idx = [where[(j, k)] for k in cols]
        t[np.ix_(idx, idx)] = np.linalg.inv(fit.chol_blocks[j])
    return t


def draw_sigma2(fit: GraphFit, rng: np.random.Generator, size: int) -> np.ndarray:
    """``sigma_j^2 ~ inv-gamma((n - |r_j|)/2, m_j/2)``, shape ``(size, p)``."""
    _check_drawable(fit)
    shape = 0.5 * (fit.n - fit.sizes)
    return (0.5 * fit.rss) / rng.standard_gamma(shape, size=(size, fit.p))


def draw_alpha(fit: GraphFit, sigma2: np.ndarray, rng: np.random.Generator,
               _t: np.ndarray | None = None) -> np.ndarray:
    """``alpha_j | sigma_j ~ N(a_hat_j, sigma_j^2 (X X')_{r_j,r_j}^{-1})`` for each row of ``sigma2``."""
    sigma2 = np.atleast_2d(sigma2)
    t = _sampling_matrix(fit) if _t is None else _t
    z = rng.standard_normal((sigma2.shape[0], fit.graph.size))
    sd = np.sqrt(sigma2[:, fit.vec_equation])
    return fit.alpha_vector() + sd * (z @ t)


def importance_draw(fit: GraphFit, rng: np.random.Generator, size: int = 1):
    """Draw ``(alpha, sigma2)`` from the fiducial importance distribution.

    Returns arrays of shape ``(size, |G|)`` (vec order) and ``(size, p)``.
    """
    sigma2 = draw_sigma2(fit, rng, size)
    return draw_alpha(fit, sigma2, rng), sigma2


class _Prepared:
    """Per-graph constants reused by every Monte Carlo evaluation."""

    __slots__ = ("fit", "log_const", "log_jacobian", "alpha_hat", "t", "inv_sq",
                 "traces", "flat", "shape", "half_rss", "rss_ok", "eq")

    def __init__(self, data: TimeSeriesData, fit: GraphFit, params: EasParams, normalize_residuals: bool):
        n = data.n
        size = fit.graph.size
        self.fit = fit
        self.shape = 0.5 * (n - fit.sizes)
        self.half_rss = 0.5 * fit.rss
        self.log_jacobian = jacobian_logdet(data, fit, normalize_residuals)
        self.log_const = (float(np.sum(gammaln(self.shape) - self.shape * np.log(self.half_rss)))
                          - 0.5 * size * math.log(n / (2.0 * math.pi))
                          - 0.5 * float(np.sum(fit.logdet_blocks)))
        self.alpha_hat = fit.alpha_vector()
        self.t = _sampling_matrix(fit)
        self.inv_sq = inverse_square_diagonal(fit)
        self.traces = np.array([np.trace(g) if g.size else 0.0 for g in fit.gram_blocks])
        self.eq = fit.vec_equation
        self.flat = np.array([j * fit.p + k for j, k in fit.graph.entries()], dtype=int)
        self.rss_ok = rss_min(fit) >= params.d


class MassModel:
    """Evaluates Monte Carlo graph masses for one data set and parameter choice.

    Per-graph fits are cached, so repeated evaluations of the same graph
    (as in a Markov chain) only pay for the ``draws`` importance samples.
    """

    def __init__(self, data: TimeSeriesData, params: EasParams, draws: int = DEFAULT_DRAWS,
                 normalize_residuals: bool = False, cache_size: int = 50000):
        if draws < 1:
            raise ValueError("draws must be >= 1")
        self.data = data
        self.params = params
        self.draws = int(draws)
        self.normalize_residuals = normalize_residuals
        self.cache_size = cache_size
        self._cache: dict[Graph, _Prepared | None] = {}

    def prepare(self, graph: Graph) -> _Prepared | None:
        """Constants for ``graph``, or None when its mass is identically zero."""
        try:
            return self._cache[graph]
        except KeyError:
            pass
        prep = None
        data = self.data
        if 0 < graph.size <= data.n * data.p:
            try:
                fit = least_squares(data, graph)
                _check_drawable(fit)
                prep = _Prepared(data, fit, self.params, self.normalize_residuals)
            except (RankDeficient, DegenerateGraph):
                prep = None
        if len(self._cache) >= self.cache_size:
            self._cache.clear()
        self._cache[graph] = prep
        return prep

    def count_admissible(self, prep: _Prepared, rng: np.random.Generator, draws: int) -> int:
        data, params = self.data, self.params
        n, p = data.n, data.p
        size = prep.fit.graph.size
        total = 0
        done = 0
        while done < draws:
            m = min(_CHUNK, draws - done)
            done += m
            sigma2 = prep.half_rss / rng.standard_gamma(prep.shape, size=(m, p))
            z = rng.standard_normal((m, size))
            s_coord = sigma2[:, prep.eq]
            alpha = prep.alpha_hat + np.sqrt(s_coord) * (z @ prep.t)
            if not prep.rss_ok:
                continue
            lam = (1.0 / sigma2) @ prep.traces
            eps = epsilon_default(lam, n, p, size, params)
            stat = 0.5 * np.min(alpha ** 2 / (prep.inv_sq * s_coord ** 2), axis=1)
            keep = stat >= eps
            k = int(np.count_nonzero(keep))
            if k == 0:
                continue
            a = np.zeros((k, p * p))
            a[:, prep.flat] = alpha[keep]
            norms = np.linalg.norm(a.reshape(k, p, p), ord=2, axis=(1, 2))
            total += int(np.count_nonzero(params.stable(norms)))
        return total

    def estimate(self, graph: Graph, seed: int | None = None,
                 rng: np.random.Generator | None = None) -> MassEstimate:
        """Monte Carlo estimate of the log mass of ``graph``.

        Either ``seed`` or an explicit ``rng`` must be given.
        """
        if rng is None:
            if seed is None:
                raise ValueError("need a seed or an rng")
            rng = make_rng(seed)
        prep = self.prepare(graph)
        seed_out = -1 if seed is None else int(seed)
        if prep is None:
            return MassEstimate(-math.inf, -math.inf, 0.0, self.draws, seed_out)
        k = self.count_admissible(prep, rng, self.draws)
        if k == 0:
            return MassEstimate(-math.inf, prep.log_jacobian, 0.0, self.draws, seed_out)
        log_eh = prep.log_jacobian + math.log(k / self.draws)
        return MassEstimate(log_eh + prep.log_const, prep.log_jacobian, k / self.draws, self.draws, seed_out)

    def log_expected_h(self, graph: Graph, seed: int) -> tuple[float, float]:
        """``(log E[h |D'D|^{1/2}], admissible fraction)`` for ``graph``."""
        est = self.estimate(graph, seed=seed)
        prep = self.prepare(graph)
        if prep is None or est.admissible_fraction == 0.0:
            return -math.inf, est.admissible_fraction
        return est.log_mass - prep.log_const, est.admissible_fraction


def estimate_log_Eh(data: TimeSeriesData, fit: GraphFit, params: EasParams, draws: int, seed: int) -> MassEstimate:
    """Monte Carlo ``log E[h |D'D|^{1/2}]`` for an existing fit.

    The returned :class:`MassEstimate` carries this quantity in ``log_mass``.
    """
    model = MassModel(data, params, draws)
    graph = fit.graph
    if not 0 < graph.size <= data.n * data.p:
        return MassEstimate(-math.inf, -math.inf, 0.0, draws, seed)
    _check_drawable(fit)
    prep = _Prepared(data, fit, params, False)
    model._cache[graph] = prep
    k = model.count_admissible(prep, make_rng(seed), draws)
    log_eh = prep.log_jacobian + math.log(k / draws) if k else -math.inf
    return MassEstimate(log_eh, prep.log_jacobian, k / draws, draws, seed)


def log_graph_mass(data: TimeSeriesData, graph: Graph, params: EasParams,
                   draws: int = DEFAULT_DRAWS, seed: int = 0,
                   normalize_residuals: bool = False) -> MassEstimate:
    """Log unnormalized fiducial mass of one graph."""
    return MassModel(data, params, draws, normalize_residuals).estimate(graph, seed=seed)


def all_graphs(p: int, include_empty: bool = False) -> Iterator[Graph]:
    """Every graph on a p x p matrix (``2^(p^2)`` of them; small p only)."""
    if p * p > 20:
        raise ValueError("exhaustive enumeration only for p^2 <= 20")
    start = 0 if include_empty else 1
    for r in range(start, p * p + 1):
        for combo in itertools.combinations(range(p * p), r):
            yield Graph(p, frozenset(combo))


def normalize_log_masses(log_masses: dict) -> dict:
    """Exp-normalize a mapping of log masses into probabilities."""
    keys = list(log_masses)
    vals = np.array([log_masses[k] for k in keys], dtype=float)
    if not np.any(np.isfinite(vals)):
        raise ValueError("all masses are zero")
    probs = np.exp(vals - logsumexp(vals))
    return dict(zip(keys, probs))


def enumerate_masses(data: TimeSeriesData, params: EasParams, draws: int, seed: int,
                     normalize_residuals: bool = False) -> dict:
    """Normalized masses over every nonempty graph (exhaustive; small p only)."""
    model = MassModel(data, params, draws, normalize_residuals)
    logs = {g: model.estimate(g, rng=make_rng(seed, i)).log_mass
            for i, g in enumerate(all_graphs(data.p))}
    return normalize_log_masses(logs)
