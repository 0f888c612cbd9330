"""epsilon-admissibility: the h-function and its ingredients."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Graph, TimeSeriesData, check_sigma2, spectral_norm
from .estim import GraphFit, RankDeficient, lambda_g, least_squares, rss_min

SINGULAR_TOL = 1e-12


class EpsilonMode(enum.Enum):
    PRACTICAL_LAMBDA = "practical"
    FULL_DEFAULT = "full"

    @classmethod
    def parse(cls, value) -> "EpsilonMode":
        if isinstance(value, cls):
            return value
        for m in cls:
            if m.value == str(value).lower() or m.name.lower() == str(value).lower():
                return m
        raise ValueError(f"unknown epsilon mode {value!r}")


@dataclass(frozen=True)
class EasParams:
    """Tuning of the h-function.

    ``c_bound = 1`` means the practical strict constraint ``||A_g||_2 < 1``;
    smaller values use ``||A_g||_2 <= c_bound``.
    """

    epsilon_mode: EpsilonMode = EpsilonMode.PRACTICAL_LAMBDA
    rho: float = 0.49
    d: float = 0.0
    c_bound: float = 1.0
    g_o_size_hint: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "epsilon_mode", EpsilonMode.parse(self.epsilon_mode))
        if not 0.0 < self.rho < 0.5:
            raise ValueError("rho must lie in (0, 1/2)")
        if not self.d >= 0.0:
            raise ValueError("d must be nonnegative")
        if not 0.0 < self.c_bound <= 1.0:
            raise ValueError("c_bound must lie in (0, 1]")

    def stable(self, norm):
        norm = np.asarray(norm)
        return norm < 1.0 if self.c_bound >= 1.0 else norm <= self.c_bound


def bmin_statistic(m: np.ndarray, alpha: np.ndarray) -> float:
    """``min_b 1/2 ||M (alpha - b)||^2`` over b with at least one zero entry.

    Pinning coordinate i of ``alpha - b`` to ``alpha_i`` and minimizing the
    quadratic form ``x' M^2 x`` gives ``alpha_i^2 / [(M^2)^{-1}]_ii``.
    Returns 0 when M is singular.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if m.shape != (alpha.size, alpha.size) or alpha.size == 0:
        raise ValueError("M must be |G| x |G| with |G| >= 1")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    scale = np.max(np.abs(w))
    if scale == 0.0 or np.min(np.abs(w)) <= SINGULAR_TOL * scale:
        return 0.0
    inv_sq_diag = (v ** 2) @ (1.0 / w ** 2)
    return 0.5 * float(np.min(alpha ** 2 / inv_sq_diag))


def epsilon_default(lambda_value, n: int, p: int, g_size: int, params: EasParams):
    """Default precision: ``Lambda_g`` or ``Lambda_g * max{1, n^{1-rho} p^2 (.5 loglog(n)|G| - |G_o|)}``.

    Vectorizes over ``lambda_value``.
    """
    lam = np.asarray(lambda_value, dtype=float)
    if params.epsilon_mode is EpsilonMode.PRACTICAL_LAMBDA:
        factor = 1.0
    else:
        if params.g_o_size_hint is None:
            raise ValueError("FullDefault epsilon needs g_o_size_hint")
        growth = n ** (1.0 - params.rho) * p ** 2 * (0.5 * math.log(math.log(n)) * g_size - params.g_o_size_hint)
        factor = max(1.0, growth)
    out = lam * factor
    return float(out) if out.ndim == 0 else out


def inverse_square_diagonal(fit: GraphFit) -> np.ndarray:
    """``diag((X X')_{r_j,r_j}^{-2})`` for every coordinate, in vec order.

    Multiply by ``sigma_j^4`` to get ``diag((M^2)^{-1})`` for the
    block-diagonal ``M = (+)_j (X X')_{r_j,r_j} / sigma_j^2``.
    """
    per_row = [np.sum(inv ** 2, axis=1) for inv in fit.gram_inverse_blocks]
    # vec order walks columns; map each (j, k) to its position within row j
    pos = {}
    for j, cols in enumerate(fit.graph.predictors):
        for i, k in enumerate(cols):
            pos[(j, k)] = per_row[j][i]
    return np.array([pos[e] for e in fit.graph.entries()])


def scatter_alpha(graph: Graph, alpha: np.ndarray) -> np.ndarray:
    """Place vec-ordered coefficients into a p x p matrix."""
    a = np.zeros((graph.p, graph.p))
    for (j, k), v in zip(graph.entries(), np.asarray(alpha, dtype=float)):
        a[j, k] = v
    return a


def h_function(alpha, sigma2, fit: GraphFit, params: EasParams, epsilon: float | None = None) -> int:
    """1 if ``alpha`` (vec order over the fitted graph) is epsilon-admissible, else 0.

    ``epsilon`` defaults to :func:`epsilon_default` evaluated at ``Lambda_g(sigma)``.
    """
    graph = fit.graph
    size, n, p = graph.size, fit.n, graph.p
    if size == 0 or size > n * p:
        return 0
    s = check_sigma2(sigma2, p)
    alpha = np.asarray(alpha, dtype=float)
    if epsilon is None:
        epsilon = epsilon_default(lambda_g(fit, s), n, p, size, params)
    inv_sq = inverse_square_diagonal(fit) * s[fit.vec_equation] ** 2
    stat = 0.5 * float(np.min(alpha ** 2 / inv_sq))
    if not stat >= epsilon:
        return 0
    if not rss_min(fit) >= params.d:
        return 0
    return int(bool(params.stable(spectral_norm(scatter_alpha(graph, alpha)))))


def h_function_for_graph(data: TimeSeriesData, graph: Graph, alpha, sigma2,
                         params: EasParams, epsilon: float | None = None) -> int:
    """As :func:`h_function`, fitting the graph first; rank-deficient graphs give 0."""
    if graph.size == 0 or graph.size > data.n * data.p:
        return 0
    try:
        fit = least_squares(data, graph)
    except RankDeficient:
        return 0
    return h_function(alpha, sigma2, fit, params, epsilon)


def calibrate_d(data: TimeSeriesData, baseline_graph: Graph, divisor: float = 10.0) -> float:
    """RSS floor ``min_j m_j / 10`` of the baseline (elastic-net) graph."""
    return rss_min(least_squares(data, baseline_graph)) / divisor
