"""Per-graph least squares exploiting the per-equation block structure."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Graph, TimeSeriesData, check_sigma2

#: Cholesky pivots below this fraction of the block trace mark a rank-deficient block.
RANK_TOL = 1e-12


class RankDeficient(ValueError):
    """Gram block of one equation is numerically singular."""

    def __init__(self, equation: int):
        super().__init__(f"Gram block of equation {equation} is rank deficient")
        self.equation = equation


@dataclass(frozen=True)
class GraphFit:
    """Least-squares fit of every equation on its active predictors.

    ``coef[j]``, ``gram_blocks[j]`` and ``chol_blocks[j]`` refer to the
    predictors ``graph.predictors[j]``; empty equations carry empty arrays.
    """

    graph: Graph
    n: int
    coef: tuple
    rss: np.ndarray
    gram_blocks: tuple
    chol_blocks: tuple
    logdet_blocks: np.ndarray

    @property
    def p(self) -> int:
        return self.graph.p

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(r) for r in self.graph.predictors])

    def a_matrix(self) -> np.ndarray:
        """The p x p least-squares estimate padded with zeros off the graph."""
        a = np.zeros((self.p, self.p))
        for j, cols in enumerate(self.graph.predictors):
            a[j, list(cols)] = self.coef[j]
        return a

    def alpha_vector(self) -> np.ndarray:
        """Coefficients over the graph in vec (column-stacked) order."""
        a = self.a_matrix()
        return np.array([a[j, k] for j, k in self.graph.entries()])

    @cached_property
    def vec_equation(self) -> np.ndarray:
        """Equation (row) of each vec-ordered coordinate."""
        return np.array([j for j, _ in self.graph.entries()], dtype=int)

    @cached_property
    def vec_to_block(self) -> np.ndarray:
        """Permutation taking vec order to equation-major (row-major) order."""
        entries = self.graph.entries()
        return np.array(sorted(range(len(entries)), key=lambda i: entries[i]), dtype=int)

    @cached_property
    def gram_inverse_blocks(self) -> tuple:
        out = []
        for c in self.chol_blocks:
            if c.size == 0:
                out.append(np.zeros((0, 0)))
            else:
                linv = np.linalg.inv(c)
                out.append(linv.T @ linv)
        return tuple(out)


def least_squares(data: TimeSeriesData, graph: Graph) -> GraphFit:
    """Fit each equation j by least squares on the predictors ``graph.predictors[j]``.

    Raises :class:`RankDeficient` if any Gram block fails the relative
    Cholesky pivot test.
    """
    if graph.p != data.p:
        raise ValueError("graph and data dimensions differ")
    xx, xy = data.xx, data.xy
    y, x = data.y_mat, data.x_mat
    coef, rss, grams, chols, logdets = [], [], [], [], []
    for j, cols in enumerate(graph.predictors):
        yj = y[j]
        if not cols:
            coef.append(np.zeros(0))
            rss.append(float(yj @ yj))
            grams.append(np.zeros((0, 0)))
            chols.append(np.zeros((0, 0)))
            logdets.append(0.0)
            continue
        idx = list(cols)
        g = xx[np.ix_(idx, idx)]
        tr = np.trace(g)
        try:
            c = np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise RankDeficient(j) from None
        piv = np.diag(c)
        if tr <= 0 or np.min(piv) ** 2 <= RANK_TOL * tr:
            raise RankDeficient(j)
        # two triangular solves via the Cholesky factor
        z = np.linalg.solve(c, xy[idx, j])
        b = np.linalg.solve(c.T, z)
        resid = yj - b @ x[idx]
        coef.append(b)
        rss.append(float(resid @ resid))
        grams.append(g)
        chols.append(c)
        logdets.append(2.0 * float(np.sum(np.log(piv))))
    return GraphFit(graph, data.n, tuple(coef), np.array(rss), tuple(grams),
                    tuple(chols), np.array(logdets))


def lambda_g(fit: GraphFit, sigma2) -> float:
    """``||W^{-1/2} Z_G||_F^2 = sum_j tr((X X')_{r_j, r_j}) / sigma_j^2``."""
    s = check_sigma2(sigma2, fit.p)
    traces = np.array([np.trace(g) if g.size else 0.0 for g in fit.gram_blocks])
    return float(np.sum(traces / s))


def rss_min(fit: GraphFit) -> float:
    return float(np.min(fit.rss))
