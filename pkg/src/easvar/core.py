"""Domain types, index conventions and VAR(1) simulation.

Index conventions
-----------------
Entries of a p x p transition matrix are addressed either as ``(j, k)``
pairs (row ``j`` = equation, column ``k`` = predictor) or by their position
in the column-stacked ``vec(A)``.  The public helpers :func:`vec_index` and
:func:`vec_unindex` use 1-based numbering, ``index = (k - 1) * p + j``.
Internally :class:`Graph` stores 0-based vec positions ``k * p + j``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


def make_rng(*keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by a tuple of integers.

    Distinct key tuples give independent streams, so ``make_rng(seed, step)``
    is a cheap way to hand out reproducible substreams.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def vec_index(j: int, k: int, p: int) -> int:
    """1-based position of entry (j, k) in the column-stacked vec of a p x p matrix."""
    if not (1 <= j <= p and 1 <= k <= p):
        raise ValueError(f"entry ({j}, {k}) out of range for p={p}")
    return (k - 1) * p + j


def vec_unindex(index: int, p: int) -> tuple[int, int]:
    """Inverse of :func:`vec_index`."""
    if not 1 <= index <= p * p:
        raise ValueError(f"vec index {index} out of range for p={p}")
    k, j = divmod(index - 1, p)
    return j + 1, k + 1


@dataclass(frozen=True)
class TimeSeriesData:
    """Observed series ``X^(0), ..., X^(n)`` stored as a p x (n+1) matrix."""

    series: np.ndarray

    def __post_init__(self):
        s = np.array(self.series, dtype=float)
        if s.ndim != 2:
            raise ValueError("series must be a 2D array of shape (p, n+1)")
        if s.shape[1] < 2:
            raise ValueError("need at least two time points (n >= 1)")
        if not np.all(np.isfinite(s)):
            raise ValueError("series contains non-finite values")
        s.setflags(write=False)
        object.__setattr__(self, "series", s)

    @property
    def p(self) -> int:
        return self.series.shape[0]

    @property
    def n(self) -> int:
        return self.series.shape[1] - 1

    @property
    def y_mat(self) -> np.ndarray:
        return self.series[:, 1:]

    @property
    def x_mat(self) -> np.ndarray:
        return self.series[:, :-1]

    @cached_property
    def xx(self) -> np.ndarray:
        """Gram matrix X X' of the lagged design."""
        return self.x_mat @ self.x_mat.T

    @cached_property
    def xy(self) -> np.ndarray:
        """Cross products; column j is X y_j'."""
        return self.x_mat @ self.y_mat.T

    def split(self, n_train: int) -> tuple["TimeSeriesData", "TimeSeriesData"]:
        """Split into a training part (first ``n_train`` transitions) and the rest.

        The test part starts at ``X^(n_train)`` so that no transition is lost.
        """
        if not 1 <= n_train < self.n:
            raise ValueError("n_train must lie in [1, n)")
        return (TimeSeriesData(self.series[:, : n_train + 1]),
                TimeSeriesData(self.series[:, n_train:]))


def lagged_pair(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Y, X)`` with ``Y = (X^(1) .. X^(n))`` and ``X = (X^(0) .. X^(n-1))``."""
    s = np.asarray(series, dtype=float)
    if s.ndim != 2 or s.shape[1] < 2:
        raise ValueError("series must be p x (n+1) with n >= 1")
    return s[:, 1:], s[:, :-1]


@dataclass(frozen=True)
class Graph:
    """Set of active entries of a p x p transition matrix.

    ``active`` holds 0-based vec positions ``k * p + j``.
    """

    p: int
    active: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        act = frozenset(int(i) for i in self.active)
        if self.p < 1:
            raise ValueError("p must be positive")
        if any(i < 0 or i >= self.p * self.p for i in act):
            raise ValueError("active index out of range")
        object.__setattr__(self, "active", act)

    @classmethod
    def from_entries(cls, p: int, entries: Iterable[tuple[int, int]]) -> "Graph":
        """Build from 0-based ``(row, col)`` pairs."""
        idx = []
        for j, k in entries:
            if not (0 <= j < p and 0 <= k < p):
                raise ValueError(f"entry ({j}, {k}) out of range for p={p}")
            idx.append(k * p + j)
        return cls(p, frozenset(idx))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "Graph":
        m = np.asarray(mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("mask must be square")
        rows, cols = np.nonzero(m)
        return cls.from_entries(m.shape[0], zip(rows.tolist(), cols.tolist()))

    @classmethod
    def from_vec_indices(cls, p: int, indices: Iterable[int]) -> "Graph":
        """Build from 1-based vec indices (the serialized form)."""
        return cls.from_entries(p, ((j - 1, k - 1) for j, k in (vec_unindex(i, p) for i in indices)))

    @classmethod
    def diagonal(cls, p: int) -> "Graph":
        return cls.from_entries(p, ((j, j) for j in range(p)))

    @classmethod
    def full(cls, p: int) -> "Graph":
        return cls(p, frozenset(range(p * p)))

    @property
    def size(self) -> int:
        return len(self.active)

    def __len__(self) -> int:
        return len(self.active)

    def __contains__(self, entry) -> bool:
        j, k = entry
        return k * self.p + j in self.active

    def sorted_active(self) -> list[int]:
        return sorted(self.active)

    def entries(self) -> list[tuple[int, int]]:
        """Active ``(row, col)`` pairs, 0-based, in vec order."""
        return [(i % self.p, i // self.p) for i in self.sorted_active()]

    def vec_indices(self) -> list[int]:
        """Active entries as sorted 1-based vec indices."""
        return [i + 1 for i in self.sorted_active()]

    @cached_property
    def predictors(self) -> tuple[tuple[int, ...], ...]:
        """Per-equation predictor sets: ``predictors[j]`` lists active columns of row j."""
        rows: list[list[int]] = [[] for _ in range(self.p)]
        for i in self.sorted_active():
            rows[i % self.p].append(i // self.p)
        return tuple(tuple(sorted(r)) for r in rows)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.p, self.p), dtype=bool)
        for j, k in self.entries():
            m[j, k] = True
        return m

    def with_added(self, index: int) -> "Graph":
        if index in self.active:
            raise ValueError(f"entry {index} is already active")
        return Graph(self.p, self.active | {index})

    def with_removed(self, index: int) -> "Graph":
        if index not in self.active:
            raise ValueError(f"entry {index} is not active")
        return Graph(self.p, self.active - {index})

    def __repr__(self) -> str:
        return f"Graph(p={self.p}, vec={self.vec_indices()})"


class PatternKind(enum.Enum):
    BAND = "band"
    CLUSTER = "cluster"
    HUB = "hub"
    RANDOM = "random"
    SCALE_FREE = "scalefree"

    @classmethod
    def parse(cls, value: "str | PatternKind") -> "PatternKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown pattern {value!r}")


def check_sigma2(sigma2: Sequence[float] | np.ndarray, p: int | None = None) -> np.ndarray:
    """Validate a vector of noise variances (the diagonal of Sigma)."""
    s = np.atleast_1d(np.asarray(sigma2, dtype=float))
    if s.ndim != 1:
        raise ValueError("sigma2 must be one-dimensional")
    if p is not None and s.shape[0] != p:
        raise ValueError(f"sigma2 must have length {p}")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("sigma2 entries must be positive and finite")
    return s


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float), 2))


def rescale_to(a: np.ndarray, target: float) -> np.ndarray:
    """Scale ``a`` so that its spectral norm equals ``target``."""
    a = np.asarray(a, dtype=float)
    norm = spectral_norm(a)
    if norm == 0.0:
        raise ValueError("cannot rescale the zero matrix")
    return (target / norm) * a


def simulate_var(a: np.ndarray, sigma2, n: int, seed: int, return_noise: bool = False):
    """Simulate ``X^(t) = A X^(t-1) + Sigma^{1/2} U^(t)`` from ``X^(0) = 0``.

    Returns a :class:`TimeSeriesData`; with ``return_noise`` also the p x n
    matrix of standard normal innovations.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    if a.shape != (p, p):
        raise ValueError("A must be square")
    s = check_sigma2(sigma2, p)
    if n < 1:
        raise ValueError("n must be >= 1")
    if spectral_norm(a) >= 1.0:
        warnings.warn("||A||_2 >= 1: the simulated process may be unstable", RuntimeWarning)
    rng = make_rng(seed)
    u = rng.standard_normal((n, p)).T
    scale = np.sqrt(s)
    x = np.zeros((p, n + 1))
    for t in range(1, n + 1):
        x[:, t] = a @ x[:, t - 1] + scale * u[:, t - 1]
    data = TimeSeriesData(x)
    return (data, u) if return_noise else data


def gamma_n0(a: np.ndarray, sigma2, n: int) -> np.ndarray:
    """Population average lagged covariance ``(1/n) E[X X']`` from ``X^(0) = 0``."""
    a = np.asarray(a, dtype=float)
    sig = np.diag(check_sigma2(sigma2, a.shape[0]))
    cov = np.zeros_like(sig)
    total = np.zeros_like(sig)
    for _ in range(n):
        total += cov
        cov = a @ cov @ a.T + sig
    total /= n
    return 0.5 * (total + total.T)


def _cluster_eligible(p: int) -> np.ndarray:
    n_blocks = math.ceil(p / 5)
    labels = np.minimum(np.arange(p) * n_blocks // p, n_blocks - 1)
    return labels[:, None] == labels[None, :]


def _hub_edges(p: int) -> list[tuple[int, int]]:
    n_groups = math.ceil(p / 5)
    labels = np.minimum(np.arange(p) * n_groups // p, n_groups - 1)
    edges = []
    for g in range(n_groups):
        members = np.flatnonzero(labels == g).tolist()
        hub = members[0]
        edges.extend((hub, m) for m in members[1:])
    return edges


def _scale_free_edges(p: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # Barabasi-Albert tree: each new node attaches once, proportional to degree.
    edges = [(0, 1)]
    degree = np.zeros(p)
    degree[:2] = 1
    for node in range(2, p):
        target = int(rng.choice(node, p=degree[:node] / degree[:node].sum()))
        edges.append((target, node))
        degree[target] += 1
        degree[node] += 1
    return edges


def generate_pattern(kind, p: int, seed: int, norm: float = 0.5,
                     activation: float = 0.01) -> tuple[np.ndarray, Graph]:
    """Random transition matrix with one of the five standard sparsity patterns.

    The diagonal is always active.  Band, hub and scale-free patterns
    activate their structural off-diagonal entries (in both directions);
    cluster and random patterns activate each eligible off-diagonal entry
    independently with probability ``activation``.  Diagonal values are
    drawn from N(+-12, 1), off-diagonal values from N(+-3, 1), and the
    matrix is rescaled to spectral norm ``norm``.
    """
    kind = PatternKind.parse(kind)
    if p < 2:
        raise ValueError("p must be >= 2")
    rng = make_rng(seed, 7919)
    off = ~np.eye(p, dtype=bool)
    mask = np.eye(p, dtype=bool)
    if kind is PatternKind.BAND:
        idx = np.arange(p)
        mask |= np.abs(idx[:, None] - idx[None, :]) == 1
    elif kind in (PatternKind.HUB, PatternKind.SCALE_FREE):
        edges = _hub_edges(p) if kind is PatternKind.HUB else _scale_free_edges(p, rng)
        for u, v in edges:
            mask[u, v] = mask[v, u] = True
    else:
        eligible = off if kind is PatternKind.RANDOM else (off & _cluster_eligible(p))
        mask |= eligible & (rng.random((p, p)) < activation)

    means = np.where(np.eye(p, dtype=bool), 12.0, 3.0)
    signs = np.where(rng.random((p, p)) < 0.5, -1.0, 1.0)
    values = signs * means + rng.standard_normal((p, p))
    a = np.where(mask, values, 0.0)
    return rescale_to(a, norm), Graph.from_mask(mask)
