"""Pseudo-marginal (grouped independence) Metropolis-Hastings over graphs."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import Graph, TimeSeriesData, make_rng
from .eas import EasParams
from .estim import least_squares
from .gfi import DEFAULT_DRAWS, MassModel

ADD, REMOVE, SWAP = 0, 1, 2


class InitKind(enum.Enum):
    DIAGONAL = "diagonal"
    BASELINE = "baseline"


class DegenerateChain(RuntimeError):
    """No starting graph with positive mass could be found."""


@dataclass(frozen=True)
class ChainConfig:
    steps: int = 20000
    burn_in: int = 5000
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    init: Union[InitKind, Graph] = InitKind.DIAGONAL
    max_size: Optional[int] = None
    move_probs: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if isinstance(self.init, str):
            object.__setattr__(self, "init", InitKind(self.init))
        if self.steps < 1 or not 0 <= self.burn_in < self.steps:
            raise ValueError("need steps >= 1 and 0 <= burn_in < steps")
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        probs = tuple(float(x) for x in self.move_probs)
        if len(probs) != 3 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("move_probs must be three nonnegative numbers summing to 1")
        object.__setattr__(self, "move_probs", probs)
        if self.max_size is not None and self.max_size < 1:
            raise ValueError("max_size must be >= 1")

    def size_limit(self, n: int, p: int) -> int:
        cap = min(n * p, p * p) if self.max_size is None else self.max_size
        return max(1, min(cap, p * p))


def move_probabilities(size: int, p2: int, max_size: int, base: tuple) -> np.ndarray:
    """Move probabilities at graph size ``size`` with disabled moves renormalized away."""
    allowed = np.array([size < max_size and size < p2, size > 1, 0 < size < p2], dtype=float)
    w = np.asarray(base, dtype=float) * allowed
    total = w.sum()
    if total <= 0:
        raise ValueError(f"no proposal move available at |G|={size}")
    return w / total


def propose(current: Graph, max_size: int, base_probs: tuple,
            rng: np.random.Generator) -> tuple[Graph, float]:
    """Add, remove or swap one entry; returns the candidate and the log Hastings ratio.

    The ratio is ``log q(current | candidate) - log q(candidate | current)``.
    """
    p2 = current.p * current.p
    k = current.size
    probs = move_probabilities(k, p2, max_size, base_probs)
    move = int(rng.choice(3, p=probs))
    active = current.sorted_active()
    if move == SWAP:
        inactive = sorted(set(range(p2)) - current.active)
        out = active[int(rng.integers(len(active)))]
        into = inactive[int(rng.integers(len(inactive)))]
        return Graph(current.p, (current.active - {out}) | {into}), 0.0
    if move == ADD:
        inactive = sorted(set(range(p2)) - current.active)
        cand = current.with_added(inactive[int(rng.integers(len(inactive)))])
        back = move_probabilities(k + 1, p2, max_size, base_probs)[REMOVE]
        log_fwd = math.log(probs[ADD]) - math.log(p2 - k)
        log_rev = math.log(back) - math.log(k + 1)
    else:
        cand = current.with_removed(active[int(rng.integers(len(active)))])
        back = move_probabilities(k - 1, p2, max_size, base_probs)[ADD]
        log_fwd = math.log(probs[REMOVE]) - math.log(k)
        log_rev = math.log(back) - math.log(p2 - k + 1)
    return cand, log_rev - log_fwd


@dataclass
class ChainResult:
    p: int
    visits: dict
    map_graph: Graph
    inclusion: np.ndarray
    log_mass_trace: np.ndarray
    acceptance_rate: float
    steps: int
    burn_in: int
    a_bma: Optional[np.ndarray] = None
    graph_trace: list = field(default_factory=list, repr=False)

    @property
    def kept(self) -> int:
        return self.steps - self.burn_in

    def frequency(self, graph: Graph) -> float:
        """Share of post burn-in steps spent in ``graph``."""
        return self.visits.get(graph, 0) / self.kept


def summarize_visits(p: int, visits: Counter) -> tuple[Graph, np.ndarray]:
    """MAP graph (ties broken by smaller size, then vec order) and the inclusion matrix."""
    total = sum(visits.values())
    map_graph = min(visits, key=lambda g: (-visits[g], g.size, g.sorted_active()))
    inclusion = np.zeros((p, p))
    for g, c in visits.items():
        inclusion += c * g.mask()
    return map_graph, inclusion / total


def sample_graphs(log_mass: Callable[[Graph, int], float], init: Graph, cfg: ChainConfig,
                  max_size: int, rng: np.random.Generator, keep_trace: bool = False,
                  init_log_mass: Optional[float] = None) -> ChainResult:
    """Generic pseudo-marginal MH over graphs.

    ``log_mass(graph, step)`` must return a (possibly noisy) log mass
    estimate drawn from a stream determined by ``step``.  The current
    state's estimate is kept until a move is accepted.
    """
    current = init
    current_lm = log_mass(current, 0) if init_log_mass is None else init_log_mass
    if not math.isfinite(current_lm):
        raise DegenerateChain(f"initial graph {init} has zero estimated mass")
    p = init.p
    visits: Counter = Counter()
    trace = np.empty(cfg.steps)
    graphs = []
    accepted = 0
    for step in range(1, cfg.steps + 1):
        cand, log_corr = propose(current, max_size, cfg.move_probs, rng)
        cand_lm = log_mass(cand, step)
        u = rng.random()
        if math.isfinite(cand_lm) and math.log(u) < cand_lm - current_lm + log_corr:
            current, current_lm = cand, cand_lm
            accepted += 1
        trace[step - 1] = current_lm
        if step > cfg.burn_in:
            visits[current] += 1
        if keep_trace:
            graphs.append(current)
    map_graph, inclusion = summarize_visits(p, visits)
    return ChainResult(p, dict(visits), map_graph, inclusion, trace, accepted / cfg.steps,
                       cfg.steps, cfg.burn_in, graph_trace=graphs)


def _starting_graph(model: MassModel, cfg: ChainConfig, baseline: Optional[Graph]) -> tuple[Graph, float]:
    p = model.data.p
    if isinstance(cfg.init, Graph):
        first = cfg.init
    elif cfg.init is InitKind.BASELINE:
        if baseline is None:
            raise ValueError("init=baseline needs a baseline graph")
        first = baseline
    else:
        first = Graph.diagonal(p)
    candidates = [first, Graph.diagonal(p)] + [Graph(p, frozenset({i})) for i in range(p * p)]
    for i, g in enumerate(candidates):
        if g.size == 0:
            continue
        est = model.estimate(g, rng=make_rng(cfg.seed, 2, i))
        if est.admissible_fraction > 0:
            return g, est.log_mass
    raise DegenerateChain("the initial, diagonal and every single-entry graph have zero estimated mass")


def run_chain(data: TimeSeriesData, params: EasParams, cfg: ChainConfig,
              baseline: Optional[Graph] = None, normalize_residuals: bool = False,
              keep_trace: bool = False) -> ChainResult:
    """Run the graph sampler on ``data`` and summarize the post burn-in visits."""
    model = MassModel(data, params, cfg.draws, normalize_residuals)
    init, init_lm = _starting_graph(model, cfg, baseline)

    def log_mass(graph: Graph, step: int) -> float:
        return model.estimate(graph, rng=make_rng(cfg.seed, 1, step)).log_mass

    result = sample_graphs(log_mass, init, cfg, cfg.size_limit(data.n, data.p),
                           make_rng(cfg.seed, 0), keep_trace, init_lm)
    result.a_bma = model_average_A(result, data)
    return result


def model_average_A(result: ChainResult, data: TimeSeriesData) -> np.ndarray:
    """Visit-weighted average of the least-squares estimates of all visited graphs."""
    if not result.visits:
        raise ValueError("chain has no post burn-in visits")
    total = sum(result.visits.values())
    a = np.zeros((data.p, data.p))
    for g, c in result.visits.items():
        a += (c / total) * least_squares(data, g).a_matrix()
    return a
