"""Loss adversaries and instance generators."""
from __future__ import annotations

import itertools
import runpy
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    ENV,
    FeedbackGraph,
    LossOracle,
    OutOfRangeLoss,
    TooLarge,
    check_losses,
    stream_rng,
)

CHUNK_ROWS = 1 << 14
MATERIALIZE_LIMIT = 10 ** 8
EXPLICIT_STRATEGY_LIMIT = 10 ** 6


@dataclass(frozen=True, eq=False)
class LossSchedule:
    """Seeded oblivious loss schedule.

    Arms in the same group share every loss draw. ``segments`` is a list of
    ``(start_round, per_group_means)``; means hold until the next start.
    Rows are generated in fixed-size chunks, each from its own stream, so a
    streamed schedule and a materialized one agree bit for bit.
    """

    horizon: int
    groups: np.ndarray
    segments: tuple
    seed: int
    kind: str = "bernoulli"

    def __post_init__(self):
        if self.kind not in ("bernoulli", "uniform"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        for _, mu in self.segments:
            mu = np.asarray(mu)
            if np.any(mu < 0) or np.any(mu > 1):
                raise OutOfRangeLoss("loss means must lie in [0, 1]")

    @property
    def n_arms(self) -> int:
        return int(self.groups.size)

    @property
    def n_groups(self) -> int:
        return int(np.asarray(self.segments[0][1]).size)

    def group_means(self, rows: np.ndarray) -> np.ndarray:
        starts = np.array([s for s, _ in self.segments])
        table = np.array([np.asarray(mu, dtype=float) for _, mu in self.segments])
        seg = np.searchsorted(starts, rows, side="right") - 1
        return table[seg]

    def means(self, rows=None) -> np.ndarray:
        """Per-arm expected losses, shape (rows, d)."""
        if rows is None:
            rows = np.arange(self.horizon)
        return self.group_means(np.asarray(rows))[:, self.groups]

    def chunk(self, k: int) -> np.ndarray:
        lo = k * CHUNK_ROWS
        hi = min(self.horizon, lo + CHUNK_ROWS)
        rng = stream_rng(self.seed, ENV, k)
        u = rng.random((hi - lo, self.n_groups))
        mu = self.group_means(np.arange(lo, hi))
        if self.kind == "bernoulli":
            vals = (u < mu).astype(float)
        else:
            # uniform on an interval of mean mu inside [0, 1]
            width = 2 * np.minimum(mu, 1 - mu)
            vals = mu - width / 2 + width * u
        out = vals[:, self.groups]
        return check_losses(out)

    def n_chunks(self) -> int:
        return -(-self.horizon // CHUNK_ROWS)

    def iter_chunks(self):
        for k in range(self.n_chunks()):
            yield k * CHUNK_ROWS, self.chunk(k)

    def matrix(self) -> np.ndarray:
        if self.horizon * self.n_arms > MATERIALIZE_LIMIT:
            raise TooLarge("schedule too large to materialize; use iter_chunks")
        if self.horizon == 0:
            return np.zeros((0, self.n_arms))
        return np.concatenate([c for _, c in self.iter_chunks()])

    def row(self, t: int) -> np.ndarray:
        k, r = divmod(t, CHUNK_ROWS)
        return self.chunk(k)[r]


class CachedRows:
    """Row access with a one-chunk cache."""

    def __init__(self, schedule: LossSchedule):
        self.schedule = schedule
        self._k = -1
        self._chunk = None

    def __call__(self, t: int) -> np.ndarray:
        k, r = divmod(t, CHUNK_ROWS)
        if k != self._k:
            self._chunk = self.schedule.chunk(k)
            self._k = k
        return self._chunk[r]


# ---------------------------------------------------------------- adversaries


class ObliviousHook:
    """Adaptive-hook wrapper around an oblivious schedule; ignores history."""

    def __init__(self, schedule: LossSchedule):
        self.rows = CachedRows(schedule)

    def __call__(self, history: Sequence[int]) -> np.ndarray:
        return self.rows(len(history))


class PunishLastPlayed:
    """Loss 1 on the previously played arm, 0 elsewhere."""

    def __init__(self, n_arms: int):
        self.n_arms = n_arms

    def __call__(self, history: Sequence[int]) -> np.ndarray:
        out = np.zeros(self.n_arms)
        if len(history):
            out[history[-1]] = 1.0
        return out


class ScriptAdversary:
    """Loads ``losses(history, n_arms)`` from a user Python file."""

    def __init__(self, path: str, n_arms: int):
        ns = runpy.run_path(path)
        if "losses" not in ns:
            raise ValueError(f"{path} must define losses(history, n_arms)")
        self._fn = ns["losses"]
        self.n_arms = n_arms

    def __call__(self, history: Sequence[int]) -> np.ndarray:
        return np.asarray(self._fn(list(history), self.n_arms), dtype=float)


def adaptive_losses(hook: Callable, history: Sequence[int], n_arms: int) -> np.ndarray:
    vals = np.asarray(hook(history), dtype=float)
    if vals.shape != (n_arms,):
        raise OutOfRangeLoss(f"adversary returned shape {vals.shape}, expected ({n_arms},)")
    return check_losses(vals)


# ---------------------------------------------------------------- graph instances


@dataclass(eq=False)
class GraphInstance:
    name: str
    graph: FeedbackGraph
    schedule: LossSchedule
    true_alpha: int
    true_kappa: int
    lstar_target: float
    adversary: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def n_arms(self) -> int:
        return self.graph.n_arms

    @property
    def horizon(self) -> int:
        return self.schedule.horizon

    @property
    def oblivious(self) -> bool:
        return self.adversary is None

    def with_adversary(self, adversary) -> "GraphInstance":
        return GraphInstance(self.name, self.graph, self.schedule, self.true_alpha, self.true_kappa,
                             self.lstar_target, adversary, dict(self.params))

    def env(self) -> Callable[[int, list], LossOracle]:
        """Round-by-round loss oracles; adaptive adversaries see the play history."""
        rows = CachedRows(self.schedule)

        def oracle(t: int, history: list) -> LossOracle:
            if self.adversary is None:
                vals = rows(t)
            else:
                vals = adaptive_losses(self.adversary, history, self.n_arms)
            return LossOracle(vals, self.graph_at(t))

        return oracle

    def graph_at(self, t: int) -> FeedbackGraph:
        return self.graph


def _check_means(mu_star: float, mu_rest: float):
    if not 0 <= mu_star < mu_rest <= 1:
        raise ValueError(f"need 0 <= mu_star < mu_rest <= 1, got {mu_star}, {mu_rest}")


def make_smallloss_bandit(d: int, horizon: int, mu_star: float, mu_rest: float, seed: int,
                          kind: str = "bernoulli", best_arm: int = 0) -> GraphInstance:
    """Bandit feedback; one arm has mean loss ``mu_star``, the rest ``mu_rest``."""
    if d > 1:
        _check_means(mu_star, mu_rest)
    mu = np.full(d, mu_rest, dtype=float)
    mu[best_arm] = mu_star
    sched = LossSchedule(horizon, np.arange(d), ((0, mu),), seed, kind)
    return GraphInstance(
        name=f"bandit-d{d}", graph=FeedbackGraph.empty(d), schedule=sched,
        true_alpha=d, true_kappa=d, lstar_target=mu_star * horizon,
        params=dict(d=d, mu_star=mu_star, mu_rest=mu_rest, best_arm=best_arm),
    )


def make_clique_union(num_cliques: int, clique_size: int, horizon: int, mu_star: float, mu_rest: float,
                      seed: int, kind: str = "bernoulli") -> GraphInstance:
    """Disjoint equal cliques; arms within a clique share every loss. Clique 0 is best."""
    if num_cliques < 1 or clique_size < 1:
        raise ValueError("counts must be at least 1")
    if num_cliques > 1:
        _check_means(mu_star, mu_rest)
    mu = np.full(num_cliques, mu_rest, dtype=float)
    mu[0] = mu_star
    groups = np.repeat(np.arange(num_cliques), clique_size)
    sched = LossSchedule(horizon, groups, ((0, mu),), seed, kind)
    d = num_cliques * clique_size
    return GraphInstance(
        name=f"cliques-{num_cliques}x{clique_size}",
        graph=FeedbackGraph.disjoint_cliques([clique_size] * num_cliques), schedule=sched,
        true_alpha=num_cliques, true_kappa=num_cliques, lstar_target=mu_star * horizon,
        params=dict(d=d, num_cliques=num_cliques, clique_size=clique_size, mu_star=mu_star, mu_rest=mu_rest),
    )


@dataclass(eq=False)
class ShiftingInstance(GraphInstance):
    switch_budget: int = 0
    breakpoints: tuple = ()
    leaders: tuple = ()


def make_shifting(d: int, horizon: int, num_switches: int, mu_star: float, mu_rest: float, seed: int,
                  kind: str = "bernoulli") -> ShiftingInstance:
    """Bandit instance whose low-loss arm changes exactly ``num_switches`` times."""
    if not 0 <= num_switches < horizon:
        raise ValueError("need 0 <= num_switches < T")
    if num_switches > 0 and d < 2:
        raise ValueError("switching needs at least two arms")
    _check_means(mu_star, mu_rest)
    rng = stream_rng(seed, ENV, 1 << 32)
    breaks = np.sort(rng.choice(np.arange(1, horizon), size=num_switches, replace=False))
    leader = int(rng.integers(d))
    leaders = [leader]
    for _ in range(num_switches):
        nxt = int(rng.integers(d - 1))
        leader = nxt if nxt < leader else nxt + 1
        leaders.append(leader)
    segments = []
    for start, arm in zip([0, *breaks.tolist()], leaders):
        mu = np.full(d, mu_rest, dtype=float)
        mu[arm] = mu_star
        segments.append((int(start), mu))
    sched = LossSchedule(horizon, np.arange(d), tuple(segments), seed, kind)
    return ShiftingInstance(
        name=f"shifting-d{d}-K{num_switches}", graph=FeedbackGraph.empty(d), schedule=sched,
        true_alpha=d, true_kappa=d, lstar_target=mu_star * horizon,
        params=dict(d=d, K=num_switches, mu_star=mu_star, mu_rest=mu_rest),
        switch_budget=num_switches, breakpoints=tuple(breaks.tolist()), leaders=tuple(leaders),
    )


@dataclass(eq=False)
class ContextualInstance(GraphInstance):
    """Finite policy class; each round the policies recommending the same action
    form a clique of the feedback graph and share that action's loss."""

    recommendations: np.ndarray = None

    def graph_at(self, t: int) -> FeedbackGraph:
        return FeedbackGraph.from_labels(self.recommendations[t])


def make_contextual(n_policies: int, n_actions: int, horizon: int, mu_star: float, mu_rest: float,
                    seed: int) -> ContextualInstance:
    """Policy 0 always recommends action 0 (the low-loss action); others pick at random."""
    _check_means(mu_star, mu_rest)
    rng = stream_rng(seed, ENV, (1 << 32) + 1)
    rec = rng.integers(n_actions, size=(horizon, n_policies))
    rec[:, 0] = 0
    action_mu = np.full(n_actions, mu_rest, dtype=float)
    action_mu[0] = mu_star
    act = LossSchedule(horizon, np.arange(n_actions), ((0, action_mu),), seed)
    acts = act.matrix()
    policy_losses = np.take_along_axis(acts, rec, axis=1)
    inst = ContextualInstance(
        name=f"contextual-{n_policies}p{n_actions}a", graph=FeedbackGraph.from_labels(rec[0]),
        schedule=act, true_alpha=n_actions, true_kappa=n_actions, lstar_target=mu_star * horizon,
        params=dict(d=n_policies, n_actions=n_actions, mu_star=mu_star, mu_rest=mu_rest),
        recommendations=rec,
    )
    inst.adversary = _RowLookup(policy_losses)
    return inst


class _RowLookup:
    def __init__(self, table: np.ndarray):
        self.table = table

    def __call__(self, history):
        return self.table[len(history)]


# ---------------------------------------------------------------- semi-bandits


class SemiBanditInstance:
    """Element set, strategy set (subsets of elements), min-cost oracle.

    ``oracle_many(scores, forbidden)`` maps an (n, |E|) score matrix to the
    n strategy ids minimizing the summed element scores among strategies that
    avoid the forbidden elements (-1 where none exists).
    """

    def __init__(self, n_elements: int, strategies: Sequence[Sequence[int]], schedule: Optional[LossSchedule] = None,
                 name: str = "semibandit"):
        strategies = [tuple(sorted(set(int(e) for e in s))) for s in strategies]
        if not strategies or any(len(s) == 0 for s in strategies):
            raise ValueError("every strategy must be non-empty")
        used = set(itertools.chain.from_iterable(strategies))
        if used != set(range(n_elements)):
            raise ValueError("every element must belong to at least one strategy")
        self.n_elements = n_elements
        self._strategies = strategies
        self.m = max(len(s) for s in strategies)
        self.schedule = schedule
        self.name = name
        inc = np.zeros((len(strategies), n_elements), dtype=bool)
        for k, s in enumerate(strategies):
            inc[k, list(s)] = True
        self._incidence = inc

    @property
    def n_strategies(self) -> int:
        return self._incidence.shape[0]

    @property
    def strategies(self) -> list:
        return list(self._strategies)

    @property
    def incidence(self) -> np.ndarray:
        return self._incidence

    def members(self, ids: np.ndarray) -> np.ndarray:
        return self._incidence[np.asarray(ids, dtype=int)]

    def strategy_elements(self, f: int) -> np.ndarray:
        return np.flatnonzero(self._incidence[f])

    def oracle_many(self, scores: np.ndarray, forbidden: np.ndarray) -> np.ndarray:
        scores = np.atleast_2d(scores)
        totals = scores @ self._incidence.T.astype(float)
        bad = self._incidence[:, forbidden].any(axis=1) if forbidden.any() else np.zeros(self.n_strategies, bool)
        totals[:, bad] = np.inf
        out = totals.argmin(axis=1)
        if bad.all():
            out[:] = -1
        return out

    def oracle(self, scores: np.ndarray, forbidden: np.ndarray) -> int:
        return int(self.oracle_many(scores[None, :], forbidden)[0])

    def strategy_loss(self, f: int, element_losses: np.ndarray) -> float:
        return float(element_losses[self.strategy_elements(f)].sum())


class LayeredPaths(SemiBanditInstance):
    """Paths through a layered chain: pick one of ``width`` parallel edges per layer.

    Element ``l*width + k`` is edge k of layer l; strategy ids are the mixed-radix
    numbers sum_l k_l * width**l. The oracle takes a per-layer argmin, so it
    never enumerates strategies.
    """

    def __init__(self, layers: int, width: int, schedule: Optional[LossSchedule] = None):
        if layers < 1 or width < 1:
            raise ValueError("layers and width must be at least 1")
        self.layers = layers
        self.width = width
        self.n_elements = layers * width
        self.m = layers
        self.schedule = schedule
        self.name = f"paths-{layers}x{width}"
        self._radix = width ** np.arange(layers)
        self._incidence = None

    @property
    def n_strategies(self) -> int:
        return self.width ** self.layers

    @property
    def incidence(self) -> np.ndarray:
        if self._incidence is None:
            if self.n_strategies > EXPLICIT_STRATEGY_LIMIT:
                raise TooLarge(f"{self.n_strategies} strategies exceed the explicit enumeration cap")
            self._incidence = self.members(np.arange(self.n_strategies))
        return self._incidence

    @property
    def strategies(self) -> list:
        return [tuple(np.flatnonzero(r)) for r in self.incidence]

    def choices(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        return (ids[:, None] // self._radix[None, :]) % self.width

    def members(self, ids: np.ndarray) -> np.ndarray:
        ch = self.choices(np.atleast_1d(ids))
        out = np.zeros((ch.shape[0], self.n_elements), dtype=bool)
        cols = np.arange(self.layers) * self.width + ch
        np.put_along_axis(out, cols, True, axis=1)
        return out

    def strategy_elements(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.members(np.array([f]))[0])

    def oracle_many(self, scores: np.ndarray, forbidden: np.ndarray) -> np.ndarray:
        scores = np.atleast_2d(scores).reshape(-1, self.layers, self.width)
        if forbidden.any():
            fb = forbidden.reshape(self.layers, self.width)
            if fb.all(axis=1).any():
                return np.full(scores.shape[0], -1, dtype=np.int64)
            scores = np.where(fb[None], np.inf, scores)
        ch = scores.argmin(axis=2)
        return ch @ self._radix


def make_layered_paths(layers: int, width: int, horizon: int, mu_star: float, mu_rest: float, seed: int,
                       kind: str = "bernoulli") -> LayeredPaths:
    """Edge 0 of every layer has mean loss ``mu_star``; every other edge ``mu_rest``."""
    if width > 1:
        _check_means(mu_star, mu_rest)
    mu = np.full((layers, width), mu_rest, dtype=float)
    mu[:, 0] = mu_star
    sched = LossSchedule(horizon, np.arange(layers * width), ((0, mu.ravel()),), seed, kind)
    inst = LayeredPaths(layers, width, sched)
    inst.lstar_target = layers * mu_star * horizon
    inst.params = dict(layers=layers, width=width, mu_star=mu_star, mu_rest=mu_rest)
    return inst
