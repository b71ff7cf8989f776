"""Regret accounting, comparator oracles, a concentration checker and power-law fits."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .core import ENV, LengthMismatch, NonPositive, NotStochastic, RoundRecord, stream_rng

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- inputs


def played_arms(trace) -> np.ndarray:
    """Played arms from a RoundRecord sequence, a result object with ``arms``, or an int array."""
    if hasattr(trace, "arms"):
        return np.asarray(trace.arms, dtype=np.int64)
    if len(trace) and isinstance(trace[0], RoundRecord):
        return np.fromiter((r.played for r in trace), dtype=np.int64, count=len(trace))
    return np.asarray(trace, dtype=np.int64)


def _chunks(losses):
    """Yield (start_row, block) over a loss matrix or a chunked schedule."""
    if hasattr(losses, "iter_chunks"):
        yield from losses.iter_chunks()
    else:
        yield 0, np.asarray(losses, dtype=float)


def _horizon(losses) -> int:
    return losses.horizon if hasattr(losses, "horizon") else np.asarray(losses).shape[0]


# ---------------------------------------------------------------- regret


def approx_regret(learner_loss: float, comparator_loss: float, eps: float) -> float:
    return (1.0 - eps) * learner_loss - comparator_loss


@dataclass(frozen=True)
class RegretSummary:
    learner_loss: float
    best_fixed_loss: float
    regret: float
    apx_regret: float
    eps: float
    best_arm: int
    cum_loss: np.ndarray
    best_fixed_cum_loss: np.ndarray

    @property
    def lstar(self) -> float:
        return self.best_fixed_loss

    @property
    def per_round(self) -> np.ndarray:
        """Cumulative regret against the hindsight-best fixed arm."""
        return self.cum_loss - self.best_fixed_cum_loss


def actual_regret(trace, losses, eps: float = 0.0) -> RegretSummary:
    """Regret against the best fixed arm in hindsight (ties to the lowest id)."""
    arms = played_arms(trace)
    T = _horizon(losses)
    if arms.size != T:
        raise LengthMismatch(f"trace has {arms.size} rounds, losses have {T}")
    incurred = np.empty(T)
    totals = None
    for start, block in _chunks(losses):
        rows = np.arange(block.shape[0])
        incurred[start:start + block.shape[0]] = block[rows, arms[start:start + block.shape[0]]]
        s = block.sum(axis=0)
        totals = s if totals is None else totals + s
    if totals is None:
        raise LengthMismatch("empty loss schedule")
    best = int(np.argmin(totals))
    best_col = np.empty(T)
    for start, block in _chunks(losses):
        best_col[start:start + block.shape[0]] = block[:, best]
    cum = np.cumsum(incurred)
    best_cum = np.cumsum(best_col)
    learner_loss = float(cum[-1]) if T else 0.0
    lstar = float(best_cum[-1]) if T else 0.0
    return RegretSummary(learner_loss, lstar, learner_loss - lstar, approx_regret(learner_loss, lstar, eps),
                         eps, best, cum, best_cum)


def pseudo_regret(trace, means: Optional[Sequence[float]]) -> float:
    if means is None:
        raise NotStochastic("per-arm means are unknown")
    mu = np.asarray(means, dtype=float)
    if mu.ndim != 1:
        raise NotStochastic("means must be a fixed per-arm vector")
    arms = played_arms(trace)
    return float(mu[arms].sum() - arms.size * mu.min())


# ---------------------------------------------------------------- shifting comparators


def best_shifting_sequence(losses, K: int) -> tuple[np.ndarray, float]:
    """Minimum-loss arm sequence with at most ``K`` switches.

    Layered DP over (switches used, arm); each layer takes the best entry of
    the previous layer in O(d). Ties prefer staying, then the lowest arm id.
    """
    L = np.asarray(losses, dtype=float)
    T, d = L.shape
    if not 0 <= K < max(T, 1):
        raise ValueError("need 0 <= K < T")
    cost = np.zeros((K + 1, d))
    cost[1:] = np.inf
    switched = np.zeros((T, K + 1, d), dtype=bool)
    source = np.zeros((T, K + 1), dtype=np.int64)
    cost = cost + L[0]
    for t in range(1, T):
        prev_best = np.argmin(cost, axis=1)
        best_val = cost[np.arange(K + 1), prev_best]
        new = cost.copy()
        if K:
            sw = best_val[:-1, None] < cost[1:]
            new[1:] = np.where(sw, best_val[:-1, None], cost[1:])
            switched[t, 1:] = sw
            source[t, 1:] = prev_best[:-1]
        cost = new + L[t]
    k = K
    arm = int(np.argmin(cost[K]))
    total = float(cost[K, arm])
    seq = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        seq[t] = arm
        if t and switched[t, k, arm]:
            arm = int(source[t, k])
            k -= 1
    return seq, total


def count_switches(seq) -> int:
    seq = np.asarray(seq)
    return int(np.count_nonzero(seq[1:] != seq[:-1]))


def brute_force_shifting(losses, K: int) -> tuple[np.ndarray, float]:
    """Exhaustive reference for tiny instances."""
    L = np.asarray(losses, dtype=float)
    T, d = L.shape
    best_seq, best = None, math.inf
    for seq in itertools.product(range(d), repeat=T):
        if count_switches(seq) > K:
            continue
        total = float(L[np.arange(T), seq].sum())
        if total < best:
            best_seq, best = np.array(seq), total
    return best_seq, best


def shifting_regret(trace, losses, K: int, eps: float = 0.0) -> tuple[float, float]:
    """(regret, approximate regret) against the best ``K``-switch comparator."""
    L = np.asarray(losses, dtype=float)
    arms = played_arms(trace)
    if arms.size != L.shape[0]:
        raise LengthMismatch(f"trace has {arms.size} rounds, losses have {L.shape[0]}")
    learner = float(L[np.arange(arms.size), arms].sum())
    _, comp = best_shifting_sequence(L, K)
    return learner - comp, approx_regret(learner, comp, eps)


# ---------------------------------------------------------------- concentration

# sampler(rng, T, n) -> (x, m): n sequences of values in [0, 1] and their conditional means
Sampler = Callable[[np.random.Generator, int, int], tuple[np.ndarray, np.ndarray]]


def deterministic_sampler(means: Sequence[float]) -> Sampler:
    mu = np.asarray(means, dtype=float)

    def sample(rng, T, n):
        m = np.broadcast_to(mu[:T], (n, T)).copy()
        return m.copy(), m

    return sample


def iid_bernoulli_sampler(p: float) -> Sampler:
    def sample(rng, T, n):
        x = (rng.random((n, T)) < p).astype(float)
        return x, np.full((n, T), p)

    return sample


def history_dependent_sampler(high: float = 0.9, low: float = 0.1) -> Sampler:
    """Bernoulli draws whose mean is ``high`` right after a 1 and ``low`` otherwise."""

    def sample(rng, T, n):
        x = np.zeros((n, T))
        m = np.zeros((n, T))
        last = np.zeros(n, dtype=bool)
        for t in range(T):
            m[:, t] = np.where(last, high, low)
            last = rng.random(n) < m[:, t]
            x[:, t] = last
        return x, m

    return sample


def concentration_bound(eps: float, delta: float) -> float:
    return (1.0 + eps) * math.log(1.0 / delta) / eps


def concentration_check(sampler: Sampler, T: int, eps: float, delta: float, trials: int, seed: int = 0,
                        block: int = 1000, workers: int = 1) -> tuple[float, float]:
    """Empirical failure rates (upper, lower) of the multiplicative martingale bound.

    Upper: sum x - (1+eps) sum m > b. Lower: sum m - (1+eps) sum x > b,
    with b = (1+eps) ln(1/delta)/eps. Each block of trials has its own stream.
    """
    bound = concentration_bound(eps, delta)
    sizes = [min(block, trials - s) for s in range(0, trials, block)]

    def run(k):
        x, m = sampler(stream_rng(seed, ENV, k), T, sizes[k])
        sx, sm = x.sum(axis=1), m.sum(axis=1)
        return (int(np.count_nonzero(sx - (1 + eps) * sm > bound)),
                int(np.count_nonzero(sm - (1 + eps) * sx > bound)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(run, range(len(sizes))))
    else:
        counts = [run(k) for k in range(len(sizes))]
    up = sum(c[0] for c in counts)
    lo = sum(c[1] for c in counts)
    return up / trials, lo / trials


# ---------------------------------------------------------------- scaling fits


class ScalingFit(NamedTuple):
    exponent: float
    intercept: float
    r_squared: float

    @property
    def reliable(self) -> bool:
        return self.r_squared >= 0.9


def fit_scaling_exponent(points, floor: Optional[float] = None) -> ScalingFit:
    """Least-squares fit of log y on log x.

    Points with y below twice ``floor`` (the additive regime) are dropped.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if np.any(pts <= 0):
        raise NonPositive("scaling fits need positive x and y")
    if floor is not None:
        keep = pts[:, 1] >= 2 * floor
        if not keep.all():
            log.warning("dropping %d points in the additive regime", int((~keep).sum()))
        pts = pts[keep]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss if ss > 0 else 1.0
    if r2 < 0.9:
        log.warning("scaling fit unreliable (r^2 = %.3f)", r2)
    return ScalingFit(float(slope), float(intercept), r2)
