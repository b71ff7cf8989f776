"""Graph queries: observation mass, greedy maximal independent sets, exact alpha."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import ArmOutOfRange, FeedbackGraph, TooLarge

EXACT_ALPHA_MAX_NODES = 30


@dataclass(frozen=True)
class IndependentSet:
    members: frozenset
    graph_n: int

    def __len__(self) -> int:
        return len(self.members)

    def is_independent_in(self, g: FeedbackGraph) -> bool:
        return is_independent(g, self.members)


def is_independent(g: FeedbackGraph, members: Iterable[int]) -> bool:
    idx = np.fromiter(members, dtype=int)
    if idx.size < 2:
        return True
    sub = g.closed[np.ix_(idx, idx)]
    return not np.any(sub & ~np.eye(idx.size, dtype=bool))


def observation_mass(g: FeedbackGraph, p, i: int, excluded: Iterable[int] = ()) -> float:
    """Probability that arm i is observed when arms in ``excluded`` are never played."""
    if not 0 <= i < g.n_arms:
        raise ArmOutOfRange(f"arm {i} outside 0..{g.n_arms - 1}")
    p = np.asarray(p, dtype=float)
    nbrs = g.neighbors_array(i)
    excluded = set(excluded)
    if excluded:
        nbrs = np.array([j for j in nbrs if j not in excluded], dtype=int)
    return float(p[nbrs].sum())


def greedy_maximal_independent_set(g: FeedbackGraph, candidates: Iterable[int]) -> IndependentSet:
    """Scan candidates in ascending id, keeping each one not adjacent to a kept arm."""
    chosen = []
    blocked = np.zeros(g.n_arms, dtype=bool)
    for c in sorted(set(candidates)):
        if not 0 <= c < g.n_arms:
            raise ArmOutOfRange(f"candidate {c} outside 0..{g.n_arms - 1}")
        if blocked[c]:
            continue
        chosen.append(c)
        blocked |= g.closed[c]
    return IndependentSet(frozenset(chosen), g.n_arms)


def exact_independence_number(g: FeedbackGraph) -> int:
    """Maximum independent set size by branch and bound over bitmasks.

    Meant for test oracles only; refuses graphs above 30 nodes.
    """
    n = g.n_arms
    if n > EXACT_ALPHA_MAX_NODES:
        raise TooLarge(f"exact independence number limited to {EXACT_ALPHA_MAX_NODES} nodes, got {n}")
    nbr = [0] * n
    for i in range(n):
        mask = 0
        for j in g.adjacency[i]:
            mask |= 1 << j
        nbr[i] = mask

    best = 0

    def popcount(x: int) -> int:
        return bin(x).count("1")

    def search(cand: int, size: int):
        nonlocal best
        if cand == 0:
            if size > best:
                best = size
            return
        if size + popcount(cand) <= best:
            return
        v = (cand & -cand).bit_length() - 1
        deg_v = popcount(nbr[v] & cand)
        if deg_v == 0:
            # isolated within cand: always take it
            search(cand & ~(1 << v), size + 1)
            return
        search(cand & ~(1 << v) & ~nbr[v], size + 1)
        search(cand & ~(1 << v), size)

    search((1 << n) - 1, 0)
    return best
