"""Shared value types and elementary probability/loss arithmetic."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

PROB_TOL = 1e-9
IDEMPOTENCE_TOL = 1e-12


class SmallLossError(Exception):
    """Base class for every error raised by this package."""


class AllZero(SmallLossError, ValueError):
    pass


class NegativeEntry(SmallLossError, ValueError):
    pass


class NegativeLoss(SmallLossError, ValueError):
    pass


class LengthMismatch(SmallLossError, ValueError):
    pass


class ArmOutOfRange(SmallLossError, IndexError):
    pass


class OutOfRangeLoss(SmallLossError, ValueError):
    pass


class AllFrozen(SmallLossError, RuntimeError):
    """Every arm froze; the threshold is too large for this distribution."""


class GraphChanged(SmallLossError, RuntimeError):
    pass


class NoFeasibleStrategy(SmallLossError, RuntimeError):
    pass


class SweepCapExceeded(SmallLossError, RuntimeError):
    pass


class TooLarge(SmallLossError, ValueError):
    pass


class NotStochastic(SmallLossError, ValueError):
    pass


class NonPositive(SmallLossError, ValueError):
    pass


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over arms (or strategies) indexed 0..n-1."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.probs)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a distribution needs a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite probability")
        if np.any(arr < 0):
            raise NegativeEntry(f"negative probability {arr.min()}")
        if abs(arr.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {arr.sum()!r}, not 1")
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i):
        return self.probs[i]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(
            np.all(self.probs == other.probs)
        )

    def allclose(self, other, atol: float = PROB_TOL) -> bool:
        other = np.asarray(other, dtype=float)
        return other.shape == self.probs.shape and bool(
            np.allclose(self.probs, other, rtol=0.0, atol=atol)
        )

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, i: int) -> "Distribution":
        arr = np.zeros(n)
        arr[i] = 1.0
        return cls(arr)

    def sample(self, u: float) -> int:
        """Inverse-CDF draw over ascending ids from one uniform variate in [0, 1)."""
        return inverse_cdf(self.probs, u)


def inverse_cdf(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    # guard against float round-off at the top of the cdf and zero-mass arms
    i = min(i, probs.size - 1)
    while probs[i] <= 0.0 and i > 0:
        i -= 1
    return i


@dataclass(frozen=True, eq=False)
class LossVector:
    losses: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.losses)
        if arr.ndim != 1:
            raise ValueError("losses must be a 1-d vector")
        check_losses(arr)
        object.__setattr__(self, "losses", arr)

    def __len__(self) -> int:
        return self.losses.size

    def __getitem__(self, i):
        return self.losses[i]

    def __array__(self, dtype=None, copy=None):
        return self.losses if dtype is None else self.losses.astype(dtype)


def check_losses(arr: np.ndarray, upper: float = 1.0) -> np.ndarray:
    """Hard error on losses outside [0, upper]; never clamps."""
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > upper):
        bad = arr[~((arr >= 0.0) & (arr <= upper))]
        raise OutOfRangeLoss(f"loss values outside [0, {upper}]: {bad[:5]}")
    return arr


@dataclass(frozen=True, eq=False)
class EstimatedLossVector:
    """Non-negative importance-weighted loss estimates with a declared magnitude cap."""

    losses: np.ndarray
    bound: float

    def __post_init__(self):
        arr = _readonly(self.losses)
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        if np.any(arr < 0):
            raise NegativeLoss(f"negative estimated loss {arr.min()}")
        # relative slack for the division that produced the estimate
        if np.any(arr > self.bound * (1 + 1e-9)):
            raise OutOfRangeLoss(
                f"estimated loss {arr.max()!r} exceeds declared bound {self.bound!r}"
            )
        object.__setattr__(self, "losses", arr)
        object.__setattr__(self, "bound", float(self.bound))

    def __len__(self) -> int:
        return self.losses.size

    def __getitem__(self, i):
        return self.losses[i]

    def __array__(self, dtype=None, copy=None):
        return self.losses if dtype is None else self.losses.astype(dtype)


class FeedbackGraph:
    """Undirected feedback graph; neighborhoods always contain the arm itself.

    ``closed`` is the boolean adjacency matrix with the diagonal set, so that
    ``closed @ p`` gives every arm's observation probability.
    """

    __slots__ = ("n_arms", "adjacency", "closed", "_neighbors", "_hash")

    def __init__(self, n_arms: int, edges: Iterable[tuple[int, int]] = ()):
        if n_arms < 1:
            raise ValueError("a feedback graph needs at least one arm")
        closed = np.eye(n_arms, dtype=bool)
        for i, j in edges:
            if not (0 <= i < n_arms and 0 <= j < n_arms):
                raise ArmOutOfRange(f"edge ({i}, {j}) outside 0..{n_arms - 1}")
            closed[i, j] = closed[j, i] = True
        self._init_from_closed(closed)

    def _init_from_closed(self, closed: np.ndarray):
        closed = np.array(closed, dtype=bool)
        np.fill_diagonal(closed, True)
        closed.setflags(write=False)
        self.n_arms = closed.shape[0]
        self.closed = closed
        self.adjacency = tuple(
            frozenset(int(j) for j in np.flatnonzero(closed[i]) if j != i)
            for i in range(self.n_arms)
        )
        self._neighbors = tuple(np.flatnonzero(closed[i]) for i in range(self.n_arms))
        self._hash = None

    @classmethod
    def from_matrix(cls, matrix) -> "FeedbackGraph":
        m = np.asarray(matrix, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if not np.array_equal(m, m.T):
            raise ValueError("feedback graphs are undirected; matrix must be symmetric")
        g = cls.__new__(cls)
        g._init_from_closed(m)
        return g

    @classmethod
    def empty(cls, n: int) -> "FeedbackGraph":
        """Bandit feedback."""
        return cls(n)

    @classmethod
    def complete(cls, n: int) -> "FeedbackGraph":
        """Full-information feedback."""
        return cls.from_matrix(np.ones((n, n), dtype=bool))

    @classmethod
    def path(cls, n: int) -> "FeedbackGraph":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def disjoint_cliques(cls, sizes: Sequence[int]) -> "FeedbackGraph":
        n = int(sum(sizes))
        m = np.zeros((n, n), dtype=bool)
        start = 0
        for s in sizes:
            m[start:start + s, start:start + s] = True
            start += s
        return cls.from_matrix(m)

    @classmethod
    def from_labels(cls, labels) -> "FeedbackGraph":
        """Cliques of arms sharing a label (e.g. policies recommending one action)."""
        labels = np.asarray(labels)
        return cls.from_matrix(labels[:, None] == labels[None, :])

    def neighborhood(self, i: int) -> frozenset:
        """N_i: arm i together with its neighbors."""
        self._check_arm(i)
        return self.adjacency[i] | {i}

    def neighbors_array(self, i: int) -> np.ndarray:
        return self._neighbors[i]

    def _check_arm(self, i: int):
        if not 0 <= i < self.n_arms:
            raise ArmOutOfRange(f"arm {i} outside 0..{self.n_arms - 1}")

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.closed, k=1))
        return list(zip(iu.tolist(), ju.tolist()))

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, FeedbackGraph):
            return NotImplemented
        return np.array_equal(self.closed, other.closed)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n_arms, np.packbits(self.closed).tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"FeedbackGraph(n_arms={self.n_arms}, edges={len(self.edges())})"


class LossOracle:
    """Holds one round's losses and reveals only what the feedback graph allows."""

    __slots__ = ("graph", "_losses", "revealed")

    def __init__(self, losses, graph: FeedbackGraph):
        self._losses = np.asarray(losses, dtype=float)
        if self._losses.size != graph.n_arms:
            raise LengthMismatch("loss vector and graph disagree on the number of arms")
        self.graph = graph
        self.revealed: Optional[np.ndarray] = None

    def reveal(self, played: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (arm ids in N_played, their losses)."""
        idx = self.graph.neighbors_array(played)
        self.revealed = idx
        return idx, self._losses[idx]


@dataclass(frozen=True, eq=False)
class RoundRecord:
    t: int
    played: int
    true_loss: float
    estimated: EstimatedLossVector
    frozen_mass: float
    play_dist: Distribution
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -PROB_TOL <= self.frozen_mass <= 1 + PROB_TOL:
            raise ValueError(f"frozen mass {self.frozen_mass} outside [0, 1]")


def make_distribution(raw: Sequence[float]) -> Distribution:
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("entries must be finite")
    if np.any(arr < 0):
        raise NegativeEntry(f"negative entry {arr.min()}")
    total = arr.sum()
    if total <= 0:
        raise AllZero("cannot normalize an all-zero vector")
    return Distribution(arr / total)


def expected_loss(d, losses) -> float:
    p = np.asarray(d, dtype=float)
    l = np.asarray(losses, dtype=float)
    if p.shape != l.shape:
        raise LengthMismatch(f"{p.shape} vs {l.shape}")
    return float(p @ l)


# random stream ids; each (seed, stream) pair gets an independent generator
ENV, LEARNER, PERTURB, SAMPLER = 0, 1, 2, 3


def stream_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream, *extra)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), *map(int, extra)])))
