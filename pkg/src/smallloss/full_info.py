"""Full-information engines: Hedge, Noisy Hedge, truncated-perturbation FPL."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .core import Distribution, NegativeLoss, NoFeasibleStrategy

DEFAULT_NOISE = 2.0 ** -20


def _check_nonneg(l) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    if np.any(l < 0):
        raise NegativeLoss(f"negative estimated loss {l.min()}")
    return l


def hedge_probs(cum: np.ndarray, eta: float) -> np.ndarray:
    z = -eta * (cum - cum.min())
    w = np.exp(z)
    return w / w.sum()


class Hedge:
    """Multiplicative weights stored as cumulative estimated losses."""

    def __init__(self, n_arms: int, eta: float):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self.cum_est_loss = np.zeros(n_arms)

    @property
    def n_arms(self) -> int:
        return self.cum_est_loss.size

    def probs(self) -> np.ndarray:
        return hedge_probs(self.cum_est_loss, self.eta)

    def distribution(self) -> Distribution:
        return Distribution(self.probs())

    def update(self, losses) -> "Hedge":
        self.cum_est_loss += _check_nonneg(losses)
        return self


class NoisyHedge(Hedge):
    """Hedge whose output is mixed with the uniform distribution at weight ``noise``."""

    def __init__(self, n_arms: int, eta: float, noise: float | None = None, horizon: int | None = None):
        super().__init__(n_arms, eta)
        if noise is None:
            noise = 1.0 / horizon if horizon else DEFAULT_NOISE
        if not 0 <= noise < 1:
            raise ValueError("noise must lie in [0, 1)")
        self.noise = float(noise)

    def probs(self) -> np.ndarray:
        p = super().probs()
        return (1.0 - self.noise) * p + self.noise / p.size


# oracle(scores, forbidden) -> strategy id minimizing the summed scores of its
# elements among strategies avoiding the forbidden elements (or -1 if none).
MinCostOracle = Callable[[np.ndarray, np.ndarray], int]


def perturbation_cap(n_elements: int, horizon: int, m: int, eta: float) -> float:
    return math.log(max(n_elements * horizon / m, math.e)) / eta


class FollowPerturbedLeader:
    """FPL over a combinatorial strategy set with truncated exponential perturbations.

    Each draw uses fresh perturbations ``Z_e = min(Exp(1)/eta, trunc)``.
    """

    def __init__(self, n_elements: int, eta: float, trunc: float, oracle: MinCostOracle):
        if eta <= 0 or trunc <= 0:
            raise ValueError("eta and trunc must be positive")
        self.eta = float(eta)
        self.trunc = float(trunc)
        self.oracle = oracle
        self.cum_element_loss = np.zeros(n_elements)

    @property
    def n_elements(self) -> int:
        return self.cum_element_loss.size

    def perturbations(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        shape = self.n_elements if n is None else (n, self.n_elements)
        z = rng.standard_exponential(shape) / self.eta
        return np.minimum(z, self.trunc)

    def draw(self, rng: np.random.Generator, forbidden=None) -> int:
        forbidden = self._forbidden_mask(forbidden)
        scores = self.cum_element_loss - self.perturbations(rng)
        f = int(self.oracle(scores, forbidden))
        if f < 0:
            raise NoFeasibleStrategy("every strategy contains a forbidden element")
        return f

    def _forbidden_mask(self, forbidden) -> np.ndarray:
        if forbidden is None:
            return np.zeros(self.n_elements, dtype=bool)
        forbidden = np.asarray(forbidden)
        if forbidden.dtype == bool:
            return forbidden
        mask = np.zeros(self.n_elements, dtype=bool)
        mask[forbidden.astype(int)] = True
        return mask

    def update(self, losses) -> "FollowPerturbedLeader":
        self.cum_element_loss += _check_nonneg(losses)
        return self
