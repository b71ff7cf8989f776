"""Freezing procedures.

Every procedure takes the engine's distribution ``p`` and returns which arms
are temporarily removed from play together with the renormalized play
distribution ``w``. All threshold comparisons are strict (``<``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AllFrozen, Distribution, FeedbackGraph, SweepCapExceeded


@dataclass(frozen=True, eq=False)
class FreezeResult:
    """Outcome of one freezing call.

    ``certificate`` is the smallest observation (or play) probability of any
    surviving arm, measured over surviving arms only; ``floor`` is the value
    it must not drop below.
    """

    initial_frozen: frozenset
    propagation_frozen: tuple
    play_dist: Distribution
    frozen_mass: float
    certificate: float
    floor: float
    prob_frozen: frozenset = frozenset()
    initial_mass: float = 0.0
    propagation_mass: float = 0.0

    @property
    def frozen(self) -> frozenset:
        out = self.prob_frozen | self.initial_frozen
        for s in self.propagation_frozen:
            out = out | s
        return out

    @property
    def certificate_ok(self) -> bool:
        return self.certificate >= self.floor


@dataclass(frozen=True, eq=False)
class SemiBanditFreezeResult:
    frozen_elements: frozenset
    frozen_strategies: frozenset
    play_dist: Distribution
    frozen_mass: float
    certificate: float
    floor: float
    element_mass: np.ndarray = field(repr=False, default=None)

    @property
    def certificate_ok(self) -> bool:
        return self.certificate >= self.floor


def _renormalize(p: np.ndarray, active: np.ndarray) -> tuple[np.ndarray, float]:
    if not active.any():
        raise AllFrozen("every arm froze")
    w = np.where(active, p, 0.0)
    kept = w.sum()
    if kept <= 0.0:
        raise AllFrozen("surviving arms carry no probability")
    return w / kept, float(p[~active].sum())


def _propagate(closed: np.ndarray, p: np.ndarray, active: np.ndarray, mass: np.ndarray,
               threshold: float) -> list[np.ndarray]:
    """Level-set propagation: freeze every active arm whose mass over active arms
    is below ``threshold``, update masses, repeat until nothing new freezes.

    ``active`` and ``mass`` are updated in place.
    """
    levels = []
    while True:
        new = active & (mass < threshold)
        if not new.any():
            return levels
        levels.append(np.flatnonzero(new))
        active &= ~new
        mass -= closed[:, new] @ p[new]


def _as_set(idx) -> frozenset:
    return frozenset(int(i) for i in idx)


def dual_threshold_freeze(g: FeedbackGraph, p, gamma: float) -> FreezeResult:
    """Freeze arms observed with probability below ``gamma``, then cascade at ``gamma/3``."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    p = np.asarray(p, dtype=float)
    closed = g.closed
    mass = closed @ p
    initial = mass < gamma
    active = ~initial
    if initial.any():
        mass = mass - closed[:, initial] @ p[initial]
    levels = _propagate(closed, p, active, mass, gamma / 3.0)
    w, frozen_mass = _renormalize(p, active)
    init_mass = float(p[initial].sum())
    return FreezeResult(
        initial_frozen=_as_set(np.flatnonzero(initial)),
        propagation_frozen=tuple(_as_set(lv) for lv in levels),
        play_dist=Distribution(w),
        frozen_mass=frozen_mass,
        certificate=float(mass[active].min()),
        floor=gamma / 3.0,
        initial_mass=init_mass,
        propagation_mass=frozen_mass - init_mass,
    )


def triple_threshold_freeze(g: FeedbackGraph, p, beta: float, gamma: float) -> FreezeResult:
    """Freeze arms played with probability below ``beta``, then arms observed (by
    the rest) with probability below ``gamma``, then cascade at ``gamma/3``."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    p = np.asarray(p, dtype=float)
    if not 0 < beta < 1.0 / p.size:
        raise ValueError(f"beta must lie in (0, 1/d), got {beta}")
    closed = g.closed
    low = p < beta
    active = ~low
    mass = closed @ np.where(low, 0.0, p)
    initial = active & (mass < gamma)
    active &= ~initial
    if initial.any():
        mass -= closed[:, initial] @ p[initial]
    levels = _propagate(closed, p, active, mass, gamma / 3.0)
    w, frozen_mass = _renormalize(p, active)
    init_mass = float(p[initial].sum())
    low_mass = float(p[low].sum())
    return FreezeResult(
        initial_frozen=_as_set(np.flatnonzero(initial)),
        propagation_frozen=tuple(_as_set(lv) for lv in levels),
        play_dist=Distribution(w),
        frozen_mass=frozen_mass,
        certificate=float(mass[active].min()),
        floor=gamma / 3.0,
        prob_frozen=_as_set(np.flatnonzero(low)),
        initial_mass=init_mass,
        propagation_mass=frozen_mass - init_mass - low_mass,
    )


def play_prob_freeze(p, beta: float) -> FreezeResult:
    """Freeze arms whose own play probability is below ``beta``."""
    p = np.asarray(p, dtype=float)
    if not 0 <= beta < 1.0 / p.size:
        raise ValueError(f"beta must lie in [0, 1/d), got {beta}")
    frozen = p < beta
    w, frozen_mass = _renormalize(p, ~frozen)
    return FreezeResult(
        initial_frozen=_as_set(np.flatnonzero(frozen)),
        propagation_frozen=(),
        play_dist=Distribution(w),
        frozen_mass=frozen_mass,
        certificate=float(p[~frozen].min()),
        floor=beta,
        initial_mass=frozen_mass,
    )


def semibandit_freeze(inst, p, gamma: float) -> SemiBanditFreezeResult:
    """Freeze elements observed with probability below ``gamma`` together with
    every strategy containing them, until no surviving element is under-observed.

    ``inst`` must expose an explicit ``incidence`` matrix (strategies x elements).
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    p = np.asarray(p, dtype=float)
    inc = np.asarray(inst.incidence, dtype=bool)
    if inc.shape[0] != p.size:
        raise ValueError("distribution length must equal the number of strategies")
    strat_active = np.ones(p.size, dtype=bool)
    elem_frozen = np.zeros(inc.shape[1], dtype=bool)
    while True:
        mass = np.where(strat_active, p, 0.0) @ inc
        new = ~elem_frozen & (mass < gamma)
        if not new.any():
            break
        elem_frozen |= new
        strat_active &= ~inc[:, elem_frozen].any(axis=1)
    w, frozen_mass = _renormalize(p, strat_active)
    live = ~elem_frozen
    return SemiBanditFreezeResult(
        frozen_elements=_as_set(np.flatnonzero(elem_frozen)),
        frozen_strategies=_as_set(np.flatnonzero(~strat_active)),
        play_dist=Distribution(w),
        frozen_mass=frozen_mass,
        certificate=float(mass[live].min()) if live.any() else float("inf"),
        floor=gamma,
        element_mass=mass,
    )


@dataclass(frozen=True, eq=False)
class EmpiricalFreeze:
    """Freezing on sampled strategies.

    ``element_mass`` is the empirical observation probability of each element
    counting only samples that avoid frozen elements (so it estimates the
    un-renormalized mass carried by surviving strategies).
    """

    frozen_elements: np.ndarray
    element_mass: np.ndarray
    kept_samples: np.ndarray
    sweeps: int
    certificate: float
    floor: float

    @property
    def frozen_mass(self) -> float:
        return 1.0 - float(self.kept_samples.mean())

    @property
    def certificate_ok(self) -> bool:
        return self.certificate >= self.floor


def empirical_semibandit_freeze(samples, gamma: float, sweep_cap: int | None = None) -> EmpiricalFreeze:
    """Semi-bandit freezing driven by an (N x |E|) boolean matrix of sampled strategies."""
    s = np.asarray(samples, dtype=bool)
    n, n_elem = s.shape
    cap = n_elem if sweep_cap is None else sweep_cap
    kept = np.ones(n, dtype=bool)
    frozen = np.zeros(n_elem, dtype=bool)
    sweeps = 0
    while True:
        mass = s[kept].sum(axis=0) / n
        new = ~frozen & (mass < gamma)
        if not new.any():
            break
        sweeps += 1
        if sweeps > cap:
            raise SweepCapExceeded(f"freezing did not settle within {cap} sweeps")
        frozen |= new
        kept &= ~s[:, frozen].any(axis=1)
    live = ~frozen
    if not kept.any():
        raise AllFrozen("every sampled strategy contains a frozen element")
    return EmpiricalFreeze(
        frozen_elements=frozen,
        element_mass=mass,
        kept_samples=kept,
        sweeps=sweeps,
        certificate=float(mass[live].min()) if live.any() else float("inf"),
        floor=gamma,
    )
