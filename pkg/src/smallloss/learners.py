"""Partial-information learners built on freezing, and the doubling wrappers.

Each learner exposes ``step(loss_oracle)`` returning a validated
:class:`RoundRecord`. These are the reference implementations; the compiled
loops in ``simulation`` reproduce them round for round on oblivious schedules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    Distribution,
    EstimatedLossVector,
    FeedbackGraph,
    GraphChanged,
    LossOracle,
    RoundRecord,
    SweepCapExceeded,
    inverse_cdf,
)
from .freezing import (
    FreezeResult,
    dual_threshold_freeze,
    empirical_semibandit_freeze,
    play_prob_freeze,
    triple_threshold_freeze,
)
from .full_info import FollowPerturbedLeader, Hedge, NoisyHedge, perturbation_cap
from .graphs import greedy_maximal_independent_set

MODES = ("blackbox", "green_ix", "green_ix_graph", "mixed")

# user-facing eps -> internal learning parameter, per learner family
EPS_PRIME_FACTOR = {
    "blackbox": 1 / 2,
    "green_ix": 1 / 2,
    "green_ix_graph": 1 / 5,
    "semibandit": 1 / 2,
    "semibandit_plain": 1 / 6,
}

# scale of the phase-length constant per family, chosen so that each phase's
# additive learning cost is of the same order as its threshold
PSI_CONSTANTS = {
    "blackbox": 48.0,
    "green_ix": 8.0,
    "green_ix_graph": 48.0,
    "semibandit": 0.5,
}


@dataclass(frozen=True)
class GraphLearnerConfig:
    eps_prime: float
    mode: str = "blackbox"
    alpha_guess: int = 1
    kappa_guess: Optional[int] = None
    delta: float = 0.05
    noise: float = 0.0
    adapt_alpha: bool = False
    mix: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode != "mixed" and not 0 < self.eps_prime < 1:
            raise ValueError("eps_prime must lie in (0, 1)")
        if self.alpha_guess < 1:
            raise ValueError("alpha_guess must be at least 1")
        if self.mode == "green_ix_graph" and not self.kappa_guess:
            raise ValueError("green_ix_graph needs kappa_guess")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def from_eps(cls, eps: float, mode: str, **kw) -> "GraphLearnerConfig":
        return cls(eps_prime=eps * EPS_PRIME_FACTOR[mode], mode=mode, **kw)

    def params(self, d: int) -> dict:
        """Thresholds and rates for a d-armed problem."""
        e = self.eps_prime
        if self.mode == "blackbox":
            gamma = e / (4 * self.alpha_guess)
            return dict(gamma=gamma, beta=0.0, zeta=0.0, eta=e * gamma / 3, cap=3 / gamma, floor=gamma / 3)
        if self.mode == "green_ix":
            z = e / (2 * d)
            return dict(gamma=e / d, beta=0.0, zeta=z, eta=z, cap=1 / z, floor=e / d)
        if self.mode == "green_ix_graph":
            gamma = e / self.kappa_guess
            z = e / (6 * self.kappa_guess)
            return dict(gamma=gamma, beta=e / d, zeta=z, eta=z, cap=3 / gamma, floor=gamma / 3)
        mix = self.mix if self.mix is not None else 0.1
        return dict(gamma=0.0, beta=0.0, zeta=0.0, eta=mix / d, cap=d / mix, floor=0.0, mix=mix)


def baseline_config(d: int, horizon: int, delta: float = 0.05) -> GraphLearnerConfig:
    """Uniform-exploration comparison learner with the classical horizon tuning."""
    mix = min(1.0, math.sqrt(d * math.log(d) / ((math.e - 1) * horizon)))
    return GraphLearnerConfig(eps_prime=0.5, mode="mixed", mix=mix, delta=delta)


class FreezingLearner:
    """Shared loop: engine distribution, freeze, draw, estimate, update."""

    mode = "blackbox"

    def __init__(self, graph: Optional[FeedbackGraph], config: GraphLearnerConfig,
                 rng: np.random.Generator, engine=None, n_arms: Optional[int] = None):
        if config.mode != self.mode:
            config = replace(config, mode=self.mode)
        self.graph = graph
        self.config = config
        self.d = graph.n_arms if graph is not None else int(n_arms)
        self.rng = rng
        self._set_params()
        self.engine = engine if engine is not None else self._default_engine()
        self.t = 0
        self.alpha_doublings = 0

    def _set_params(self):
        self.params = self.config.params(self.d)

    def _default_engine(self):
        eta = self.params["eta"]
        if self.config.noise > 0:
            return NoisyHedge(self.d, eta, noise=self.config.noise)
        return Hedge(self.d, eta)

    def freeze(self, g: FeedbackGraph, p: np.ndarray) -> FreezeResult:
        raise NotImplementedError

    def play_distribution(self, p: np.ndarray, fr: FreezeResult) -> np.ndarray:
        return np.asarray(fr.play_dist)

    def observed(self, g: FeedbackGraph, played: int) -> np.ndarray:
        return g.neighbors_array(played)

    def observation_probs(self, g: FeedbackGraph, w: np.ndarray) -> np.ndarray:
        return g.closed @ w

    def _graph_for(self, g: Optional[FeedbackGraph], oracle: LossOracle) -> FeedbackGraph:
        g = g if g is not None else self.graph
        if g is None:
            raise ValueError("no feedback graph supplied")
        if oracle.graph != g:
            raise GraphChanged("loss oracle reveals on a different graph than the learner uses")
        return g

    def step(self, oracle: LossOracle, g: Optional[FeedbackGraph] = None, u: Optional[float] = None) -> RoundRecord:
        g = self._graph_for(g, oracle)
        p = self.engine.probs()
        doublings = self.alpha_doublings
        fr = self.freeze(g, p)
        if self.alpha_doublings != doublings:
            p = self.engine.probs()
        w = self.play_distribution(p, fr)
        if u is None:
            u = self.rng.random()
        played = inverse_cdf(w, u)
        idx, vals = oracle.reveal(played)
        frozen = np.zeros(self.d, dtype=bool)
        frozen[list(fr.frozen)] = True
        big_w = self.observation_probs(g, w)
        est = np.zeros(self.d)
        zeta = self.params["zeta"]
        seen = self.observed(g, played)
        lookup = dict(zip(idx.tolist(), vals.tolist()))
        for i in seen:
            if not frozen[i]:
                est[i] = lookup[int(i)] / (big_w[i] + zeta)
        estimated = EstimatedLossVector(est, self.params["cap"])
        self.engine.update(est)
        self.t += 1
        return RoundRecord(
            t=self.t,
            played=played,
            true_loss=float(lookup[played]),
            estimated=estimated,
            frozen_mass=fr.frozen_mass,
            play_dist=Distribution(w),
            extras={"freeze": fr, "p": p, "observation": big_w},
        )


class DualThresholdLearner(FreezingLearner):
    """Black-box reduction from any full-information engine to graph feedback.

    With ``adapt_alpha`` the independence-number guess starts at
    ``config.alpha_guess`` and doubles (restarting the engine) whenever the
    greedy maximal independent set of the initially frozen arms exceeds it.
    """

    mode = "blackbox"

    def freeze(self, g, p):
        while True:
            fr = dual_threshold_freeze(g, p, self.params["gamma"])
            if not self.config.adapt_alpha:
                return fr
            mis = greedy_maximal_independent_set(g, fr.initial_frozen)
            if len(mis) <= self.config.alpha_guess:
                return fr
            self.config = replace(self.config, alpha_guess=2 * self.config.alpha_guess)
            self.alpha_doublings += 1
            self._set_params()
            self.engine = self._default_engine()
            p = self.engine.probs()

    def step(self, oracle, g=None, u=None):
        rec = super().step(oracle, g, u)
        rec.extras["alpha_guess"] = self.config.alpha_guess
        return rec


class GreenIX(FreezingLearner):
    """Bandit learner: freeze on play probability, implicit-exploration estimates."""

    mode = "green_ix"

    def __init__(self, n_arms: int, config: GraphLearnerConfig, rng, engine=None):
        super().__init__(FeedbackGraph.empty(n_arms), config, rng, engine=engine)

    def freeze(self, g, p):
        return play_prob_freeze(p, self.params["gamma"])

    def _graph_for(self, g, oracle):
        # extra side observations are ignored, so any revealing graph is fine
        return self.graph

    def observed(self, g, played):
        return np.array([played])

    def observation_probs(self, g, w):
        return np.asarray(w, dtype=float)


class GreenIXGraph(FreezingLearner):
    """Fixed-graph learner with a play-probability and two observation thresholds."""

    mode = "green_ix_graph"

    def freeze(self, g, p):
        return triple_threshold_freeze(g, p, self.params["beta"], self.params["gamma"])

    def _graph_for(self, g, oracle):
        if g is not None and g != self.graph:
            raise GraphChanged("this learner requires the construction-time graph")
        return super()._graph_for(self.graph, oracle)


class ExplorationMixing(FreezingLearner):
    """Comparison learner: Hedge mixed with uniform exploration, no freezing."""

    mode = "mixed"

    def freeze(self, g, p):
        return play_prob_freeze(p, 0.0)

    def play_distribution(self, p, fr):
        mix = self.params["mix"]
        return (1 - mix) * p + mix / self.d


def alpha_sum(g: FeedbackGraph, p, w, frozen) -> float:
    """Sum of p_i / W_i over unfrozen arms."""
    big_w = g.closed @ np.asarray(w, dtype=float)
    keep = ~np.asarray(frozen, dtype=bool)
    return float(np.sum(np.asarray(p)[keep] / big_w[keep]))


def estimate_gap_bound(gamma: float, eta: float) -> float:
    return 1.0 / gamma + math.log(1.0 / gamma) / eta


def hedge_second_order_slack(p_hist, est_hist, eta: float) -> float:
    """Return bound minus lhs of the second-order Hedge inequality (non-negative when it holds)."""
    p_hist = np.asarray(p_hist)
    est_hist = np.asarray(est_hist)
    lhs = float(np.sum(p_hist * est_hist) - est_hist.sum(axis=0).min())
    rhs = eta * float(np.sum(p_hist * est_hist ** 2)) + math.log(p_hist.shape[1]) / eta
    return rhs - lhs


# ---------------------------------------------------------------- doubling


def psi_value(mode: str, d: int, delta: float, alpha: int = 1, m: int = 1, n_elements: int = 1,
              horizon: int = 1, c: Optional[float] = None) -> tuple[float, float]:
    """(psi, q) for the phase condition of each learner family."""
    if c is None:
        if mode not in PSI_CONSTANTS:
            raise ValueError(f"no phase schedule for mode {mode!r}")
        c = PSI_CONSTANTS[mode]
    if mode == "blackbox":
        return c * alpha * (math.log(d) + math.log(d / delta)), 2.0
    if mode == "green_ix":
        return c * d * math.log(d / delta), 1.0
    if mode == "green_ix_graph":
        return c * alpha * math.log(d / delta), 1.0
    if mode == "semibandit":
        return c * (m ** 3 + n_elements) * math.log(n_elements * horizon / (m * delta)), 1.0
    raise ValueError(f"no phase schedule for mode {mode!r}")


@dataclass
class PhaseInfo:
    tau: int
    eps: float
    start: int
    end: int
    lhat: float
    psi: float
    q: float
    alpha_guess: int = 1

    @property
    def threshold(self) -> float:
        return self.psi / self.eps ** self.q

    @property
    def fired(self) -> bool:
        return self.eps * self.lhat > self.threshold


@dataclass
class PhaseState:
    tau: int = 0
    phase_loss: float = 0.0
    psi: float = 1.0
    q: float = 1.0
    alpha_guess: int = 1

    @property
    def eps_tau(self) -> float:
        return 2.0 ** -self.tau

    def should_advance(self) -> bool:
        return self.eps_tau * self.phase_loss > self.psi / self.eps_tau ** self.q


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    alpha_doublings: int = 0

    @property
    def played(self) -> np.ndarray:
        return np.array([r.played for r in self.records], dtype=int)

    @property
    def incurred(self) -> np.ndarray:
        return np.array([r.true_loss for r in self.records])


def doubling_run(inner_factory: Callable[[float], object], env: Callable[[int, list], LossOracle],
                 psi: float, q: float, horizon: int) -> RunTrace:
    """Run phases with eps_tau = 2^-tau, restarting the inner learner whenever
    eps_tau times the phase's realized loss exceeds psi / eps_tau^q.

    ``inner_factory(eps)`` builds a fresh learner; ``env(t, history)`` returns
    the round's loss oracle given previously played arms.
    """
    if q < 1 or psi <= 0:
        raise ValueError("need q >= 1 and psi > 0")
    trace = RunTrace()
    state = PhaseState(psi=psi, q=q)
    learner = inner_factory(state.eps_tau)
    start = 0
    history: list = []
    for t in range(horizon):
        rec = learner.step(env(t, history))
        history.append(rec.played)
        rec.extras["phase"] = state.tau
        trace.records.append(rec)
        state.phase_loss += rec.true_loss
        if state.should_advance():
            trace.phases.append(_close_phase(state, start, t + 1, learner))
            trace.alpha_doublings += getattr(learner, "alpha_doublings", 0)
            state = PhaseState(tau=state.tau + 1, psi=psi, q=q)
            start = t + 1
            learner = inner_factory(state.eps_tau)
    if start < horizon:
        trace.phases.append(_close_phase(state, start, horizon, learner))
        trace.alpha_doublings += getattr(learner, "alpha_doublings", 0)
    return trace


def _close_phase(state: PhaseState, start: int, end: int, learner) -> PhaseInfo:
    guess = getattr(getattr(learner, "config", None), "alpha_guess", 1)
    return PhaseInfo(state.tau, state.eps_tau, start, end, state.phase_loss, state.psi, state.q, guess)


def alpha_doubling_update(config: GraphLearnerConfig, observed_mis_size: int) -> GraphLearnerConfig:
    """Double the independence-number guess when the frozen arms' greedy MIS exceeds it."""
    if observed_mis_size > config.alpha_guess:
        return replace(config, alpha_guess=2 * config.alpha_guess)
    return config


# ---------------------------------------------------------------- semi-bandits


def sample_count(eps_prime: float, gamma: float, m: int, n_elements: int, horizon: int, delta: float) -> int:
    """Strategies drawn per round to estimate element observation probabilities."""
    return math.ceil((1 + 2 * eps_prime) * m * math.log(n_elements * horizon / delta) / (eps_prime * gamma))


def semibandit_estimate(members: np.ndarray, losses: np.ndarray, probs: np.ndarray, zeta: float = 0.0) -> np.ndarray:
    """Importance-weighted element losses for the played strategy's elements."""
    est = np.zeros(losses.size)
    idx = np.flatnonzero(members)
    est[idx] = losses[idx] / (probs[idx] + zeta)
    return est


class SemiBanditFreezingLearner:
    """Semi-bandit reduction over an FPL engine with sampled observation probabilities.

    Every round draws ``n_samples`` strategies from the engine, freezes
    elements whose empirical frequency (over samples avoiding frozen elements)
    is below ``gamma``, plays a strategy drawn from the engine conditioned on
    avoiding frozen elements, and feeds back ``l_e / (P_hat_e + zeta)``.
    """

    def __init__(self, inst, eps_prime: float, horizon: int, delta: float,
                 sample_rng: np.random.Generator, play_rng: np.random.Generator,
                 implicit: bool = True, eta: Optional[float] = None):
        if not 0 < eps_prime < 1:
            raise ValueError("eps_prime must lie in (0, 1)")
        self.inst = inst
        self.eps_prime = eps_prime
        self.gamma = eps_prime / inst.n_elements
        self.zeta = self.gamma if implicit else 0.0
        self.cap = 1.0 / self.gamma
        m = inst.m
        if eta is None:
            eta = (2 * eps_prime) / (2 * m * m)
        trunc = perturbation_cap(inst.n_elements, horizon, m, eta)
        self.engine = FollowPerturbedLeader(inst.n_elements, eta, trunc, inst.oracle)
        self.n_samples = sample_count(eps_prime, self.gamma, m, inst.n_elements, horizon, delta)
        self.sample_rng = sample_rng
        self.play_rng = play_rng
        self.t = 0
        self.max_rejections = 100 * self.n_samples
        self.sample_log: list = []

    def sample_strategies(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = self.engine.perturbations(rng, n)
        scores = self.engine.cum_element_loss[None, :] - z
        return self.inst.oracle_many(scores, np.zeros(self.inst.n_elements, dtype=bool))

    def draw_avoiding(self, frozen: np.ndarray) -> int:
        tried = 0
        block = 8
        while tried < self.max_rejections:
            ids = self.sample_strategies(block, self.play_rng)
            ok = ~self.inst.members(ids)[:, frozen].any(axis=1)
            if ok.any():
                return int(ids[int(np.argmax(ok))])
            tried += block
        raise SweepCapExceeded(f"no strategy avoiding frozen elements in {self.max_rejections} draws")

    def step(self, element_losses: np.ndarray) -> RoundRecord:
        ids = self.sample_strategies(self.n_samples, self.sample_rng)
        self.sample_log.append(ids.size)
        fr = empirical_semibandit_freeze(self.inst.members(ids), self.gamma)
        played = self.draw_avoiding(fr.frozen_elements)
        members = self.inst.members(np.array([played]))[0]
        losses = np.asarray(element_losses, dtype=float)
        est = semibandit_estimate(members, losses, fr.element_mass, self.zeta)
        estimated = EstimatedLossVector(est, self.cap)
        self.engine.update(est)
        self.t += 1
        return RoundRecord(
            t=self.t,
            played=played,
            true_loss=float(losses[members].sum()),
            estimated=estimated,
            frozen_mass=fr.frozen_mass,
            play_dist=None,
            extras={"freeze": fr, "n_samples": int(ids.size)},
        )
