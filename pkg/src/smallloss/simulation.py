"""Whole-run drivers: fixed-eps or doubled runs of any learner on any instance.

Oblivious graph instances go through the compiled loop; adaptive adversaries
and per-round graphs go through the reference learners round by round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import LEARNER, PERTURB, SAMPLER, AllFrozen, stream_rng
from .environments import CachedRows, GraphInstance, SemiBanditInstance
from .learners import (
    DualThresholdLearner,
    ExplorationMixing,
    GraphLearnerConfig,
    GreenIX,
    GreenIXGraph,
    PhaseInfo,
    SemiBanditFreezingLearner,
    baseline_config,
    EPS_PRIME_FACTOR,
    psi_value,
)

_MODE_IDS = {"blackbox": K.MODE_BLACKBOX, "green_ix": K.MODE_GREEN_IX,
             "green_ix_graph": K.MODE_GREEN_IX_GRAPH, "mixed": K.MODE_MIXED}
_LEARNER_CLASSES = {"blackbox": DualThresholdLearner, "green_ix": GreenIX,
                    "green_ix_graph": GreenIXGraph, "mixed": ExplorationMixing}


@dataclass(frozen=True)
class LearnerSpec:
    """What to run. ``eps=None`` turns on the doubling wrapper over eps."""

    mode: str
    eps: Optional[float]
    delta: float
    alpha_guess: int = 1
    adapt_alpha: bool = False
    kappa_guess: Optional[int] = None
    noise: float = 0.0
    psi_c: Optional[float] = None
    implicit: bool = True
    # multiplies the certificate floor checked by the audit; only fixtures change it
    audit_floor_scale: float = 1.0

    @property
    def doubling(self) -> bool:
        return self.eps is None


@dataclass
class SimResult:
    arms: np.ndarray
    incurred: np.ndarray
    frozen_mass: np.ndarray
    phase_of_round: np.ndarray
    phases: list
    audit: dict = field(default_factory=dict)
    alpha_doublings: int = 0
    sample_counts: Optional[np.ndarray] = None
    # full per-round loss rows, kept only when they cannot be regenerated from a schedule
    realized: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.arms.size

    @property
    def learner_loss(self) -> float:
        return float(self.incurred.sum())


def _empty_audit() -> dict:
    return dict(cert_violations=0, cap_violations=0, gap_violations=0, second_order_violations=0,
                max_alpha_sum=0.0, max_estimate=0.0, max_frozen_mass=0.0, rounds=0)


def _graph_config(spec: LearnerSpec, eps: float, d: int, horizon: int, alpha_guess: int) -> GraphLearnerConfig:
    if spec.mode == "mixed":
        return baseline_config(d, horizon, spec.delta)
    return GraphLearnerConfig.from_eps(
        eps, spec.mode, alpha_guess=alpha_guess, kappa_guess=spec.kappa_guess,
        delta=spec.delta, noise=spec.noise, adapt_alpha=spec.adapt_alpha,
    )


def _psi(spec: LearnerSpec, d: int, alpha_guess: int) -> tuple[float, float]:
    scale = spec.kappa_guess if spec.mode == "green_ix_graph" else alpha_guess
    return psi_value(spec.mode, d, spec.delta, alpha=scale, c=spec.psi_c)


def simulate_graph(inst: GraphInstance, spec: LearnerSpec, seed: int, force_reference: bool = False) -> SimResult:
    if inst.oblivious and not force_reference and type(inst).graph_at is GraphInstance.graph_at:
        return _simulate_graph_fast(inst, spec, seed)
    return _simulate_graph_reference(inst, spec, seed)


def _simulate_graph_fast(inst: GraphInstance, spec: LearnerSpec, seed: int) -> SimResult:
    horizon = inst.horizon
    d = inst.n_arms
    losses = inst.schedule.matrix()
    u = stream_rng(seed, LEARNER).random(horizon)
    closed = np.ascontiguousarray(inst.graph.closed)
    mode = _MODE_IDS[spec.mode]
    arms = np.zeros(horizon, dtype=np.int64)
    incurred = np.zeros(horizon)
    fmass = np.zeros(horizon)
    phase_of = np.zeros(horizon, dtype=np.int64)
    istate = np.array([spec.alpha_guess, 0, int(spec.adapt_alpha)], dtype=np.int64)
    audit = _empty_audit()
    phases = []
    lhat = np.zeros(1)
    t, tau = 0, 0
    while t < horizon:
        eps = 2.0 ** -tau if spec.doubling else spec.eps
        cfg = _graph_config(spec, eps, d, horizon, int(istate[0]))
        prm = cfg.params(d)
        par = np.zeros(K.N_PARAMS)
        par[K.P_EPS] = cfg.eps_prime
        par[K.P_ETA] = prm["eta"]
        par[K.P_NOISE] = cfg.noise
        par[K.P_GAMMA] = prm["gamma"]
        par[K.P_BETA] = prm["beta"]
        par[K.P_ZETA] = prm["zeta"]
        par[K.P_MIX] = prm.get("mix", 0.0)
        par[K.P_AUDIT] = spec.audit_floor_scale
        if spec.doubling:
            psi, q = _psi(spec, d, int(istate[0]))
        else:
            psi, q = 0.0, 1.0
        cum = np.zeros(d)
        au = np.zeros(K.N_AUDIT)
        stop = K.run_graph(mode, closed, losses, u, t, horizon, cum, par, istate, psi, q, eps,
                           arms, incurred, fmass, au, lhat)
        if stop < 0:
            raise AllFrozen(f"every arm froze at round {-1 - stop}")
        phase_of[t:stop] = tau
        phases.append(PhaseInfo(tau, eps, t, stop, float(lhat[0]), psi, q, int(istate[0])))
        _merge_audit(audit, au, cum, par, spec, d)
        t = stop
        tau += 1
    return SimResult(arms, incurred, fmass, phase_of, phases, audit, int(istate[1]))


def _merge_audit(audit: dict, au: np.ndarray, cum: np.ndarray, par: np.ndarray, spec: LearnerSpec, d: int):
    audit["cert_violations"] += int(au[K.A_CERT_VIOL])
    audit["cap_violations"] += int(au[K.A_CAP_VIOL])
    audit["gap_violations"] += int(au[K.A_GAP_VIOL])
    audit["max_alpha_sum"] = max(audit["max_alpha_sum"], float(au[K.A_ALPHA_OBS]))
    audit["max_estimate"] = max(audit["max_estimate"], float(au[K.A_MAX_EST]))
    audit["max_frozen_mass"] = max(audit["max_frozen_mass"], float(au[K.A_MAX_FROZEN]))
    audit["rounds"] += int(au[K.A_ROUNDS])
    if spec.noise == 0.0 and spec.mode != "mixed" and au[K.A_ROUNDS] > 0:
        eta = par[K.P_ETA]
        lhs = au[K.A_S1] - cum.min()
        rhs = eta * au[K.A_S2] + math.log(d) / eta
        if lhs > rhs * (1 + 1e-9) + 1e-9:
            audit["second_order_violations"] += 1


def _simulate_graph_reference(inst: GraphInstance, spec: LearnerSpec, seed: int) -> SimResult:
    horizon = inst.horizon
    d = inst.n_arms
    rng = stream_rng(seed, LEARNER)
    env = inst.env()
    cls = _LEARNER_CLASSES[spec.mode]
    arms = np.zeros(horizon, dtype=np.int64)
    incurred = np.zeros(horizon)
    fmass = np.zeros(horizon)
    phase_of = np.zeros(horizon, dtype=np.int64)
    audit = _empty_audit()
    phases = []
    guess = spec.alpha_guess
    doublings = 0
    history: list = []
    realized = None if inst.oblivious else np.zeros((horizon, d))
    t, tau = 0, 0
    while t < horizon:
        eps = 2.0 ** -tau if spec.doubling else spec.eps
        cfg = _graph_config(spec, eps, d, horizon, guess)
        if spec.mode == "green_ix":
            learner = cls(d, cfg, rng)
        else:
            learner = cls(inst.graph_at(t), cfg, rng)
        if spec.doubling:
            psi, q = _psi(spec, d, guess)
        else:
            psi, q = 0.0, 1.0
        threshold = psi / eps ** q
        start = t
        lhat = 0.0
        while t < horizon:
            oracle = env(t, history)
            if realized is not None:
                realized[t] = oracle._losses
            rec = learner.step(oracle, oracle.graph) if spec.mode == "blackbox" else learner.step(oracle)
            fr = rec.extras["freeze"]
            history.append(rec.played)
            arms[t] = rec.played
            incurred[t] = rec.true_loss
            fmass[t] = rec.frozen_mass
            phase_of[t] = tau
            if spec.mode != "mixed" and fr.certificate < fr.floor * spec.audit_floor_scale:
                audit["cert_violations"] += 1
            audit["max_estimate"] = max(audit["max_estimate"], float(np.max(rec.estimated.losses)))
            audit["max_frozen_mass"] = max(audit["max_frozen_mass"], rec.frozen_mass)
            audit["rounds"] += 1
            t += 1
            lhat += rec.true_loss
            if psi > 0 and eps * lhat > threshold:
                break
        guess = getattr(learner.config, "alpha_guess", guess)
        doublings += learner.alpha_doublings
        phases.append(PhaseInfo(tau, eps, start, t, lhat, psi, q, guess))
        tau += 1
    return SimResult(arms, incurred, fmass, phase_of, phases, audit, doublings, realized=realized)


def violation_count(result: SimResult) -> int:
    a = result.audit
    return int(a["cert_violations"] + a["cap_violations"] + a["gap_violations"] + a["second_order_violations"])


def comparator_losses(inst, result: SimResult) -> np.ndarray:
    """Per-round loss of every fixed comparator (arm or strategy)."""
    if result.realized is not None:
        return result.realized
    if isinstance(inst, SemiBanditInstance):
        return inst.schedule.matrix() @ inst.incidence.T.astype(float)
    return inst.schedule.matrix()


# ---------------------------------------------------------------- semi-bandits


def simulate_semibandit(inst: SemiBanditInstance, spec: LearnerSpec, seed: int) -> SimResult:
    horizon = inst.schedule.horizon
    rows = CachedRows(inst.schedule)
    sample_rng = stream_rng(seed, SAMPLER)
    play_rng = stream_rng(seed, PERTURB)
    factor = EPS_PRIME_FACTOR["semibandit" if spec.implicit else "semibandit_plain"]
    arms = np.zeros(horizon, dtype=np.int64)
    incurred = np.zeros(horizon)
    fmass = np.zeros(horizon)
    phase_of = np.zeros(horizon, dtype=np.int64)
    counts = np.zeros(horizon, dtype=np.int64)
    audit = _empty_audit()
    audit["expected_samples"] = []
    phases = []
    t, tau = 0, 0
    while t < horizon:
        eps = 2.0 ** -tau if spec.doubling else spec.eps
        learner = SemiBanditFreezingLearner(inst, eps * factor, horizon, spec.delta, sample_rng, play_rng,
                                            implicit=spec.implicit)
        audit["expected_samples"].append(learner.n_samples)
        if spec.doubling:
            psi, q = psi_value("semibandit", 0, spec.delta, m=inst.m, n_elements=inst.n_elements,
                               horizon=horizon, c=spec.psi_c)
        else:
            psi, q = 0.0, 1.0
        threshold = psi / eps ** q
        start = t
        lhat = 0.0
        while t < horizon:
            rec = learner.step(rows(t))
            fr = rec.extras["freeze"]
            arms[t] = rec.played
            incurred[t] = rec.true_loss
            fmass[t] = rec.frozen_mass
            phase_of[t] = tau
            counts[t] = rec.extras["n_samples"]
            if fr.certificate < fr.floor * spec.audit_floor_scale:
                audit["cert_violations"] += 1
            top = float(np.max(rec.estimated.losses))
            if top > learner.cap * (1 + 1e-9):
                audit["cap_violations"] += 1
            audit["max_estimate"] = max(audit["max_estimate"], top)
            audit["max_frozen_mass"] = max(audit["max_frozen_mass"], rec.frozen_mass)
            audit["rounds"] += 1
            t += 1
            lhat += rec.true_loss
            if psi > 0 and eps * lhat > threshold:
                break
        phases.append(PhaseInfo(tau, eps, start, t, lhat, psi, q))
        tau += 1
    return SimResult(arms, incurred, fmass, phase_of, phases, audit, 0, counts)
