"""Randomized invariant suites shared by the ``check`` command and the tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ENV, FeedbackGraph, stream_rng
from .evaluation import (
    best_shifting_sequence,
    brute_force_shifting,
    concentration_check,
    count_switches,
    history_dependent_sampler,
    iid_bernoulli_sampler,
)
from .freezing import dual_threshold_freeze, triple_threshold_freeze
from .learners import GraphLearnerConfig
from .graphs import exact_independence_number, greedy_maximal_independent_set, is_independent, observation_mass

TOL = 1e-9
# two-sided and one-sided normal tail beyond 3 standard errors
TAIL_3SE = 0.0027
TAIL_3SE_ONE_SIDED = 0.00135


@dataclass
class SuiteReport:
    suite: str
    trials: int
    violations: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return dict(suite=self.suite, trials=self.trials, violations=self.violations,
                    passed=self.passed, details=self.details)


def random_graph(rng: np.random.Generator, n: int, density: float) -> FeedbackGraph:
    upper = np.triu(rng.random((n, n)) < density, 1)
    return FeedbackGraph.from_matrix(upper | upper.T)


def _random_state(rng, max_nodes=20):
    n = int(rng.integers(2, max_nodes + 1))
    g = random_graph(rng, n, float(rng.uniform(0.0, 0.6)))
    p = rng.dirichlet(np.full(n, float(rng.choice([0.1, 0.5, 1.0, 5.0]))))
    p = np.maximum(p, 1e-300)
    return g, p / p.sum()


# ---------------------------------------------------------------- freezing


def freezing_suite(trials: int, seed: int, eps_grid=(0.1, 0.3, 0.5)) -> SuiteReport:
    """Mass bounds of dual-threshold freezing at gamma = eps'/(4 alpha)."""
    rng = stream_rng(seed, ENV)
    counts = dict(frozen_mass=0, initial_mass=0, propagation=0, certificate=0)
    worst = dict(frozen_mass=0.0, initial_ratio=0.0, propagation_ratio=0.0)
    for _ in range(trials):
        g, p = _random_state(rng)
        alpha = exact_independence_number(g)
        eps = float(rng.choice(eps_grid))
        gamma = eps / (4 * alpha)
        fr = dual_threshold_freeze(g, p, gamma)
        if fr.frozen_mass > eps + TOL:
            counts["frozen_mass"] += 1
        if fr.initial_mass > alpha * gamma + TOL:
            counts["initial_mass"] += 1
        if fr.propagation_mass > 3 * fr.initial_mass + TOL:
            counts["propagation"] += 1
        if not fr.certificate_ok:
            counts["certificate"] += 1
        worst["frozen_mass"] = max(worst["frozen_mass"], fr.frozen_mass / eps)
        worst["initial_ratio"] = max(worst["initial_ratio"], fr.initial_mass / (alpha * gamma))
        if fr.initial_mass > 0:
            worst["propagation_ratio"] = max(worst["propagation_ratio"], fr.propagation_mass / fr.initial_mass)
    return SuiteReport("freezing", trials, sum(counts.values()), dict(counts=counts, worst=worst))


# ---------------------------------------------------------------- estimator bias


def _frozen_state(rng, mode: str):
    g, p = _random_state(rng)
    eps = float(rng.choice([0.1, 0.3, 0.5]))
    d = g.n_arms
    if mode == "blackbox":
        alpha = exact_independence_number(g)
        fr = dual_threshold_freeze(g, p, eps / (4 * alpha))
        zeta = 0.0
    else:
        prm = GraphLearnerConfig(eps, "green_ix_graph", kappa_guess=d).params(d)
        fr = triple_threshold_freeze(g, p, prm["beta"], prm["gamma"])
        zeta = prm["zeta"]
    active = np.ones(d, dtype=bool)
    active[list(fr.frozen)] = False
    return g, np.asarray(fr.play_dist), active, zeta


def estimator_table(g: FeedbackGraph, w: np.ndarray, active: np.ndarray, losses: np.ndarray,
                    zeta: float = 0.0) -> np.ndarray:
    """Row j holds every arm's estimate when arm j is played."""
    big_w = g.closed @ w
    scale = np.divide(losses, big_w + zeta, out=np.zeros_like(losses), where=active)
    return g.closed * scale[None, :]


def estimator_suite(trials: int, seed: int, redraws: int = 100_000) -> SuiteReport:
    """Monte-Carlo bias of the graph estimators at random frozen states.

    Unfrozen arms' means must match the true loss within 3 standard errors
    for the unbiased estimator; every arm's mean must not exceed the true
    loss by more than 3 standard errors. Single misses are expected at the
    normal tail rate, so the suite counts a violation only when misses exceed
    that rate by three binomial standard errors, or when the exact
    expectation disagrees with the true loss.
    """
    rng = stream_rng(seed, ENV)
    two_sided = dict(tests=0, misses=0)
    one_sided = dict(tests=0, misses=0)
    exact_errors = 0
    for k in range(trials):
        mode = "blackbox" if k % 2 == 0 else "green_ix_graph"
        g, w, active, zeta = _frozen_state(rng, mode)
        losses = rng.random(g.n_arms)
        table = estimator_table(g, w, active, losses, zeta)
        exact = w @ table
        if mode == "blackbox" and np.any(np.abs(exact[active] - losses[active]) > TOL):
            exact_errors += 1
        if np.any(exact > losses + TOL):
            exact_errors += 1
        draws = rng.choice(g.n_arms, size=redraws, p=w)
        vals = table[draws]
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(redraws)
        if mode == "blackbox":
            dev = np.abs(mean - losses)[active]
            two_sided["tests"] += int(active.sum())
            two_sided["misses"] += int(np.count_nonzero(dev > 3 * se[active] + TOL))
        one_sided["tests"] += g.n_arms
        one_sided["misses"] += int(np.count_nonzero(mean > losses + 3 * se + TOL))
    violations = exact_errors
    for tally, rate in ((two_sided, TAIL_3SE), (one_sided, TAIL_3SE_ONE_SIDED)):
        n = tally["tests"]
        allowed = n * rate + 3 * math.sqrt(n * rate * (1 - rate))
        tally["allowed"] = allowed
        if tally["misses"] > allowed:
            violations += 1
    return SuiteReport("estimators", trials, violations,
                       dict(unfrozen=two_sided, all_arms=one_sided, exact_errors=exact_errors))


# ---------------------------------------------------------------- concentration


def concentration_suite(trials: int, seed: int, horizon: int = 200, grid=((0.25, 0.01), (0.25, 0.05),
                                                                        (0.5, 0.01), (0.5, 0.05))) -> SuiteReport:
    """Failure rates of both directions must stay within delta plus three binomial SEs."""
    rows = []
    violations = 0
    samplers = dict(iid=iid_bernoulli_sampler(0.5), history=history_dependent_sampler())
    for name, sampler in samplers.items():
        for k, (eps, delta) in enumerate(grid):
            up, lo = concentration_check(sampler, horizon, eps, delta, trials, seed=seed + 7919 * k)
            allowed = delta + 3 * math.sqrt(delta * (1 - delta) / trials)
            bad = int(up > allowed) + int(lo > allowed)
            violations += bad
            rows.append(dict(sampler=name, eps=eps, delta=delta, upper=up, lower=lo, allowed=allowed))
    return SuiteReport("concentration", trials, violations, dict(rows=rows))


# ---------------------------------------------------------------- shifting comparators


def shifting_dp_suite(trials: int, seed: int) -> SuiteReport:
    """DP against exhaustive search on tiny schedules, for every switch budget."""
    rng = stream_rng(seed, ENV)
    bad = dict(value=0, switches=0, monotone=0, fixed=0)
    for _ in range(trials):
        T = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        L = rng.integers(0, 3, size=(T, d)).astype(float) / 2
        prev = math.inf
        for K in range(T):
            seq, total = best_shifting_sequence(L, K)
            _, ref = brute_force_shifting(L, K)
            if abs(total - ref) > TOL or abs(L[np.arange(T), seq].sum() - total) > TOL:
                bad["value"] += 1
            if count_switches(seq) > K:
                bad["switches"] += 1
            if total > prev + TOL:
                bad["monotone"] += 1
            prev = total
            if K == 0 and abs(total - L.sum(axis=0).min()) > TOL:
                bad["fixed"] += 1
    return SuiteReport("shifting-dp", trials, sum(bad.values()), dict(counts=bad))


# ---------------------------------------------------------------- graph tools


def graph_tools_suite(trials: int, seed: int) -> SuiteReport:
    rng = stream_rng(seed, ENV)
    bad = dict(independent=0, maximal=0, alpha_bound=0, mass=0)
    for _ in range(trials):
        g, p = _random_state(rng, max_nodes=14)
        n = g.n_arms
        cand = np.flatnonzero(rng.random(n) < 0.6)
        mis = greedy_maximal_independent_set(g, cand)
        if not is_independent(g, mis.members):
            bad["independent"] += 1
        covered = g.closed[list(mis.members)].any(axis=0) if len(mis) else np.zeros(n, dtype=bool)
        if not covered[cand].all():
            bad["maximal"] += 1
        if exact_independence_number(g) < len(greedy_maximal_independent_set(g, range(n))):
            bad["alpha_bound"] += 1
        i = int(rng.integers(n))
        if abs(observation_mass(g, p, i) - float(g.closed[i] @ p)) > TOL:
            bad["mass"] += 1
    return SuiteReport("graph-tools", trials, sum(bad.values()), dict(counts=bad))


SUITES = {
    "freezing": freezing_suite,
    "estimators": estimator_suite,
    "concentration": concentration_suite,
    "shifting-dp": shifting_dp_suite,
    "graph-tools": graph_tools_suite,
}


def run_suite(name: str, trials: int, seed: int) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](trials, seed)


# ---------------------------------------------------------------- doubling audit


def doubling_violations(result, alpha_true: int | None = None) -> dict:
    """Check a doubled run's phase bookkeeping.

    Every closed phase must satisfy eps*Lhat > psi/eps^q at its last round and
    not one round earlier; the phase count is at most log2(Lhat+1)+1; the
    alpha guess doubles at most ceil(log2 alpha_true) times.
    """
    bad = dict(boundary=0, early=0, count=0, alpha=0)
    phases = result.phases
    for ph in phases[:-1]:
        run = np.cumsum(result.incurred[ph.start:ph.end])
        lhat = float(run[-1]) if run.size else 0.0
        before = float(run[-2]) if run.size > 1 else 0.0
        if not ph.eps * lhat > ph.threshold:
            bad["boundary"] += 1
        if ph.eps * before > ph.threshold:
            bad["early"] += 1
    total = result.learner_loss
    if len(phases) > math.log2(total + 1) + 1:
        bad["count"] += 1
    if alpha_true is not None and result.alpha_doublings > math.ceil(math.log2(max(alpha_true, 1))):
        bad["alpha"] += 1
    return bad
