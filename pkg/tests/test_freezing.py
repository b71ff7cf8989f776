import numpy as np
import pytest

from smallloss.core import AllFrozen, FeedbackGraph, SweepCapExceeded
from smallloss.environments import SemiBanditInstance
from smallloss.freezing import (
    dual_threshold_freeze,
    empirical_semibandit_freeze,
    play_prob_freeze,
    semibandit_freeze,
    triple_threshold_freeze,
)
from smallloss.graphs import exact_independence_number
from smallloss.suites import _random_state, freezing_suite, random_graph


def _obs(g, p, alive):
    return g.closed[:, alive] @ p[alive]


class TestDualThreshold:
    def test_complete_graph_identity(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        fr = dual_threshold_freeze(FeedbackGraph.complete(4), p, 0.1)
        assert not fr.frozen and np.allclose(fr.play_dist.probs, p)

    def test_path_single_freeze(self):
        p = np.array([0.01, 0.02, 0.47, 0.50])
        fr = dual_threshold_freeze(FeedbackGraph.path(4), p, 0.1)
        assert fr.initial_frozen == {0} and fr.propagation_frozen == ()
        assert np.allclose(fr.play_dist.probs, np.array([0, 0.02, 0.47, 0.50]) / 0.99)

    def test_path_cascade(self):
        p = np.array([0.09, 0.02, 0.01, 0.88])
        fr = dual_threshold_freeze(FeedbackGraph.path(4), p, 0.12)
        assert fr.initial_frozen == {0}
        assert fr.propagation_frozen == ({1},)
        assert 2 not in fr.frozen
        assert fr.frozen_mass == pytest.approx(0.11)

    def test_all_frozen(self):
        with pytest.raises(AllFrozen):
            dual_threshold_freeze(FeedbackGraph.empty(4), np.full(4, 0.25), 0.5)

    def test_structural_invariants(self, rng):
        for _ in range(300):
            g, p = _random_state(rng, 15)
            gamma = 0.1 / exact_independence_number(g)
            fr = dual_threshold_freeze(g, p, gamma)
            sets = [fr.initial_frozen, *fr.propagation_frozen]
            assert sum(len(s) for s in sets) == len(frozenset().union(*sets))
            w = fr.play_dist.probs
            frozen = list(fr.frozen)
            assert np.all(w[frozen] == 0)
            alive = np.setdiff1d(np.arange(g.n_arms), frozen)
            assert np.allclose(w[alive], p[alive] / (1 - fr.frozen_mass), atol=1e-9)
            assert fr.certificate_ok
            assert _obs(g, p, alive)[alive].min() >= gamma / 3 - 1e-12


def _brute_force_frozen_mass(g, p, gamma, rng):
    """Remove any violating arm in a random order until none remain."""
    alive = np.ones(g.n_arms, dtype=bool)
    initial = g.closed @ p < gamma
    alive &= ~initial
    while True:
        mass = g.closed[:, alive] @ p[alive]
        bad = np.flatnonzero(alive & (mass < gamma / 3))
        if bad.size == 0:
            return float(p[~alive].sum()), alive
        alive[rng.choice(bad)] = False


def test_fixed_point_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 13))
        g = random_graph(rng, n, float(rng.uniform(0, 0.6)))
        p = rng.dirichlet(np.full(n, 0.3))
        gamma = 0.3 / (4 * exact_independence_number(g))
        try:
            fr = dual_threshold_freeze(g, p, gamma)
        except AllFrozen:
            continue
        worst = 0.0
        for _ in range(100):
            mass, alive = _brute_force_frozen_mass(g, p, gamma, rng)
            if alive.any():
                assert _obs(g, p, alive)[alive].min() >= gamma / 3
            worst = max(worst, mass)
        assert fr.certificate_ok
        assert fr.frozen_mass <= worst + 1e-12


def test_mass_bounds_suite():
    report = freezing_suite(10_000, seed=0)
    assert report.violations == 0, report.details


class TestPlayProb:
    def test_uniform_nothing_frozen(self):
        fr = play_prob_freeze(np.full(4, 0.25), 1 / 8)
        assert not fr.frozen

    def test_example(self):
        fr = play_prob_freeze(np.array([0.05, 0.15, 0.80]), 0.1)
        assert fr.frozen == {0}
        assert np.allclose(fr.play_dist.probs, [0, 3 / 19, 16 / 19])

    def test_zero_beta_identity(self):
        p = np.array([0.0, 0.3, 0.7])
        assert np.allclose(play_prob_freeze(p, 0.0).play_dist.probs, p)


class TestTripleThreshold:
    def test_complete_uniform_identity(self):
        fr = triple_threshold_freeze(FeedbackGraph.complete(5), np.full(5, 0.2), 0.01, 0.01)
        assert not fr.frozen

    def test_only_probability_step(self):
        p = np.array([0.02, 0.49, 0.49])
        fr = triple_threshold_freeze(FeedbackGraph.complete(3), p, 0.05, 0.1)
        assert fr.prob_frozen == {0} and not fr.initial_frozen and not fr.propagation_frozen

    def test_path_example(self):
        p = np.array([0.005, 0.105, 0.47, 0.42])
        fr = triple_threshold_freeze(FeedbackGraph.path(4), p, 0.01, 0.1)
        assert fr.prob_frozen == {0} and fr.initial_frozen == frozenset()
        assert fr.frozen_mass == pytest.approx(0.005)


def _si(n, strategies):
    return SemiBanditInstance(n, strategies)


class TestSemiBandit:
    def test_nothing_frozen(self):
        fr = semibandit_freeze(_si(2, [[0], [1]]), [0.5, 0.5], 0.1)
        assert not fr.frozen_elements and not fr.frozen_strategies

    def test_single_pass(self):
        fr = semibandit_freeze(_si(4, [[0, 1], [2, 3]]), [0.05, 0.95], 0.1)
        assert fr.frozen_elements == {0, 1} and fr.frozen_strategies == {0}
        assert np.allclose(fr.play_dist.probs, [0, 1])

    def test_cascade(self):
        fr = semibandit_freeze(_si(3, [[0], [0, 1], [2]]), [0.04, 0.04, 0.92], 0.1)
        assert fr.frozen_elements == {0, 1} and fr.frozen_strategies == {0, 1}

    def test_mass_bound_random(self, rng):
        for _ in range(300):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(2, 12))
            strategies = [list(np.flatnonzero(rng.random(n) < 0.4)) or [int(rng.integers(n))] for _ in range(k)]
            strategies += [[e] for e in range(n)]
            inst = _si(n, strategies)
            p = rng.dirichlet(np.full(inst.n_strategies, 0.3))
            eps = float(rng.choice([0.1, 0.3, 0.5]))
            fr = semibandit_freeze(inst, p, eps / n)
            assert fr.frozen_mass <= eps + 1e-12
            inc = inst.incidence
            for e in fr.frozen_elements:
                assert set(np.flatnonzero(inc[:, e])) <= fr.frozen_strategies
            assert fr.certificate_ok


class TestEmpirical:
    def test_masks_samples_with_frozen_elements(self):
        s = np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1], [0, 1, 1]], dtype=bool)
        ef = empirical_semibandit_freeze(s, 0.3)
        assert ef.frozen_elements.tolist() == [True, False, False]
        assert ef.kept_samples.tolist() == [False, True, True, True]
        assert ef.frozen_mass == pytest.approx(0.25)
        assert ef.certificate_ok

    def test_sweep_cap(self):
        s = np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]] * 1, dtype=bool)
        with pytest.raises((SweepCapExceeded, AllFrozen)):
            empirical_semibandit_freeze(s, 0.6, sweep_cap=0)
