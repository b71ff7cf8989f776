import math

import numpy as np
import pytest

from smallloss.core import NegativeLoss, NoFeasibleStrategy, stream_rng
from smallloss.environments import SemiBanditInstance
from smallloss.full_info import (
    DEFAULT_NOISE,
    FollowPerturbedLeader,
    Hedge,
    NoisyHedge,
    hedge_probs,
)
from smallloss.learners import hedge_second_order_slack


class TestHedge:
    def test_equal_is_uniform(self):
        assert np.allclose(hedge_probs(np.full(4, 3.0), 0.7), 0.25)

    def test_two_arms(self):
        assert np.allclose(hedge_probs(np.array([1.0, 0.0]), math.log(2)), [1 / 3, 2 / 3])

    def test_dominated_vanishes(self):
        assert np.allclose(hedge_probs(np.array([0.0, 0.0, 1e9]), 1.0), [0.5, 0.5, 0.0])

    def test_zero_update_noop(self):
        h = Hedge(3, 0.5)
        before = h.probs()
        assert np.array_equal(h.update(np.zeros(3)).probs(), before)

    def test_update_example(self):
        assert np.allclose(Hedge(2, math.log(2)).update([1.0, 0.0]).probs(), [1 / 3, 2 / 3])

    def test_additive(self):
        a, b = np.array([0.3, 1.2, 0.0]), np.array([2.0, 0.1, 0.5])
        assert np.allclose(Hedge(3, 0.4).update(a).update(b).probs(), Hedge(3, 0.4).update(a + b).probs())

    def test_negative(self):
        with pytest.raises(NegativeLoss):
            Hedge(2, 1.0).update([-1.0, 0.0])

    def test_second_order_regret(self, rng):
        d, eta, T = 5, 0.1, 400
        h = Hedge(d, eta)
        ps, ls = [], []
        for _ in range(T):
            l = rng.exponential(1.0, d) * (rng.random(d) < 0.3)
            ps.append(h.probs())
            ls.append(l)
            h.update(l)
        assert hedge_second_order_slack(np.array(ps), np.array(ls), eta) >= -1e-9


class TestNoisyHedge:
    def test_zero_noise(self):
        h = NoisyHedge(3, 0.5, noise=0.0).update([1.0, 0.0, 2.0])
        assert np.allclose(h.probs(), hedge_probs(h.cum_est_loss, 0.5))

    def test_floor(self):
        h = NoisyHedge(10, 1.0, noise=1e-4)
        h.cum_est_loss[1:] = 1e6
        assert h.probs()[3] == pytest.approx(1e-5)

    def test_uniform_fixed_point(self):
        assert np.allclose(NoisyHedge(4, 1.0, noise=0.5).probs(), 0.25)

    def test_defaults(self):
        assert NoisyHedge(2, 1.0, horizon=100).noise == 0.01
        assert NoisyHedge(2, 1.0).noise == DEFAULT_NOISE


def _fpl(strategies, n, eta=1.0, trunc=5.0):
    inst = SemiBanditInstance(n, strategies)
    return FollowPerturbedLeader(n, eta, trunc, inst.oracle)


class TestFPL:
    def test_single_strategy(self, rng):
        f = _fpl([[0, 1]], 2)
        assert all(f.draw(rng) == 0 for _ in range(20))

    def test_truncation_beats_gap(self, rng):
        f = _fpl([[0, 1], [2, 3]], 4, trunc=0.5)
        f.update([0, 0, 100.0, 100.0])
        assert all(f.draw(rng) == 0 for _ in range(200))

    def test_symmetric_frequency(self):
        f = _fpl([[0], [1]], 2)
        rng = stream_rng(3, 2)
        freq = np.mean([f.draw(rng) for _ in range(100_000)])
        assert abs(freq - 0.5) < 0.01

    def test_forbidden(self, rng):
        f = _fpl([[0], [1]], 2)
        assert f.draw(rng, forbidden=[0]) == 1
        with pytest.raises(NoFeasibleStrategy):
            f.draw(rng, forbidden=[0, 1])

    def test_perturbations_truncated(self, rng):
        f = _fpl([[0], [1], [2]], 3, eta=0.01, trunc=3.0)
        z = f.perturbations(rng, 10_000)
        assert z.max() <= 3.0 and z.min() >= 0

    def test_update_accumulates(self):
        f = _fpl([[0], [1]], 2)
        f.update([0.0, 0.0]).update([0.5, 1.0]).update([0.25, 0.0])
        assert np.allclose(f.cum_element_loss, [0.75, 1.0])
        with pytest.raises(NegativeLoss):
            f.update([-0.1, 0.0])

    def test_fresh_perturbations_independent(self):
        f = _fpl([[0], [1]], 2)
        a = f.perturbations(stream_rng(1, 2, 0), 20_000)[:, 0]
        b = f.perturbations(stream_rng(1, 2, 1), 20_000)[:, 0]
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(20_000)
