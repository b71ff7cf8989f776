import numpy as np
import pytest

from smallloss.core import (
    AllZero,
    ArmOutOfRange,
    Distribution,
    EstimatedLossVector,
    FeedbackGraph,
    LengthMismatch,
    LossOracle,
    LossVector,
    NegativeEntry,
    NegativeLoss,
    OutOfRangeLoss,
    RoundRecord,
    expected_loss,
    inverse_cdf,
    make_distribution,
    stream_rng,
)


class TestMakeDistribution:
    def test_uniform(self):
        assert make_distribution([1, 1, 1, 1]).allclose([0.25] * 4)

    def test_single_mass(self):
        assert make_distribution([2, 0, 0]).allclose([1, 0, 0])

    def test_divides_by_sum(self):
        assert make_distribution([0.3, 0.1, 0.2]).allclose([0.5, 1 / 6, 1 / 3], atol=1e-12)

    def test_all_zero(self):
        with pytest.raises(AllZero):
            make_distribution([0, 0])

    def test_negative(self):
        with pytest.raises(NegativeEntry):
            make_distribution([1, -0.1])

    def test_idempotent(self):
        d = make_distribution([0.3, 0.1, 0.2])
        assert np.allclose(make_distribution(d.probs).probs, d.probs, atol=1e-12, rtol=0)


class TestDistribution:
    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            Distribution(np.array([0.5, 0.6]))

    def test_is_immutable(self):
        d = Distribution.uniform(3)
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_point_mass_sample(self):
        d = Distribution.point_mass(4, 2)
        assert all(d.sample(u) == 2 for u in (0.0, 0.3, 0.999999))

    def test_inverse_cdf_ascending(self):
        p = np.array([0.2, 0.0, 0.5, 0.3])
        assert inverse_cdf(p, 0.0) == 0
        assert inverse_cdf(p, 0.19) == 0
        assert inverse_cdf(p, 0.2) == 2
        assert inverse_cdf(p, 0.71) == 3
        assert inverse_cdf(p, 1.0 - 1e-16) == 3

    def test_inverse_cdf_skips_trailing_zero(self):
        assert inverse_cdf(np.array([0.5, 0.5, 0.0]), 1.0) == 1


class TestExpectedLoss:
    def test_uniform_two_arms(self):
        assert expected_loss(Distribution.uniform(2), LossVector(np.array([1.0, 0.0]))) == 0.5

    def test_point_mass(self):
        d = Distribution.point_mass(3, 2)
        assert expected_loss(d, LossVector(np.array([0.3, 0.7, 0.1]))) == pytest.approx(0.1)

    def test_dot(self):
        assert expected_loss([0.25, 0.75], [0.4, 0.8]) == pytest.approx(0.7)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            expected_loss([0.5, 0.5], [1.0])


class TestLossTypes:
    def test_out_of_range_is_error(self):
        with pytest.raises(OutOfRangeLoss):
            LossVector(np.array([0.5, 1.2]))

    def test_estimated_bound(self):
        with pytest.raises(OutOfRangeLoss):
            EstimatedLossVector(np.array([0.0, 5.0]), 4.0)
        with pytest.raises(NegativeLoss):
            EstimatedLossVector(np.array([-1.0]), 4.0)
        assert EstimatedLossVector(np.array([4.0]), 4.0)[0] == 4.0

    def test_round_record_frozen_mass_range(self):
        est = EstimatedLossVector(np.zeros(2), 1.0)
        with pytest.raises(ValueError):
            RoundRecord(1, 0, 0.0, est, 1.5, Distribution.uniform(2))


class TestFeedbackGraph:
    def test_neighborhood_includes_self(self):
        g = FeedbackGraph(3, [(0, 1)])
        assert g.neighborhood(0) == {0, 1}
        assert g.neighborhood(2) == {2}

    def test_symmetric(self):
        g = FeedbackGraph(4, [(0, 3), (1, 2)])
        assert all(i in g.adjacency[j] for i in range(4) for j in g.adjacency[i])

    def test_bad_edge(self):
        with pytest.raises(ArmOutOfRange):
            FeedbackGraph(2, [(0, 2)])

    def test_constructors(self):
        assert FeedbackGraph.complete(3).closed.all()
        assert not FeedbackGraph.empty(3).closed[0, 1]
        cl = FeedbackGraph.disjoint_cliques([2, 3])
        assert cl.neighborhood(0) == {0, 1} and cl.neighborhood(4) == {2, 3, 4}
        assert FeedbackGraph.from_labels([1, 0, 1]) == FeedbackGraph(3, [(0, 2)])

    def test_oracle_reveals_neighborhood_only(self):
        g = FeedbackGraph.path(3)
        idx, vals = LossOracle([0.1, 0.2, 0.3], g).reveal(0)
        assert idx.tolist() == [0, 1] and vals.tolist() == [0.1, 0.2]


def test_streams_are_reproducible_and_distinct():
    a = stream_rng(7, 1).random(5)
    assert np.array_equal(a, stream_rng(7, 1).random(5))
    assert not np.array_equal(a, stream_rng(7, 2).random(5))
    assert not np.array_equal(a, stream_rng(8, 1).random(5))
