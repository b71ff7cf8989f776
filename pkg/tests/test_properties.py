import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smallloss.core import AllFrozen, FeedbackGraph, expected_loss, make_distribution
from smallloss.environments import SemiBanditInstance
from smallloss.evaluation import best_shifting_sequence, count_switches
from smallloss.freezing import dual_threshold_freeze, semibandit_freeze, triple_threshold_freeze
from smallloss.full_info import hedge_probs
from smallloss.graphs import exact_independence_number, greedy_maximal_independent_set, is_independent

weights = st.integers(1, 12).flatmap(
    lambda n: arrays(float, n, elements=st.floats(0, 10, allow_nan=False)).filter(lambda a: a.sum() > 1e-6))


@st.composite
def graphs_and_probs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = [e for e in pairs if draw(st.booleans())] if pairs else []
    raw = draw(arrays(float, n, elements=st.floats(1e-6, 1.0)))
    return FeedbackGraph(n, edges), raw / raw.sum()


@given(weights)
def test_make_distribution_valid_and_idempotent(w):
    d = make_distribution(w)
    assert abs(d.probs.sum() - 1) < 1e-9 and d.probs.min() >= 0
    assert np.allclose(make_distribution(d.probs).probs, d.probs, atol=1e-12)


@given(weights, st.floats(0, 1))
def test_expected_loss_in_unit_interval(w, c):
    d = make_distribution(w)
    losses = np.clip(np.linspace(0, 1, w.size) * c, 0, 1)
    assert -1e-12 <= expected_loss(d, losses) <= 1 + 1e-12


@given(arrays(float, st.integers(1, 10), elements=st.floats(0, 50)), st.floats(0.01, 5), st.floats(-100, 100))
def test_hedge_shift_invariance(cum, eta, c):
    a, b = hedge_probs(cum, eta), hedge_probs(cum + c, eta)
    assert np.argmax(a) == np.argmax(b)
    assert np.allclose(a, b, atol=1e-12, rtol=0)


@settings(max_examples=200)
@given(graphs_and_probs(), st.sampled_from([0.1, 0.3, 0.5]))
def test_dual_threshold_bounds(gp, eps):
    g, p = gp
    alpha = exact_independence_number(g)
    gamma = eps / (4 * alpha)
    fr = dual_threshold_freeze(g, p, gamma)
    assert fr.frozen_mass <= eps + 1e-12
    assert fr.initial_mass <= alpha * gamma + 1e-12
    assert fr.propagation_mass <= 3 * fr.initial_mass + 1e-12
    assert fr.certificate_ok
    assert np.all(fr.play_dist.probs[list(fr.frozen)] == 0)


@settings(max_examples=200)
@given(graphs_and_probs(), st.floats(0.01, 0.9))
def test_triple_threshold_certificate(gp, eps):
    g, p = gp
    n = g.n_arms
    try:
        fr = triple_threshold_freeze(g, p, eps / n * 0.99, eps)
    except AllFrozen:
        return
    alive = np.setdiff1d(np.arange(n), list(fr.frozen))
    mass = g.closed[np.ix_(alive, alive)] @ p[alive]
    assert mass.min() >= eps / 3 - 1e-12
    assert p[alive].min() >= eps / n * 0.99


@given(graphs_and_probs())
def test_greedy_mis_maximal_independent(gp):
    g, _ = gp
    mis = greedy_maximal_independent_set(g, range(g.n_arms))
    assert is_independent(g, mis.members)
    covered = g.closed[list(mis.members)].any(axis=0)
    assert covered.all()
    assert len(mis) <= exact_independence_number(g)


@st.composite
def semibandit_states(draw):
    n = draw(st.integers(1, 6))
    k = draw(st.integers(1, 8))
    strategies = [draw(st.sets(st.integers(0, n - 1), min_size=1)) for _ in range(k)]
    strategies += [{e} for e in range(n)]
    raw = draw(arrays(float, len(strategies), elements=st.floats(1e-6, 1.0)))
    return SemiBanditInstance(n, strategies), raw / raw.sum()


@settings(max_examples=200)
@given(semibandit_states(), st.sampled_from([0.1, 0.3, 0.5]))
def test_semibandit_freeze_mass(state, eps):
    inst, p = state
    fr = semibandit_freeze(inst, p, eps / inst.n_elements)
    assert fr.frozen_mass <= eps + 1e-12
    assert fr.certificate_ok


@given(st.integers(1, 12), st.integers(1, 4), st.data())
def test_shifting_dp_monotone(T, d, data):
    L = np.array(data.draw(st.lists(st.lists(st.floats(0, 1), min_size=d, max_size=d), min_size=T, max_size=T)))
    prev = np.inf
    for K in range(T):
        seq, total = best_shifting_sequence(L, K)
        assert count_switches(seq) <= K
        assert abs(L[np.arange(T), seq].sum() - total) < 1e-9
        assert total <= prev + 1e-12
        prev = total
