import numpy as np
import pytest

from fairrmab import rng as rngs
from fairrmab.core import RmabInstance, ValueTable
from fairrmab.softfair import (SoftFairPolicy, SoftFairState, logits, logits_via_zeta, q_value, run_episode,
                               run_softfair_episode, select_probs, step_states, top_k, update_value)
from fairrmab.whittle import subsidy_backward_induction

from conftest import make_arm, random_instance


def test_q_value_first_episode_is_expected_reward(reference_arm):
    vt = ValueTable.zeros(1, 3)
    assert q_value(reference_arm, vt, 0, 0, 0, 1, 1.0) == 0.5


def test_q_value_two_term_arithmetic(reference_arm):
    vt = ValueTable.zeros(1, 3)
    vt.v[0, 1] = (0.0, 1.0)
    assert q_value(reference_arm, vt, 0, 0, 0, 1, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_q_value_index_errors(reference_arm):
    vt = ValueTable.zeros(1, 3)
    with pytest.raises(IndexError):
        q_value(reference_arm, vt, 0, 3, 0, 1, 1.0)
    with pytest.raises(IndexError):
        q_value(reference_arm, vt, 1, 0, 0, 1, 1.0)


def test_logits_first_episode_equal_myopic_gap(small_instance):
    s = np.array([0, 1, 1, 0, 1])
    lam = logits(small_instance, ValueTable.zeros(5, 6), s, 2)
    g = small_instance.P[np.arange(5), :, s, 1]
    np.testing.assert_allclose(lam, g[:, 1] - g[:, 0], atol=1e-15)


def test_action_independent_arm_has_zero_logit(reference_arm):
    flat = make_arm(0.3, 0.6, 0.3, 0.6)
    inst = RmabInstance((flat, reference_arm), 1, 4, 0.9)
    vt = ValueTable(np.random.default_rng(0).random((2, 5, 2)))
    vt.v[:, -1] = 0.0
    assert logits(inst, vt, np.array([1, 0]), 1)[0] == 0.0


def test_logits_match_explicit_zeta_path():
    inst = random_instance(3, n=6, k=2, T=8, gamma=0.95)
    state = SoftFairState(ValueTable.zeros(6, 8), 1.0)
    gen = np.random.default_rng(0)
    for _ in range(4):
        run_softfair_episode(state, inst, gen.integers(0, 2, 6), gen)
    assert state.value_table.v.any()
    for t in range(8):
        s = gen.integers(0, 2, 6)
        np.testing.assert_allclose(logits(inst, state.value_table, s, t),
                                   logits_via_zeta(inst, state.value_table, s, t), atol=1e-12)


def test_select_probs_examples():
    np.testing.assert_allclose(select_probs([0, 0, 0, 0], 1.0), 0.25)
    np.testing.assert_allclose(select_probs([np.log(2), 0], 1.0), [2 / 3, 1 / 3], atol=1e-15)
    p = select_probs([1, 0], 1000.0)
    assert p[0] == pytest.approx(1.0) and p[1] < 1e-300
    with pytest.raises(ValueError):
        select_probs([1, 0], 0.0)


def test_select_probs_limits_and_shift_invariance():
    lam = np.random.default_rng(1).normal(size=8)
    np.testing.assert_allclose(select_probs(lam, 1e-9), 1 / 8, atol=1e-6)
    np.testing.assert_allclose(select_probs(lam + 17.0, 2.0), select_probs(lam, 2.0), atol=1e-12)


def test_top_k_ties_to_lower_index():
    assert top_k([0.3, 0.5, 0.5, 0.1], 2).tolist() == [1, 2]
    assert top_k([1, 1, 1, 1], 2).tolist() == [0, 1]


@pytest.mark.parametrize("incl,action", [(0.0, 0), (1.0, 1)])
def test_update_value_pure_mixtures(small_instance, incl, action):
    state = SoftFairState(ValueTable.zeros(5, 6), 1.0)
    state.value_table.v[:, 3] = 0.7
    before = state.value_table.copy()
    s = np.array([1, 0, 1, 0, 0])
    update_value(state, small_instance, s, 2, np.full(5, incl))
    for i, arm in enumerate(small_instance.arms):
        expected = q_value(arm, before, i, 2, s[i], action, small_instance.gamma)
        assert state.value_table.v[i, 2, s[i]] == pytest.approx(expected, abs=1e-15)
    # the other state at t=2 and every other timestep are untouched
    mask = np.ones_like(before.v, dtype=bool)
    mask[np.arange(5), 2, s] = False
    np.testing.assert_array_equal(state.value_table.v[mask], before.v[mask])


def test_first_round_distribution_is_softmax_of_gaps():
    inst = RmabInstance((make_arm(0.2, 0.6, 0.5, 0.9), make_arm(0.1, 0.4, 0.3, 0.7)), 1, 1, 1.0, 1.0)
    policy = SoftFairPolicy(c=1.0)
    policy.reset(inst)
    gen = np.random.default_rng(0)
    run_episode(policy, inst, np.array([0, 1]), gen, gen)
    np.testing.assert_allclose(policy.last_decision.select_prob, select_probs([0.3, 0.3], 1.0))
    np.testing.assert_allclose(policy.last_decision.inclusion_prob, policy.last_decision.select_prob)


def test_deterministic_transitions_follow_chain():
    # passive always drops to 0, active always lifts to 1
    arm = make_arm(0.0, 0.0, 1.0, 1.0)
    inst = RmabInstance((arm, arm, arm), 1, 4, 1.0, 1e6)
    policy = SoftFairPolicy(c=1e6)
    policy.reset(inst)
    gen = np.random.default_rng(0)
    tr = run_episode(policy, inst, np.array([1, 1, 1]), gen, gen)
    np.testing.assert_array_equal(tr.states[1:], tr.actions)
    np.testing.assert_array_equal(tr.rewards, np.ones(4))
    assert tr.pull_counts.sum() == 4


def test_step_states_threshold():
    P = np.stack([make_arm(0.2, 0.6, 0.5, 0.9).p] * 2)
    nxt = step_states(P, np.array([0, 0]), np.array([1, 0]), np.array([0.49, 0.49]))
    assert nxt.tolist() == [1, 0]


def test_episode_is_reproducible():
    inst = random_instance(9, n=8, k=2, T=10)
    traces = []
    for _ in range(2):
        policy = SoftFairPolicy(c=2.0)
        policy.reset(inst)
        traces.append(run_episode(policy, inst, np.ones(8, dtype=int), rngs.stream(5, 3), rngs.stream(5, 2)))
    np.testing.assert_array_equal(traces[0].states, traces[1].states)
    np.testing.assert_array_equal(traces[0].actions, traces[1].actions)


def test_trace_invariants_and_value_bounds():
    inst = random_instance(2, n=10, k=3, T=15, gamma=0.95)
    policy = SoftFairPolicy(c=2.0)
    policy.reset(inst)
    gen = np.random.default_rng(3)
    for _ in range(5):
        tr = run_episode(policy, inst, gen.integers(0, 2, 10), gen, gen)
        assert tr.pull_counts.sum() == inst.k * inst.T
        np.testing.assert_array_equal(tr.rewards, tr.states[1:].sum(axis=1))
        assert policy.state.value_table.bound_violations(inst.gamma) == 0
    assert policy.state.episode_index == 5


def test_large_c_picks_top_lambda():
    inst = random_instance(4, n=8, k=3, T=6)
    policy = SoftFairPolicy(c=1e6)
    policy.reset(inst)
    gen = np.random.default_rng(0)

    class Check:
        def __getattr__(self, name):
            return getattr(policy, name)

        def decide(self, instance, s, t, rng):
            a = policy.decide(instance, s, t, rng)
            assert np.flatnonzero(a).tolist() == top_k(policy.last_logits, instance.k).tolist()
            return a

    for _ in range(3):
        run_episode(Check(), inst, gen.integers(0, 2, 8), gen, gen)


def test_greedy_variant_selects_top_k_and_updates_softly():
    inst = random_instance(6, n=6, k=2, T=5)
    policy = SoftFairPolicy(greedy=True, update_c=1.0)
    policy.reset(inst)
    gen = np.random.default_rng(0)
    s = gen.integers(0, 2, 6)
    policy.start_episode(inst)
    a = policy.decide(inst, s, 0, gen)
    assert np.flatnonzero(a).tolist() == top_k(policy.last_logits, 2).tolist()
    np.testing.assert_allclose(policy.last_decision.select_prob, select_probs(policy.last_logits, 1.0))


def test_double_buffer_matches_in_place_for_forward_sweep():
    inst = random_instance(8, n=6, k=2, T=7)
    tables = []
    for flag in (False, True):
        policy = SoftFairPolicy(c=1.5, double_buffer=flag)
        policy.reset(inst)
        for e in range(4):
            run_episode(policy, inst, np.ones(6, dtype=int), rngs.stream(1, 3, e), rngs.stream(1, 2, e))
        tables.append(policy.state.value_table.v)
    np.testing.assert_array_equal(tables[0], tables[1])


def test_converges_to_single_arm_optimum_with_inert_companion():
    arm = make_arm(0.2, 0.6, 0.5, 0.9)
    inert = make_arm(0.3, 0.6, 0.3, 0.6)
    T, gamma = 4, 0.9
    inst = RmabInstance((arm, inert), 1, T, gamma, 1e6)
    policy = SoftFairPolicy(c=1e6)
    policy.reset(inst)
    for e in range(200):
        init = np.array([e % 2, 0])
        run_episode(policy, inst, init, rngs.stream(0, 3), rngs.stream(0, 2, e))
    opt = subsidy_backward_induction(arm, 0.0, T - 1, gamma).v
    np.testing.assert_allclose(policy.state.value_table.v[0, :T], opt, atol=1e-9)
