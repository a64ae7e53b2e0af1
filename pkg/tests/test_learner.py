import random

import pytest
from hypothesis import given, settings, strategies as st

from discom.acceptance import check_against_oracle, cone_config
from discom.config import sim_config_from_dict
from discom.core import Action, ControlParams, Partition, Phase
from discom.learner import Decision, DiscomLearner
from discom.netsim import run


def learner(n_own=2, n_cas=2, own_costs=None, peer_costs=None, seed=0, c_max=None):
    return DiscomLearner(
        0, n_own, n_cas, Partition(1, 2), ControlParams(0.5, c_max or n_own),
        own_costs or [0.0] * n_own, peer_costs or [0.0] * n_cas, random.Random(seed),
    )


CELL = (0,)
T_SMALL = 2  # H1(2) = sqrt(2) ln 2 ~ 0.98, so a count of 5 is above every threshold


def saturate(lr, n=5):
    st = lr._stats(CELL)
    st.own_n = [n] * lr.n_own
    st.peer_n = [n] * lr.n_cas
    st.peer_tr = [n] * lr.n_cas
    st.n = n * (lr.n_own + lr.n_cas - 1)
    return st


def test_fresh_state_explores_own():
    lr = learner()
    d = lr.select(CELL, 1)
    assert d.phase is Phase.EXPLORE_OWN and d.action.kind == 0


def test_train_on_refreshed_peer():
    lr = learner()
    st = saturate(lr)
    st.peer_tr[1] = 0
    d = lr.select(CELL, T_SMALL, report=lambda j: st.peer_n[j])
    assert d.phase is Phase.TRAIN and d.action == Action.peer(1)
    assert d.reports == ((1, 5),)
    assert st.peer_tr[1] == 0


def test_query_without_training_when_peer_caught_up():
    lr = learner()
    st = saturate(lr)
    st.peer_tr[1] = 0
    d = lr.select(CELL, T_SMALL, report=lambda j: 100)
    assert d.phase is Phase.EXPLOIT and d.reports == ((1, 100),)
    assert st.peer_tr[1] == 95


def test_uncommitted_select_leaves_state():
    lr = learner()
    st = saturate(lr)
    st.peer_tr[1] = 0
    d = lr.select(CELL, T_SMALL, report=lambda j: 100, commit=False)
    assert st.peer_tr[1] == 0
    lr.apply_reports(d)
    assert st.peer_tr[1] == 95


def test_missing_report_callback():
    lr = learner()
    saturate(lr)
    lr._stats(CELL).peer_tr[1] = 0
    with pytest.raises(ValueError):
        lr.select(CELL, T_SMALL)


def test_explore_peer():
    lr = learner()
    st = saturate(lr)
    st.peer_n[1] = 0
    st.peer_tr[1] = 50
    d = lr.select(CELL, T_SMALL)
    assert d.phase is Phase.EXPLORE_PEER and d.action == Action.peer(1)


def test_exploit_picks_best_net_reward():
    lr = learner(own_costs=[0.1, 0.0], peer_costs=[0.0, 0.25])
    st = saturate(lr)
    st.own_mean = [0.8, 0.3]
    st.peer_mean = [0.0, 0.9]
    assert lr.estimated_net_rewards(CELL) == {
        Action.own(0): pytest.approx(0.7), Action.own(1): pytest.approx(0.3), Action.peer(1): pytest.approx(0.65)}
    d = lr.select(CELL, T_SMALL)
    assert d.phase is Phase.EXPLOIT and d.action == Action.own(0)


def test_force_exploit_skips_exploration():
    lr = learner()
    d = lr.select(CELL, 1, force_exploit=True)
    assert d.phase is Phase.EXPLOIT


def test_cooperate_fresh_is_uniform():
    lr = learner(n_own=3)
    picks = {lr.cooperate_select(CELL, 1) for _ in range(200)}
    assert picks == {0, 1, 2}


def test_cooperate_ties_and_argmax():
    lr = learner(n_own=3)
    st = saturate(lr)
    st.own_mean = [0.2, 0.9, 0.9]
    assert {lr.cooperate_select(CELL, T_SMALL) for _ in range(200)} == {1, 2}
    st.own_mean = [0.2, 0.9, 0.5]
    assert {lr.cooperate_select(CELL, T_SMALL) for _ in range(50)} == {1}


def test_cooperate_ignores_costs():
    lr = learner(own_costs=[0.0, 0.9])
    st = saturate(lr)
    st.own_mean = [0.5, 0.95]
    assert lr.cooperate_select(CELL, T_SMALL) == 1


def test_record_train_touches_only_training_counter():
    lr = learner()
    st = saturate(lr)
    before = st.as_dict()
    lr.record_outcome(Decision(Action.peer(1), Phase.TRAIN, CELL), 1)
    after = st.as_dict()
    assert after["peer_tr"][1] == before["peer_tr"][1] + 1
    after["peer_tr"][1] -= 1
    assert after == before


def test_record_incremental_mean():
    lr = learner()
    st = lr._stats(CELL)
    st.own_mean[0], st.own_n[0], st.n = 0.5, 2, 2
    lr.record_outcome(Decision(Action.own(0), Phase.EXPLOIT, CELL), 1)
    assert st.own_mean[0] == pytest.approx(2 / 3) and st.own_n[0] == 3 and st.n == 3
    lr.record_outcome(Decision(Action.peer(1), Phase.EXPLORE_PEER, CELL), 0)
    assert st.peer_n[1] == 1 and st.peer_mean[1] == 0.0 and st.n == 4


def test_missing_feedback_changes_nothing():
    lr = learner()
    st = saturate(lr)
    before = st.as_dict()
    for phase, a in [(Phase.TRAIN, Action.peer(1)), (Phase.EXPLOIT, Action.own(0)),
                     (Phase.EXPLORE_PEER, Action.peer(1))]:
        lr.record_outcome(Decision(a, phase, CELL), None)
    lr.record_cooperation_outcome(0, CELL, None)
    assert st.as_dict() == before


@pytest.mark.parametrize("prior,rewards,expected", [((0.0, 0), [1], (1.0, 1)), ((1.0, 4), [0], (0.8, 5)),
                                                    ((0.0, 0), [1, 1], (1.0, 2))])
def test_cooperation_update(prior, rewards, expected):
    lr = learner()
    st = lr._stats(CELL)
    st.own_mean[1], st.own_n[1] = prior
    st.n = prior[1]
    for r in rewards:
        lr.record_cooperation_outcome(1, CELL, r)
    assert (st.own_mean[1], st.own_n[1]) == (pytest.approx(expected[0]), expected[1])
    assert st.n == prior[1] + len(rewards)


def test_report_cell_count():
    lr = learner()
    assert lr.report_cell_count((1,)) == 0
    lr.record_outcome(Decision(Action.own(0), Phase.EXPLORE_OWN, (1,)), 0)
    assert lr.report_cell_count((1,)) == 1
    lr.record_cooperation_outcome(0, (1,), 1)
    assert lr.report_cell_count((1,)) == 2
    lr.record_outcome(Decision(Action.peer(1), Phase.TRAIN, (1,)), 1)
    assert lr.report_cell_count((1,)) == 2


@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4), st.lists(st.floats(0.0, 0.5), min_size=4, max_size=4),
       st.floats(0.0, 0.5))
def test_argmax_invariant_to_cost_shift(means, costs, shift):
    def exploit_set(c):
        lr = learner(n_own=2, n_cas=3, own_costs=c[:2], peer_costs=[0.0] + c[2:])
        st = saturate(lr)
        st.own_mean = means[:2]
        st.peer_mean = [0.0] + means[2:]
        values = lr.estimated_net_rewards(CELL)
        best = max(values.values())
        return {a for a, v in values.items() if v >= best - 1e-12}

    assert exploit_set(costs) == exploit_set([c + shift for c in costs])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1.0, 0.6]), st.integers(2, 3), st.integers(1, 3),
       st.sampled_from([1.0, 20.0]))
def test_decisions_match_independent_recomputation(seed, p_r, n_cas, n_own, divisor):
    # phase priority, sample means, training isolation and final states re-derived from the trace
    nets = [[i * n_own + k for k in range(n_own)] for i in range(n_cas)]
    fields = [{"type": "holder_cone", "peak": 0.3 + 0.6 * ((7 * c) % 11) / 10, "center": [((3 * c) % 10) / 9],
               "L": 1.0, "gamma": 1.0} for c in range(n_cas * n_own)]
    raw = {"horizon": 300, "seed": seed,
           "env": {"dim": 1, "fields": fields, "feedback": {"p_r": p_r}},
           "network": {"contents": nets, "peer_costs": [[0.0 if i == j else 0.05 * (i + j) for j in range(n_cas)]
                                                       for i in range(n_cas)]},
           "algorithm": {"kind": "discom", "divisor": divisor, "slicing": 3}}
    cfg = sim_config_from_dict(raw)
    problems, _ = check_against_oracle(run(cfg), cfg.to_dict())
    assert problems == []


def test_small_instance_oracle_equivalence():
    raw = cone_config(50, 0)
    raw["algorithm"]["slicing"] = 2
    cfg = sim_config_from_dict(raw)
    problems, n_exploit = check_against_oracle(run(cfg), cfg.to_dict())
    assert problems == [] and n_exploit > 0
