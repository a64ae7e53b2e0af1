import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from discom.baseline import HybridEps, UniformRandom, epsilon
from discom.config import sim_config_from_dict
from discom.core import Action, ConfigError, Partition, Phase
from discom.netsim import run


def hybrid(c_eps=1.0, n_own=3, n_cas=1, seed=0):
    return HybridEps(0, n_own, n_cas, Partition(1, 1), [0.0] * n_own, [0.0] * n_cas, random.Random(seed), c_eps)


def test_epsilon_schedule():
    assert epsilon(1, 1.0) == 1.0
    assert epsilon(10**6, 10.0) == pytest.approx(1e-5)
    h = hybrid(c_eps=10.0)
    assert all(h.select((0,), 1).phase is not Phase.EXPLOIT for _ in range(50))
    probs = h.action_probabilities((0,), 10**6)
    assert sum(probs.values()) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        hybrid(c_eps=0.0)


def test_greedy_probability():
    h = hybrid(c_eps=10.0)
    st_ = h._stats((0,))
    st_.own_mean = [0.1, 0.8, 0.3]
    probs = h.action_probabilities((0,), 10**6)
    assert probs[Action.own(1)] == pytest.approx(1 - 1e-5 + 1e-5 / 3)


@given(st.integers(1, 10**7), st.integers(0, 10**7), st.floats(0.01, 100.0))
def test_epsilon_non_increasing(t, dt, c):
    assert epsilon(t + dt, c) <= epsilon(t, c)


@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3), st.integers(1, 10**6), st.floats(0.1, 50))
def test_probabilities_sum_to_one(means, t, c):
    h = hybrid(c_eps=c, n_cas=2)
    h._stats((0,)).own_mean = means
    assert sum(h.action_probabilities((0,), t).values()) == pytest.approx(1.0)


def test_converges_to_clearly_best_arm():
    hits = []
    for seed in range(20):
        raw = {"horizon": 5000, "seed": seed,
               "env": {"dim": 1, "fields": [{"type": "holder_cone", "peak": p, "center": [0.5], "L": 0.0}
                                            for p in (0.0, 1.0, 0.0)]},
               "network": {"contents": [[0, 1, 2]]}, "algorithm": {"kind": "hybrid-eps", "c_eps": 5.0}}
        tr = run(sim_config_from_dict(raw))
        tail = tr["t"] > 4500
        hits.append(np.mean(tr["action_id"][tail] == 1))
    assert np.mean(hits) >= 0.95


def test_hybrid_as_peer_of_discom():
    raw = {"horizon": 2000, "seed": 0,
           "env": {"dim": 1, "fields": [{"type": "holder_cone", "peak": 0.9, "center": [0.2]},
                                        {"type": "holder_cone", "peak": 0.8, "center": [0.8]}]},
           "network": {"contents": [[0], [1]]},
           "algorithm": [{"kind": "discom", "divisor": 10}, {"kind": "hybrid-eps"}]}
    tr = run(sim_config_from_dict(raw))
    assert np.any((tr["ca"] == 0) & (tr["action_kind"] == 1))
    assert len(tr) == 4000


def test_uniform_random_spreads():
    u = UniformRandom(0, 4, 2, Partition(1, 1), random.Random(0))
    picks = [u.select((0,), t).action for t in range(1, 5001)]
    counts = {a: picks.count(a) for a in set(picks)}
    assert len(counts) == 5 and min(counts.values()) > 800
    assert u.state_dict() == {} and u.report_cell_count((0,)) == 0
