import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discom.config import sim_config_from_dict
from discom.core import ConfigError, Phase
from discom.metrics import (
    METRIC_COLUMNS,
    conservation_holds,
    ctr,
    exploitation_accuracy,
    exploration_bound_violations,
    fit_regret_exponent,
    phase_breakdown,
    read_table,
    regret_curve,
    summary_rows,
    write_table,
)
from discom.netsim import run

from conftest import cone, make_trace

E, O, P, TR = Phase.EXPLOIT.code, Phase.EXPLORE_OWN.code, Phase.EXPLORE_PEER.code, Phase.TRAIN.code


def test_single_slot_regret():
    tr = make_trace([E], oracle_mu=[0.8], reward=[0])
    assert regret_curve(tr).final(0) == pytest.approx(0.8)


def test_oracle_policy_has_zero_regret():
    raw = {"horizon": 500, "seed": 0, "env": {"dim": 1, "fields": [cone(1.0, 0.5, L=0.0)]},
           "network": {"contents": [[0]]}, "algorithm": {"kind": "discom", "divisor": 20}}
    tr = run(sim_config_from_dict(raw))
    assert np.all(regret_curve(tr).regret[0] == 0)
    assert exploitation_accuracy(tr, 0.01) == 0.0


def test_constant_gap_regret():
    raw = {"horizon": 20_000, "seed": 1,
           "env": {"dim": 1, "fields": [cone(0.9, 0.5, L=0.0), cone(0.5, 0.5, L=0.0)]},
           "network": {"contents": [[0, 1]]}, "algorithm": {"kind": "uniform"}}
    tr = run(sim_config_from_dict(raw))
    T = 20_000
    gap = np.mean(tr["oracle_mu"] - tr["action_mu"])
    # realized reward ~ Bernoulli(0.7) on average, variance 0.21 per slot
    assert abs(regret_curve(tr).final(0) - gap * T) <= 3 * math.sqrt(0.21 * T)
    assert abs(gap - 0.2) <= 3 * math.sqrt(0.04 / T)


def test_env_mismatch():
    with pytest.raises(ConfigError):
        regret_curve(make_trace([E]), env_hash="other")


def test_phase_breakdown_examples():
    assert phase_breakdown(make_trace([E] * 5))[0] == {"exploit": 100.0, "explore": 0.0, "train": 0.0}
    assert phase_breakdown(make_trace([O, TR, E, E]))[0] == {"exploit": 50.0, "explore": 25.0, "train": 25.0}


@given(st.lists(st.sampled_from([E, O, P, TR]), min_size=1, max_size=200))
def test_phase_breakdown_partitions_100(phases):
    b = phase_breakdown(make_trace(phases))[0]
    assert sum(b.values()) == pytest.approx(100.0)


def test_fit_exponent():
    hs = [1e3, 1e4, 1e5, 1e6]
    assert fit_regret_exponent(hs, [h**0.75 for h in hs]) == pytest.approx(0.75, abs=1e-9)
    assert fit_regret_exponent(hs, [3 * h for h in hs]) == pytest.approx(1.0, abs=1e-9)
    with pytest.warns(UserWarning):
        assert fit_regret_exponent(hs, [0.0] + [h**0.5 for h in hs[1:]]) == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_regret_exponent(hs, [0.0, -1.0, 5.0, 6.0])


def test_exploitation_accuracy_edges():
    tr = make_trace([E, E, O], oracle_mu=[0.9, 0.9, 0.9], action_mu=[0.1, 0.9, 0.0])
    assert exploitation_accuracy(tr, 2.0) == 0.0
    assert exploitation_accuracy(tr, 0.1) == 0.5
    assert exploitation_accuracy(make_trace([O, TR]), 0.1) is None
    with pytest.raises(ValueError):
        exploitation_accuracy(tr, -0.1)


def test_ctr():
    tr = make_trace([E, O, E, E], reward=[1, 0, 0, 1])
    assert ctr(tr, 0) == 0.5
    assert ctr(tr, 0, exploit_only=True) == pytest.approx(2 / 3)
    assert ctr(tr, 0, high_type_only=True) is None


def test_bound_violation_detected():
    meta = [{"kind": "discom", "m": 1, "n_actions": 1, "z": 0.5, "divisor": 1.0, "c_max": 1}]
    # ceil(H1(4)) + 1 = ceil(2 ln 4) + 1 = 4
    assert exploration_bound_violations(make_trace([O] * 4, meta=meta)) == []
    tr = make_trace([O] * 4, meta=meta)
    tr.horizon = 2  # ceil(H1(2)) + 1 = 2
    bad = exploration_bound_violations(tr)
    assert len(bad) == 1 and bad[0].count == 4 and bad[0].bound == 2


def test_conservation():
    assert conservation_holds(make_trace([E, O, TR]))


def test_regret_additive(two_ca_raw):
    tr = run(sim_config_from_dict(two_ca_raw))
    rc = regret_curve(tr)
    m = tr.ca_mask(1)
    per_slot = tr["oracle_mu"][m] - (tr["reward"][m] - tr["cost"][m])
    k = 700
    assert rc.regret[1][-1] == pytest.approx(rc.regret[1][k - 1] + per_slot[k:].sum(), abs=1e-9)


def test_expected_regret_nonnegative(two_ca_raw):
    finals = []
    for seed in range(20):
        tr = run(sim_config_from_dict(dict(two_ca_raw, seed=seed, horizon=1000)))
        finals.append(regret_curve(tr).final(0))
    finals = np.array(finals)
    assert finals.mean() >= -3 * finals.std(ddof=1) / np.sqrt(len(finals))


def test_summary_table_roundtrip(two_ca_raw, tmp_path):
    rows = summary_rows(run(sim_config_from_dict(two_ca_raw)))
    write_table(tmp_path / "m.csv", rows, METRIC_COLUMNS)
    back = read_table(tmp_path / "m.csv")
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        for k in METRIC_COLUMNS:
            if isinstance(a[k], float):
                assert abs(a[k] - b[k]) <= 1e-12
            else:
                assert a[k] == b[k]


@settings(max_examples=30)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=10))
def test_table_floats_roundtrip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("t") / "x.csv"
    write_table(path, [{"v": v} for v in values], ["v"])
    assert [r["v"] for r in read_table(path)] == pytest.approx(values, abs=1e-12, rel=0)
