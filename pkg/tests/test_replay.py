import math

import numpy as np
import pytest

from discom.config import sim_config_from_dict
from discom.replay import EventLog, read_event_log, replay, synthetic_log, write_event_log

from conftest import cone


def single_ca(contents, kind="discom", n_fields=None):
    n = n_fields or max(max(contents) + 1, 1)
    return sim_config_from_dict({
        "horizon": 1000, "seed": 0,
        "env": {"dim": 1, "fields": [cone(0.3 + 0.1 * (c % 5), c / max(n - 1, 1)) for c in range(n)]},
        "network": {"contents": [contents]}, "algorithm": {"kind": kind, "divisor": 20}})


def log_of(contents, rewards, d=1):
    n = len(contents)
    return EventLog(np.arange(1, n + 1), np.zeros(n, np.int64), np.linspace(0, 1, n).reshape(n, d),
                    np.asarray(contents), np.asarray(rewards, np.int8))


def test_always_matching_log():
    rep = replay(log_of([0] * 200, [1] * 200), single_ca([0]))
    assert rep.match_rate == 1.0 and rep.ctr == 1.0


def test_never_matching_log():
    rep = replay(log_of([1] * 100, [1] * 100), single_ca([0], n_fields=2))
    assert rep.match_rate == 0.0 and rep.ctr is None and rep.per_ca[0]["ctr"] is None


@pytest.mark.parametrize("k", [2, 5])
def test_uniform_policy_match_rate(k):
    cfg = single_ca(list(range(k)), kind="uniform")
    n = 20_000
    rep = replay(synthetic_log(cfg.env, n, seed=3), cfg)
    p = 1 / k
    assert abs(rep.match_rate - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_two_ca_replay_resolves_peer_content(two_ca_raw):
    cfg = sim_config_from_dict(two_ca_raw)
    rep = replay(synthetic_log(cfg.env, 4000, seed=0), cfg)
    assert 0 < rep.matched < rep.rows
    assert sum(v["rows"] for v in rep.per_ca.values()) == rep.rows


def test_log_file_roundtrip(tmp_path):
    cfg = single_ca([0, 1, 2])
    log = synthetic_log(cfg.env, 50, seed=1)
    write_event_log(log, tmp_path / "log.csv")
    back = read_event_log(tmp_path / "log.csv")
    for name in ("t", "ca", "x", "content", "reward"):
        assert np.array_equal(getattr(back, name), getattr(log, name))


@pytest.mark.parametrize("body,line", [
    ("1,0,0.5,2,1\n1,0,0.5,2\n", 3),
    ("1,0,1.5,2,1\n", 2),
    ("1,0,0.5,2,7\n", 2),
    ("1,0,abc,2,1\n", 2),
    ("0,0,0.5,2,1\n", 2),
])
def test_malformed_rows_report_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text("t,ca,x_1,content,reward\n" + body)
    with pytest.raises(ValueError, match=f":{line}:"):
        read_event_log(path)


def test_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,ca,x,content,reward\n1,0,0.5,1,1\n")
    with pytest.raises(ValueError, match=":1:"):
        read_event_log(path)
