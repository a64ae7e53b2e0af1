import numpy as np
import pytest

from discom.netsim import SimTrace


def cone(peak, center, L=1.0):
    return {"type": "holder_cone", "peak": peak, "center": [center], "L": L, "gamma": 1.0}


@pytest.fixture
def two_ca_raw():
    return {"horizon": 2000, "seed": 3,
            "env": {"dim": 1, "fields": [cone(0.9, 0.1), cone(0.7, 0.5), cone(0.8, 0.9), cone(0.6, 0.35)],
                    "feedback": {"p_r": 0.7}},
            "network": {"contents": [[0, 1], [2, 3]], "own_costs": [[0.05, 0.0], [0.0, 0.1]],
                        "peer_costs": [[0.0, 0.1], [0.02, 0.0]]},
            "algorithm": {"kind": "discom", "divisor": 10}}


def make_trace(phases, oracle_mu=None, reward=None, cost=None, action_mu=None, ca=None, meta=None):
    """Hand-built single-CA trace for metric arithmetic."""
    n = len(phases)
    cols = {
        "t": np.arange(1, n + 1), "ca": np.zeros(n, np.int32) if ca is None else np.asarray(ca, np.int32),
        "x": np.zeros((n, 1)), "cell": np.zeros((n, 1), np.int32), "phase": np.asarray(phases, np.int8),
        "action_kind": np.zeros(n, np.int8), "action_id": np.zeros(n, np.int32), "served": np.zeros(n, np.int32),
        "peer_content": np.full(n, -1, np.int32), "observed": np.ones(n, bool),
        "reward": np.asarray(reward if reward is not None else [0] * n, np.int8),
        "cost": np.asarray(cost if cost is not None else [0.0] * n, float),
        "oracle_kind": np.zeros(n, np.int8), "oracle_id": np.zeros(n, np.int32),
        "oracle_mu": np.asarray(oracle_mu if oracle_mu is not None else [0.0] * n, float),
        "action_mu": np.asarray(action_mu if action_mu is not None else [0.0] * n, float),
        "high_type": np.zeros(n, bool), "instance": np.zeros(n, np.int32),
    }
    M = 1 if ca is None else int(max(ca)) + 1
    meta = meta or [{"kind": "discom", "m": 1, "n_actions": 1, "z": 0.5, "divisor": 1.0, "c_max": 1}] * M
    return SimTrace("h", "e", M, n // M, 1, cols, [()] * n, meta, [])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARY

    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
