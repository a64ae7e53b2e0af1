"""Offline evaluation on logged events by rejection sampling.

Each logged row is offered to the CA that received it. The learner proposes an
action; for a peer call the peer resolves which content it would show. The row
is kept only when the resolved content equals the logged one, and only kept
rows update learner state. A CA's clock is the number of rows it has kept so
far plus one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import SimConfig
from .core import ActionKind, ConfigError
from .env import Environment
from .netsim import bind_seed, build_learner
from .rng import Purpose, numpy_stream


@dataclass
class EventLog:
    """Logged rows: slot, CA, context, displayed global content id and click."""

    t: np.ndarray
    ca: np.ndarray
    x: np.ndarray
    content: np.ndarray
    reward: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        self.x = np.asarray(self.x, dtype=float).reshape(n, -1)
        if not all(len(a) == n for a in (self.ca, self.content, self.reward)):
            raise ValueError("event log columns have different lengths")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def d(self) -> int:
        return self.x.shape[1]


def read_event_log(path: str | Path) -> EventLog:
    """Parse a comma-separated log with header ``t,ca,x_1..x_d,content,reward``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty event log")
        header = [h.strip() for h in header]
        d = len(header) - 4
        expected = ["t", "ca"] + [f"x_{k}" for k in range(1, d + 1)] + ["content", "reward"]
        if d < 1 or header != expected:
            raise ValueError(f"{path}:1: bad header {header}; expected t,ca,x_1..x_d,content,reward")
        ts, cas, xs, cs, rs = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            try:
                t, ca = int(row[0]), int(row[1])
                x = [float(v) for v in row[2:2 + d]]
                c, r = int(row[-2]), int(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if t < 1 or ca < 0 or c < 0:
                raise ValueError(f"{path}:{lineno}: t must be >= 1 and ca, content >= 0")
            if any(not 0.0 <= v <= 1.0 for v in x):
                raise ValueError(f"{path}:{lineno}: context outside [0, 1]")
            if r not in (0, 1):
                raise ValueError(f"{path}:{lineno}: reward must be 0 or 1, got {r}")
            ts.append(t)
            cas.append(ca)
            xs.append(x)
            cs.append(c)
            rs.append(r)
    return EventLog(np.array(ts, np.int64), np.array(cas, np.int64), np.array(xs, float).reshape(len(ts), d),
                    np.array(cs, np.int64), np.array(rs, np.int8))


def write_event_log(log: EventLog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ca"] + [f"x_{k}" for k in range(1, log.d + 1)] + ["content", "reward"])
        for k in range(len(log)):
            w.writerow([int(log.t[k]), int(log.ca[k])] + [repr(float(v)) for v in log.x[k]]
                       + [int(log.content[k]), int(log.reward[k])])


def synthetic_log(env: Environment, n_rows: int, seed: int) -> EventLog:
    """Rows spread round-robin over CAs; each shows a uniformly random content
    from the receiving CA's own network and draws the click from its relevance."""
    if n_rows < 1:
        raise ValueError("n_rows must be positive")
    M = env.n_cas
    ca = np.arange(n_rows) % M
    t = np.arange(n_rows) // M + 1
    x = np.empty((n_rows, env.d))
    content = np.empty(n_rows, np.int64)
    reward = np.empty(n_rows, np.int8)
    for i in range(M):
        rows = np.flatnonzero(ca == i)
        xi = env.arrivals.sample(i, len(rows), env.d, numpy_stream(seed, i, Purpose.CONTEXT))
        net = np.asarray(env.networks[i])
        ci = net[numpy_stream(seed, i, Purpose.POLICY).integers(len(net), size=len(rows))]
        pi = env.relevance.matrix(xi, t[rows])[np.arange(len(rows)), ci]
        x[rows] = xi
        content[rows] = ci
        reward[rows] = numpy_stream(seed, i, Purpose.FEEDBACK).random(len(rows)) < pi
    return EventLog(t, ca, x, content, reward)


@dataclass
class ReplayReport:
    rows: int
    matched: int
    clicks: int
    per_ca: dict[int, dict] = field(default_factory=dict)

    @property
    def match_rate(self) -> float:
        return self.matched / self.rows if self.rows else 0.0

    @property
    def ctr(self) -> Optional[float]:
        """Click rate over matched rows; ``None`` when nothing matched."""
        return self.clicks / self.matched if self.matched else None


def replay(log: EventLog, cfg: SimConfig) -> ReplayReport:
    cfg = bind_seed(cfg)
    env = cfg.env
    if log.d != env.d:
        raise ConfigError(f"event log has context dimension {log.d}, environment has {env.d}")
    M = env.n_cas
    if len(log) and (log.ca.min() < 0 or log.ca.max() >= M):
        raise ConfigError(f"event log references CA outside 0..{M - 1}")
    learners = [build_learner(cfg, i) for i in range(M)]
    kept = [0] * M
    seen = [0] * M
    clicks = [0] * M

    for k in range(len(log)):
        i = int(log.ca[k])
        x = log.x[k]
        seen[i] += 1
        li = learners[i]
        t = kept[i] + 1
        cells = [lr.partition.locate(x) for lr in learners]
        dec = li.select(cells[i], t, lambda j: learners[j].report_cell_count(cells[j]), commit=False)
        a = dec.action
        if a.kind is ActionKind.OWN:
            served, pc = env.networks[i][a.index], None
        else:
            j = a.index
            pc = learners[j].cooperate_select(cells[j], kept[j] + 1)
            served = env.networks[j][pc]
        if served != int(log.content[k]):
            continue
        r = int(log.reward[k])
        li.apply_reports(dec)
        li.record_outcome(dec, r)
        if pc is not None:
            learners[a.index].record_cooperation_outcome(pc, cells[a.index], r)
        kept[i] += 1
        clicks[i] += r

    per_ca = {i: {"rows": seen[i], "matched": kept[i],
                  "ctr": clicks[i] / kept[i] if kept[i] else None} for i in range(M)}
    return ReplayReport(len(log), sum(kept), sum(clicks), per_ca)
