"""Synchronous multi-CA simulation loop and the replayable trace it produces.

Within a slot CAs act in ascending index order. A peer serving a request
uses its state as of that moment, and the outcome is folded into both the
requester and the server immediately.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, NamedTuple, Optional

import numpy as np

from .baseline import HybridEps, UniformRandom
from .config import AlgorithmSpec, SimConfig, config_hash
from .core import Action, ActionKind, ConfigError, ControlParams, PHASES, Partition, Phase
from .env import AbruptFlips
from .learner import Decision, DiscomLearner
from .rng import Purpose, numpy_stream, policy_stream
from .windowed import DiscomW

__all__ = ["SimConfig", "AlgorithmSpec", "SimTrace", "SlotRecord", "run", "build_learner", "replay_states"]

_PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}
_OWN = ActionKind.OWN


class SlotRecord(NamedTuple):
    t: int
    ca: int
    context: tuple[float, ...]
    cell: tuple[int, ...]
    phase: Phase
    action: Action
    served: int
    peer_content: int  # index in the peer's network, -1 for own actions
    observed: bool
    reward: int
    cost: float
    oracle_action: Action
    oracle_mu: float
    action_mu: float
    high_type: bool
    instance: int  # selecting DISCOM-W instance, 0 otherwise
    queries: tuple[tuple[int, int], ...]

    @property
    def requests(self) -> int:
        return int(self.action.kind is ActionKind.PEER)

    @property
    def relays(self) -> int:
        return int(self.action.kind is ActionKind.PEER and self.observed)


@dataclass
class SimTrace:
    """Columnar record of a run, ordered by (t, ca); arrays have length M*T."""

    config_hash: str
    env_hash: str
    n_cas: int
    horizon: int
    d: int
    columns: dict[str, np.ndarray]
    queries: list[tuple[tuple[int, int], ...]]
    meta: list[dict]
    learners: list[Any] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def record(self, k: int) -> SlotRecord:
        c = self.columns
        return SlotRecord(
            t=int(c["t"][k]),
            ca=int(c["ca"][k]),
            context=tuple(float(v) for v in c["x"][k]),
            cell=tuple(int(v) for v in c["cell"][k]),
            phase=PHASES[int(c["phase"][k])],
            action=Action(ActionKind(int(c["action_kind"][k])), int(c["action_id"][k])),
            served=int(c["served"][k]),
            peer_content=int(c["peer_content"][k]),
            observed=bool(c["observed"][k]),
            reward=int(c["reward"][k]),
            cost=float(c["cost"][k]),
            oracle_action=Action(ActionKind(int(c["oracle_kind"][k])), int(c["oracle_id"][k])),
            oracle_mu=float(c["oracle_mu"][k]),
            action_mu=float(c["action_mu"][k]),
            high_type=bool(c["high_type"][k]),
            instance=int(c["instance"][k]),
            queries=self.queries[k],
        )

    def records(self) -> Iterator[SlotRecord]:
        return (self.record(k) for k in range(len(self)))

    def ca_mask(self, ca: int) -> np.ndarray:
        return self.columns["ca"] == ca

    def final_states(self) -> list[dict]:
        return [lr.state_dict() for lr in self.learners]


# --- learners ---------------------------------------------------------------------


def learner_meta(cfg: SimConfig, ca: int) -> dict:
    spec = cfg.algorithms[ca]
    meta: dict = {"kind": spec.kind, "m": cfg.slicing_for(spec), "n_actions": len(cfg.env.actions(ca))}
    if spec.kind in ("discom", "discom-w"):
        meta.update(z=cfg.z_for(spec), divisor=spec.divisor, c_max=cfg.env.c_max)
    if spec.kind == "discom-w":
        meta["tau_h"] = cfg.tau_for(spec)
    return meta


def build_learner(cfg: SimConfig, ca: int, rng=None):
    """Fresh learner for CA ``ca`` as configured; ``rng`` defaults to the CA's policy stream."""
    env = cfg.env
    spec = cfg.algorithms[ca]
    if spec.c_max is not None and spec.c_max != env.c_max:
        raise ConfigError(f"algorithm.c_max={spec.c_max} but the largest content network has {env.c_max} contents")
    rng = rng if rng is not None else policy_stream(cfg.seed, ca)
    partition = Partition(env.d, cfg.slicing_for(spec))
    n_own, M = len(env.networks[ca]), env.n_cas
    own_costs, peer_costs = env.costs.own[ca], env.costs.peer[ca]
    if spec.kind == "hybrid-eps":
        return HybridEps(ca, n_own, M, partition, own_costs, peer_costs, rng, spec.c_eps)
    if spec.kind == "uniform":
        return UniformRandom(ca, n_own, M, partition, rng)
    control = ControlParams(cfg.z_for(spec), env.c_max, spec.divisor)
    if spec.kind == "discom-w":
        return DiscomW(ca, n_own, M, partition, control, own_costs, peer_costs, rng, cfg.tau_for(spec))
    return DiscomLearner(ca, n_own, M, partition, control, own_costs, peer_costs, rng)


def bind_seed(cfg: SimConfig) -> SimConfig:
    """Fill in seed-dependent environment pieces (flip subsets) from the master seed."""
    drift = cfg.env.relevance.drift
    if isinstance(drift, AbruptFlips) and drift.seed is None:
        rel = dataclasses.replace(cfg.env.relevance, drift=dataclasses.replace(drift, seed=cfg.seed))
        return cfg.replace(env=dataclasses.replace(cfg.env, relevance=rel))
    return cfg


# --- the loop -------------------------------------------------------------------


def run(cfg: SimConfig) -> SimTrace:
    cfg = bind_seed(cfg)
    env = cfg.env
    M, T, seed = env.n_cas, cfg.horizon, cfg.seed
    learners = [build_learner(cfg, i) for i in range(M)]
    begin = [lr.begin_slot for lr in learners if hasattr(lr, "begin_slot")]

    ts = np.arange(1, T + 1)
    xs, cells, rewards, observed, high, mus, oracle = [], [], [], [], [], [], []
    by_m: dict[int, Partition] = {lr.partition.m: lr.partition for lr in learners}
    for i in range(M):
        x = env.arrivals.sample(i, T, env.d, numpy_stream(seed, i, Purpose.CONTEXT))
        pi = env.relevance.matrix(x, ts)
        mu = env.net_reward_matrix(i, pi)
        u_fb = numpy_stream(seed, i, Purpose.FEEDBACK).random(T)
        u_obs = numpy_stream(seed, i, Purpose.OBSERVE).random(T)
        u_type = numpy_stream(seed, i, Purpose.USER_TYPE).random(T)
        xs.append(x)
        located = {m: p.locate_many(x) for m, p in by_m.items()}
        cells.append([located[lr.partition.m] for lr in learners])
        rewards.append((u_fb[:, None] < pi).astype(np.int8).tolist())
        observed.append((u_obs < env.feedback.p_r).tolist())
        high.append((u_type < cfg.high_type_fraction).tolist())
        mus.append(mu)
        oracle.append(np.argmax(mu, axis=1))

    nets = env.networks
    own_costs, peer_costs = env.costs.own, env.costs.peer
    # column of each action in the per-CA net-reward matrix
    peer_col = [{j: len(nets[i]) + k for k, j in enumerate(j for j in range(M) if j != i)} for i in range(M)]

    n = M * T
    col_phase = np.empty(n, np.int8)
    col_kind = np.empty(n, np.int8)
    col_id = np.empty(n, np.int32)
    col_served = np.empty(n, np.int32)
    col_pc = np.empty(n, np.int32)
    col_obs = np.empty(n, np.bool_)
    col_rew = np.empty(n, np.int8)
    col_cost = np.empty(n, np.float64)
    col_acol = np.empty(n, np.int32)
    col_inst = np.zeros(n, np.int32)
    col_high = np.empty(n, np.bool_)
    queries: list = [()] * n

    k = 0
    for t in range(1, T + 1):
        s = t - 1
        for b in begin:
            b(t)
        for i in range(M):
            li = learners[i]
            cells_i = cells[i]
            cell = cells_i[i][s]
            hi = high[i][s]
            dec: Decision = li.select(
                cell, t, lambda j: learners[j].report_cell_count(cells_i[j][s]), force_exploit=hi
            )
            a = dec.action
            r_row = rewards[i][s]
            obs = observed[i][s]
            if a.kind is _OWN:
                served = nets[i][a.index]
                r = r_row[served]
                li.record_outcome(dec, r if obs else None)
                col_cost[k] = own_costs[i][a.index]
                col_acol[k] = a.index
                col_pc[k] = -1
            else:
                j = a.index
                lj = learners[j]
                cj = cells_i[j][s]
                pc = lj.cooperate_select(cj, t)
                served = nets[j][pc]
                r = r_row[served]
                li.record_outcome(dec, r if obs else None)
                lj.record_cooperation_outcome(pc, cj, r if obs else None)
                col_cost[k] = peer_costs[i][j]
                col_acol[k] = peer_col[i][j]
                col_pc[k] = pc
            col_phase[k] = _PHASE_INDEX[dec.phase]
            col_kind[k] = a.kind
            col_id[k] = a.index
            col_served[k] = served
            col_obs[k] = obs
            col_rew[k] = r
            col_high[k] = hi
            if dec.reports:
                queries[k] = dec.reports
            inst = getattr(li, "selecting_instance", 0)
            if inst:
                col_inst[k] = inst
            k += 1

    ca_col = np.tile(np.arange(M, dtype=np.int32), T)
    t_col = np.repeat(ts.astype(np.int64), M)
    slot = t_col - 1
    x_col = np.empty((n, env.d))
    cell_col = np.empty((n, env.d), np.int32)
    oracle_mu = np.empty(n)
    oracle_kind = np.empty(n, np.int8)
    oracle_id = np.empty(n, np.int32)
    action_mu = np.empty(n)
    for i in range(M):
        mask = ca_col == i
        x_col[mask] = xs[i]
        cell_col[mask] = np.asarray(cells[i][i], dtype=np.int32).reshape(T, env.d)
        oidx = oracle[i]
        oracle_mu[mask] = mus[i][np.arange(T), oidx]
        actions = env.actions(i)
        oracle_kind[mask] = [actions[a].kind for a in oidx]
        oracle_id[mask] = [actions[a].index for a in oidx]
        action_mu[mask] = mus[i][slot[mask], col_acol[mask]]

    columns = {
        "t": t_col, "ca": ca_col, "x": x_col, "cell": cell_col, "phase": col_phase,
        "action_kind": col_kind, "action_id": col_id, "served": col_served, "peer_content": col_pc,
        "observed": col_obs, "reward": col_rew, "cost": col_cost, "oracle_kind": oracle_kind,
        "oracle_id": oracle_id, "oracle_mu": oracle_mu, "action_mu": action_mu, "high_type": col_high,
        "instance": col_inst,
    }
    d = cfg.to_dict()
    env_hash = config_hash({"env": d["env"], "network": d["network"]})
    return SimTrace(config_hash(d), env_hash, M, T, env.d, columns, queries,
                    [learner_meta(cfg, i) for i in range(M)], learners)


# --- replay of a trace through the update rules ---------------------------------


def replay_states(trace: SimTrace, cfg: SimConfig) -> list[dict]:
    """Re-apply every record to fresh learners; returns their final state dicts."""
    cfg = bind_seed(cfg)
    env = cfg.env
    learners = [build_learner(cfg, i) for i in range(env.n_cas)]
    begin = [lr.begin_slot for lr in learners if hasattr(lr, "begin_slot")]
    last_t = 0
    for rec in trace.records():
        if rec.t != last_t:
            for b in begin:
                b(rec.t)
            last_t = rec.t
        li = learners[rec.ca]
        dec = Decision(rec.action, rec.phase, li.partition.locate(rec.context), rec.queries)
        li.apply_reports(dec)
        reward = rec.reward if rec.observed else None
        li.record_outcome(dec, reward)
        if rec.action.kind is ActionKind.PEER:
            lj = learners[rec.action.index]
            lj.record_cooperation_outcome(rec.peer_content, lj.partition.locate(rec.context), reward)
    return [lr.state_dict() for lr in learners]


# --- export ---------------------------------------------------------------------

TRACE_FIELDS = (
    "t", "ca", "phase", "action_kind", "action_id", "served", "observed", "reward", "cost",
    "oracle_action", "oracle_mu", "x", "cell", "peer_content", "action_mu", "high_type", "instance", "queries",
)


def record_to_json(rec: SlotRecord) -> dict:
    return {
        "t": rec.t,
        "ca": rec.ca,
        "phase": rec.phase.value,
        "action_kind": "peer" if rec.action.kind is ActionKind.PEER else "own",
        "action_id": rec.action.index,
        "served": rec.served,
        "observed": rec.observed,
        "reward": rec.reward,
        "cost": rec.cost,
        "oracle_action": rec.oracle_action.label(),
        "oracle_mu": rec.oracle_mu,
        "x": list(rec.context),
        "cell": list(rec.cell),
        "peer_content": rec.peer_content,
        "action_mu": rec.action_mu,
        "high_type": rec.high_type,
        "instance": rec.instance,
        "queries": {str(j): n for j, n in rec.queries},
    }


def record_from_json(d: dict) -> SlotRecord:
    kind = ActionKind.PEER if d["action_kind"] == "peer" else ActionKind.OWN
    return SlotRecord(
        t=int(d["t"]), ca=int(d["ca"]), context=tuple(d["x"]), cell=tuple(d["cell"]),
        phase=Phase(d["phase"]), action=Action(kind, int(d["action_id"])), served=int(d["served"]),
        peer_content=int(d["peer_content"]), observed=bool(d["observed"]), reward=int(d["reward"]),
        cost=float(d["cost"]), oracle_action=Action.parse(d["oracle_action"]), oracle_mu=float(d["oracle_mu"]),
        action_mu=float(d["action_mu"]), high_type=bool(d["high_type"]), instance=int(d["instance"]),
        queries=tuple((int(j), int(n)) for j, n in d["queries"].items()),
    )


def write_trace(trace: SimTrace, path: str | Path) -> None:
    """One JSON object per line with the fields in ``TRACE_FIELDS``."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace.records():
            fh.write(json.dumps(record_to_json(rec), separators=(",", ":")))
            fh.write("\n")


def read_trace(path: str | Path) -> list[SlotRecord]:
    with open(path, encoding="utf-8") as fh:
        return [record_from_json(json.loads(line)) for line in fh if line.strip()]
