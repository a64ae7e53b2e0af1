"""Everything computed from a trace: regret, phase breakdowns, click-through
rates, exploitation accuracy, exploration-count bounds and power-law fits."""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import PHASES, ConfigError, ControlParams, Phase, control_values
from .netsim import SimTrace
from .windowed import windowed_control_values

_CODE = {p: i for i, p in enumerate(PHASES)}
BETA_2 = math.pi**2 / 6.0


@dataclass
class RegretSeries:
    """Cumulative oracle reward, realized net reward and regret per CA, indexed by slot."""

    oracle: dict[int, np.ndarray]
    realized: dict[int, np.ndarray]
    regret: dict[int, np.ndarray]

    def final(self, ca: int) -> float:
        return float(self.regret[ca][-1])

    def average(self, ca: int) -> float:
        """Time-averaged regret R(T)/T."""
        return self.final(ca) / len(self.regret[ca])


def regret_curve(trace: SimTrace, env_hash: Optional[str] = None) -> RegretSeries:
    """Regret per slot: oracle μ* minus (reward - cost).

    Slots with missing feedback still contribute their drawn reward.
    """
    if env_hash is not None and env_hash != trace.env_hash:
        raise ConfigError(f"trace was produced for environment {trace.env_hash}, not {env_hash}")
    c = trace.columns
    oracle, realized, regret = {}, {}, {}
    for i in range(trace.n_cas):
        m = trace.ca_mask(i)
        o = np.cumsum(c["oracle_mu"][m])
        r = np.cumsum(c["reward"][m].astype(float) - c["cost"][m])
        oracle[i], realized[i], regret[i] = o, r, o - r
    return RegretSeries(oracle, realized, regret)


def phase_counts(trace: SimTrace, ca: int, high_type: Optional[bool] = None) -> dict[Phase, int]:
    m = trace.ca_mask(ca)
    if high_type is not None:
        m &= trace["high_type"] == high_type
    counts = np.bincount(trace["phase"][m], minlength=len(PHASES))
    return {p: int(counts[_CODE[p]]) for p in PHASES}


def phase_breakdown(trace: SimTrace, ca: Optional[int] = None) -> dict[int, dict[str, float]]:
    """Percentages of exploit, explore (own + peer) and train slots per CA."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    out = {}
    for i in range(trace.n_cas) if ca is None else [ca]:
        cnt = phase_counts(trace, i)
        total = sum(cnt.values())
        out[i] = {
            "exploit": 100.0 * cnt[Phase.EXPLOIT] / total,
            "explore": 100.0 * (cnt[Phase.EXPLORE_OWN] + cnt[Phase.EXPLORE_PEER]) / total,
            "train": 100.0 * cnt[Phase.TRAIN] / total,
        }
    return out


def ctr(trace: SimTrace, ca: int, high_type_only: bool = False, exploit_only: bool = False) -> Optional[float]:
    m = trace.ca_mask(ca)
    if high_type_only:
        m &= trace["high_type"]
    if exploit_only:
        m &= trace["phase"] == _CODE[Phase.EXPLOIT]
    if not m.any():
        return None
    return float(trace["reward"][m].mean())


def fit_regret_exponent(horizons: Sequence[float], regrets: Sequence[float]) -> float:
    """Least-squares slope of log regret against log horizon."""
    pts = [(h, r) for h, r in zip(horizons, regrets) if r > 0]
    if len(pts) < len(horizons):
        warnings.warn(f"dropped {len(horizons) - len(pts)} nonpositive regret value(s) from the fit")
    if len(pts) < 3:
        raise ValueError("need at least three horizons with positive regret")
    h, r = np.log(np.array(pts, dtype=float)).T
    return float(np.polyfit(h, r, 1)[0])


def exploitation_accuracy(trace: SimTrace, delta: float, ca: Optional[int] = None, t_min: int = 1) -> Optional[float]:
    """Fraction of exploit slots whose action's true net reward is below μ* - delta."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    m = (trace["phase"] == _CODE[Phase.EXPLOIT]) & (trace["t"] >= t_min)
    if ca is not None:
        m &= trace.ca_mask(ca)
    if not m.any():
        return None
    bad = trace["action_mu"][m] < trace["oracle_mu"][m] - delta
    return float(bad.mean())


def confidence_envelope(t: np.ndarray, n_actions: int, M: int, c_max: int, gamma: float, d: int) -> np.ndarray:
    """Per-slot bound 2|K|/t^2 + 2|K| M C_max β_2 / t^(γ/(3γ+d)) on a δ_T-suboptimal exploit."""
    t = np.asarray(t, dtype=float)
    return 2 * n_actions / t**2 + 2 * n_actions * M * c_max * BETA_2 / t ** (gamma / (3 * gamma + d))


def mean_envelope(trace: SimTrace, gamma: float, ca: Optional[int] = None, t_min: int = 1) -> Optional[float]:
    """The envelope averaged over the same exploit slots ``exploitation_accuracy`` counts."""
    m = (trace["phase"] == _CODE[Phase.EXPLOIT]) & (trace["t"] >= t_min)
    if ca is not None:
        m &= trace.ca_mask(ca)
    if not m.any():
        return None
    n_act = np.array([trace.meta[i]["n_actions"] for i in range(trace.n_cas)])[trace["ca"][m]]
    c_max = max(mt.get("c_max", 1) for mt in trace.meta)
    env = confidence_envelope(trace["t"][m], 1, trace.n_cas, c_max, gamma, trace.d) * n_act
    return float(env.mean())


# --- exploration-count bounds -------------------------------------------------


@dataclass(frozen=True)
class BoundViolation:
    ca: int
    instance: int
    cell: tuple[int, ...]
    phase: Phase
    target: int
    count: int
    bound: int


def _bounds(meta: dict, horizon: int, instance: int) -> tuple[int, int, int]:
    params = ControlParams(meta["z"], meta["c_max"], meta["divisor"])
    if meta["kind"] == "discom-w":
        tau = meta["tau_h"]
        if instance == 1:
            h = control_values(min(horizon, 2 * tau), params)
        else:
            h = windowed_control_values(tau - 1, tau, params)  # u = tau_h, the largest windowed value
    else:
        h = control_values(horizon, params)
    return tuple(math.ceil(v) + 1 for v in h)  # type: ignore[return-value]


def exploration_counts(trace: SimTrace, observed_only: bool = True) -> Counter:
    """(ca, instance, cell, phase, target) -> number of explore/train selections.

    With ``observed_only`` only selections whose feedback was seen are counted;
    these are the ones that move the counters.
    """
    c = trace.columns
    keep = c["phase"] != _CODE[Phase.EXPLOIT]
    if observed_only:
        keep &= c["observed"]
    idx = np.flatnonzero(keep)
    keys = zip(
        c["ca"][idx].tolist(), c["instance"][idx].tolist(), map(tuple, c["cell"][idx].tolist()),
        c["phase"][idx].tolist(), c["action_id"][idx].tolist(),
    )
    return Counter(keys)


def exploration_bound_violations(trace: SimTrace) -> list[BoundViolation]:
    """Explore-own, train and explore-peer counts per (CA, instance, cell, target)
    checked against ceil(H(T)) + 1 of the matching control function."""
    out = []
    slot_of = {Phase.EXPLORE_OWN: 0, Phase.TRAIN: 1, Phase.EXPLORE_PEER: 2}
    cache: dict[tuple[int, int], tuple[int, int, int]] = {}
    for (ca, inst, cell, code, target), n in exploration_counts(trace).items():
        meta = trace.meta[ca]
        if meta["kind"] not in ("discom", "discom-w"):
            continue
        key = (ca, inst)
        if key not in cache:
            cache[key] = _bounds(meta, trace.horizon, inst)
        phase = PHASES[code]
        bound = cache[key][slot_of[phase]]
        if n > bound:
            out.append(BoundViolation(ca, inst, cell, phase, target, n, bound))
    return out


def conservation_holds(trace: SimTrace) -> bool:
    return all(sum(phase_counts(trace, i).values()) == trace.horizon for i in range(trace.n_cas))


# --- tables -------------------------------------------------------------------


def write_table(path: str | Path, rows: Iterable[dict], columns: Sequence[str]) -> None:
    """Comma-separated table with a header row; floats use ``repr`` so they round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if row.get(k) is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                        for k in columns])


def read_table(path: str | Path) -> list[dict]:
    def parse(v: str):
        if v == "":
            return None
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
        return v

    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


METRIC_COLUMNS = ("ca", "algorithm", "horizon", "regret", "avg_regret", "ctr", "ctr_high_type",
                  "exploit_pct", "explore_pct", "train_pct", "messages_query", "messages_request",
                  "messages_relay")


def summary_rows(trace: SimTrace) -> list[dict]:
    """One row per CA with the columns in ``METRIC_COLUMNS``."""
    series = regret_curve(trace)
    phases = phase_breakdown(trace)
    c = trace.columns
    n_queries = np.array([len(q) for q in trace.queries])
    rows = []
    for i in range(trace.n_cas):
        m = trace.ca_mask(i)
        peer = c["action_kind"][m] == 1
        rows.append({
            "ca": i,
            "algorithm": trace.meta[i]["kind"],
            "horizon": trace.horizon,
            "regret": series.final(i),
            "avg_regret": series.average(i),
            "ctr": ctr(trace, i),
            "ctr_high_type": ctr(trace, i, high_type_only=True),
            "exploit_pct": phases[i]["exploit"],
            "explore_pct": phases[i]["explore"],
            "train_pct": phases[i]["train"],
            "messages_query": int(n_queries[m].sum()),
            "messages_request": int(peer.sum()),
            "messages_relay": int((peer & c["observed"][m]).sum()),
        })
    return rows
