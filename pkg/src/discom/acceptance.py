"""Acceptance suite: ten end-to-end checks of the simulator and learners.

Every run the suite performs is also screened for the per-cell exploration
bounds and slot conservation; criterion 1 reports the tally.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ExperimentSpec, sim_config_from_dict
from .core import ActionKind, Phase, confidence_radius
from .env import audit_drift, audit_similarity
from .metrics import (
    confidence_envelope,
    conservation_holds,
    exploration_bound_violations,
    fit_regret_exponent,
    phase_breakdown,
    phase_counts,
    regret_curve,
)
from .netsim import SimTrace, run
from .replay import replay, synthetic_log

# Control divisor used throughout; the theoretical thresholds (divisor 1)
# keep every slot exploring at these horizons.
DIVISOR = 20.0
HORIZONS = (1_000, 10_000, 100_000)

CONE_FIELDS = [
    {"type": "holder_cone", "peak": 0.9, "center": [0.1], "L": 1.0, "gamma": 1.0},
    {"type": "holder_cone", "peak": 0.7, "center": [0.5], "L": 1.0, "gamma": 1.0},
    {"type": "holder_cone", "peak": 0.8, "center": [0.9], "L": 1.0, "gamma": 1.0},
    {"type": "holder_cone", "peak": 0.6, "center": [0.35], "L": 1.0, "gamma": 1.0},
]


def cone_config(horizon: int, seed: int, *, divisor: float = DIVISOR, z: Optional[float] = None,
                p_r: float = 1.0, drift: Optional[dict] = None, algorithm: Optional[dict] = None) -> dict:
    """Two CAs with two contents each on four Hölder cones over [0, 1]."""
    env = {"dim": 1, "fields": [dict(f) for f in CONE_FIELDS], "feedback": {"p_r": p_r}}
    if drift is not None:
        env["drift"] = drift
    algo = algorithm or {"kind": "discom", "divisor": divisor, "z": z}
    return {"horizon": horizon, "seed": seed, "env": env,
            "network": {"contents": [[0, 1], [2, 3]]}, "algorithm": algo}


def rotation_config(horizon: int, seed: int, stability: int = 10_000) -> dict:
    fields = [{"type": "sine", "amplitude": 0.3, "frequency": f, "phase": p, "baseline": 0.5}
              for f, p in ((1.0, 0.0), (0.5, 1.0), (1.5, 2.0), (1.0, 3.0))]
    return {"horizon": horizon, "seed": seed,
            "env": {"dim": 2, "fields": fields, "drift": {"type": "rotation", "stability": stability}},
            "network": {"contents": [[0, 1], [2, 3]]},
            "algorithm": {"kind": "discom-w", "divisor": DIVISOR, "stability": stability}}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


@dataclass
class _Screen:
    runs: int = 0
    violations: int = 0
    conservation_failures: int = 0
    examples: list = field(default_factory=list)


class AcceptanceSuite:
    """Runs the criteria; ``seed_scale`` shrinks the seed counts for quick checks."""

    def __init__(self, seed_scale: float = 1.0, log: Callable[[str], None] = lambda s: None) -> None:
        self.seed_scale = seed_scale
        self.log = log
        self.screen = _Screen()
        self._long_runs: dict[int, dict] = {}

    def _n(self, k: int) -> int:
        return max(1, int(round(k * self.seed_scale)))

    def run(self, raw: dict) -> SimTrace:
        trace = run(sim_config_from_dict(raw))
        bad = exploration_bound_violations(trace)
        self.screen.runs += 1
        self.screen.violations += len(bad)
        self.screen.examples.extend(bad[: 3 - len(self.screen.examples)])
        if not conservation_holds(trace):
            self.screen.conservation_failures += 1
        return trace

    # -- criteria ------------------------------------------------------------

    def exploration_bounds(self) -> CriterionResult:
        if self.screen.runs == 0:
            for seed in range(2):
                self.run(cone_config(10_000, seed))
                self.run(cone_config(10_000, seed, p_r=0.5))
                self.run(cone_config(20_000, seed, algorithm={"kind": "discom-w", "divisor": DIVISOR,
                                                             "stability": 2_000}))
        s = self.screen
        ok = s.violations == 0 and s.conservation_failures == 0
        detail = f"{s.runs} runs, {s.violations} bound violations, {s.conservation_failures} conservation failures"
        if s.examples:
            detail += f"; first: {s.examples[0]}"
        return CriterionResult(1, "exploration bounds", ok, detail,
                               {"runs": s.runs, "violations": s.violations})

    def regret_exponent(self, divisor: float = DIVISOR, seeds: Optional[int] = None,
                        horizons: tuple[int, ...] = HORIZONS) -> CriterionResult:
        n = seeds or self._n(20)
        means = []
        for T in horizons:
            finals = []
            for seed in range(n):
                trace = self.run(cone_config(T, seed, divisor=divisor))
                rc = regret_curve(trace)
                finals.append(np.mean([rc.final(i) for i in range(trace.n_cas)]))
                if T == max(horizons) and divisor == DIVISOR:
                    self._long_runs[seed] = _exploit_summary(trace)
            means.append(float(np.mean(finals)))
            self.log(f"  divisor {divisor:g} T={T}: mean regret {means[-1]:.1f}")
        slope = fit_regret_exponent(horizons, means)
        per_slot = [r / T for r, T in zip(means, horizons)]
        decreasing = all(a > b for a, b in zip(per_slot, per_slot[1:]))
        ok = slope <= 0.75 + 0.15 and decreasing
        detail = (f"slope {slope:.3f} (limit 0.90), regret/T "
                  + " > ".join(f"{v:.4f}" for v in per_slot) + ("" if decreasing else " not decreasing"))
        return CriterionResult(2, "regret exponent", ok, detail,
                               {"slope": slope, "regret": means, "per_slot": per_slot})

    def oracle_equivalence(self, seed: int = 0) -> CriterionResult:
        raw = cone_config(50, seed)
        raw["algorithm"]["slicing"] = 2
        cfg = sim_config_from_dict(raw)
        trace = self.run(raw)
        problems, n_exploit = check_against_oracle(trace, cfg.to_dict())
        ok = not problems and n_exploit > 0
        detail = f"{n_exploit} exploit decisions checked, {len(problems)} mismatches"
        if problems:
            detail += f"; first: {problems[0]}"
        return CriterionResult(3, "oracle equivalence", ok, detail, {"exploit": n_exploit, "problems": problems})

    def missing_feedback(self, horizon: int = 10_000) -> CriterionResult:
        n = self._n(20)
        totals = {}
        for p_r in (1.0, 0.5):
            slots = 0
            for seed in range(n):
                trace = self.run(cone_config(horizon, seed, p_r=p_r))
                for i in range(trace.n_cas):
                    slots += sum(v for p, v in phase_counts(trace, i).items() if p is not Phase.EXPLOIT)
            totals[p_r] = slots / n
        ratio = totals[0.5] / totals[1.0]
        ok = abs(ratio - 2.0) <= 0.3
        detail = f"train+explore slots {totals[0.5]:.0f} vs {totals[1.0]:.0f}, ratio {ratio:.3f} (2.0 +/- 0.3)"
        return CriterionResult(4, "missing-feedback scaling", ok, detail, {"ratio": ratio})

    def exploitation_accuracy(self) -> CriterionResult:
        T = max(HORIZONS)
        if not self._long_runs:
            for seed in range(self._n(20)):
                self._long_runs[seed] = _exploit_summary(self.run(cone_config(T, seed)))
        bad = sum(s["bad"] for s in self._long_runs.values())
        n = sum(s["n"] for s in self._long_runs.values())
        env_sum = sum(s["envelope"] for s in self._long_runs.values())
        frac, envelope = bad / n, env_sum / n
        ok = frac <= envelope + 0.02
        detail = (f"delta_T {_delta(T):.4f}: suboptimal fraction {frac:.4f} over {n} exploit slots, "
                  f"envelope {envelope:.4f}")
        return CriterionResult(5, "exploitation accuracy", ok, detail, {"fraction": frac, "envelope": envelope})

    def drift(self, horizon: int = 50_000, stability: int = 10_000) -> CriterionResult:
        n = self._n(10)
        wins = 0
        pairs = []
        flips = {"type": "abrupt_flips", "period": 10_000, "fraction": 0.5}
        for seed in range(n):
            avg = {}
            for algo in ({"kind": "discom", "divisor": DIVISOR},
                         {"kind": "discom-w", "divisor": DIVISOR, "stability": stability}):
                trace = self.run(cone_config(horizon, seed, drift=flips, algorithm=algo))
                rc = regret_curve(trace)
                avg[algo["kind"]] = float(np.mean([rc.average(i) for i in range(trace.n_cas)]))
            pairs.append((avg["discom-w"], avg["discom"]))
            wins += avg["discom-w"] < avg["discom"]
        need = math.ceil(0.8 * n)
        ok = wins >= need
        mw, md = np.mean(pairs, axis=0)
        detail = f"windowed wins {wins}/{n} (need {need}); mean average regret {mw:.4f} vs {md:.4f}"
        return CriterionResult(6, "drift", ok, detail, {"wins": wins, "pairs": pairs})

    def phase_direction(self, horizon: int = 10_000) -> CriterionResult:
        n = self._n(20)
        rows = []
        for z in (0.25, 0.33, 0.5):
            acc = np.zeros(3)
            for seed in range(n):
                br = phase_breakdown(self.run(cone_config(horizon, seed, z=z)))
                acc += np.mean([[b["exploit"], b["explore"], b["train"]] for b in br.values()], axis=0)
            rows.append(acc / n)
        rows_a = np.array(rows)
        ok = bool(np.all(np.diff(rows_a[:, 1]) >= 0) and np.all(np.diff(rows_a[:, 2]) >= 0)
                  and np.all(np.diff(rows_a[:, 0]) <= 0))
        detail = "; ".join(f"z={z}: exploit {r[0]:.2f} explore {r[1]:.2f} train {r[2]:.3f}"
                           for z, r in zip((0.25, 0.33, 0.5), rows))
        return CriterionResult(7, "phase direction", ok, detail, {"rows": rows_a.tolist()})

    def determinism(self) -> CriterionResult:
        from .cli import run_experiment

        raw = cone_config(2_000, 0)
        raw["seeds"] = [0, 1]
        raw["sweep"] = {"p_r": [1.0, 0.5]}
        with tempfile.TemporaryDirectory() as tmp:
            outs = []
            for k in range(2):
                out = Path(tmp) / f"run{k}"
                status = run_experiment(ExperimentSpec.from_dict(raw), out, log=lambda s: None)
                outs.append((out, status))
            files = sorted(p.relative_to(outs[0][0]) for p in outs[0][0].rglob("*") if p.is_file())
            other = sorted(p.relative_to(outs[1][0]) for p in outs[1][0].rglob("*") if p.is_file())
            same = files == other and all(
                filecmp.cmp(outs[0][0] / f, outs[1][0] / f, shallow=False) for f in files)
        ok = same and bool(files) and all(s == 0 for _, s in outs)
        detail = f"{len(files)} files compared, {'identical' if same else 'DIFFERENT'}"
        return CriterionResult(8, "determinism", ok, detail, {"files": len(files)})

    def audits(self, probes: int = 10_000, slack: float = 1e-9) -> CriterionResult:
        rng = np.random.default_rng(0)
        envs = {
            "cones": cone_config(1_000, 0),
            "cones+flips": cone_config(1_000, 0, drift={"type": "abrupt_flips", "period": 100, "fraction": 0.5}),
            "sines+rotation": rotation_config(1_000, 0),
        }
        worst = {}
        for name, raw in envs.items():
            cfg = sim_config_from_dict(raw)
            rel = cfg.env.relevance
            worst[name] = audit_similarity(rel, cfg.env.d, probes, rng)
            if rel.drift.__class__.__name__ == "Rotation":
                worst[name + " drift"] = audit_drift(rel, cfg.env.d, probes, rng, 100_000)
        ok = all(v <= slack for v in worst.values())
        detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
        return CriterionResult(9, "smoothness audits", ok, f"max excess: {detail}", worst)

    def replay_sanity(self, rows: int = 100_000, k: int = 5) -> CriterionResult:
        raw = {"horizon": rows, "seed": 0,
               "env": {"dim": 1, "fields": [{"type": "holder_cone", "peak": 0.3 + 0.1 * c, "center": [c / (k - 1)],
                                             "L": 1.0, "gamma": 1.0} for c in range(k)]},
               "network": {"contents": [list(range(k))]}, "algorithm": {"kind": "uniform"}}
        cfg = sim_config_from_dict(raw)
        report = replay(synthetic_log(cfg.env, rows, seed=1), cfg)
        ok = abs(report.match_rate - 1.0 / k) <= 0.02
        detail = f"match rate {report.match_rate:.4f} over {rows} rows (0.2 +/- 0.02)"
        return CriterionResult(10, "replay sanity", ok, detail, {"match_rate": report.match_rate})

    def run_all(self, only: Optional[set[int]] = None) -> list[CriterionResult]:
        order = [(2, self.regret_exponent), (3, self.oracle_equivalence), (4, self.missing_feedback),
                 (5, self.exploitation_accuracy), (6, self.drift), (7, self.phase_direction),
                 (8, self.determinism), (9, self.audits), (10, self.replay_sanity), (1, self.exploration_bounds)]
        results = []
        for number, fn in order:
            if only is None or number in only:
                results.append(fn())
                self.log(results[-1].line())
        return sorted(results, key=lambda r: r.number)


def _delta(T: int) -> float:
    return confidence_radius(T, 1.0, 1.0, 1)


def _exploit_summary(trace: SimTrace) -> dict:
    """Counts behind the exploitation-accuracy check for one long run."""
    T = trace.horizon
    m = (trace["phase"] == Phase.EXPLOIT.code) & (trace["t"] >= T // 2)
    bad = int(np.sum(trace["action_mu"][m] < trace["oracle_mu"][m] - _delta(T)))
    n_act = np.array([trace.meta[i]["n_actions"] for i in range(trace.n_cas)])[trace["ca"][m]]
    c_max = max(mt["c_max"] for mt in trace.meta)
    env = confidence_envelope(trace["t"][m], 1, trace.n_cas, c_max, 1.0, trace.d) * n_act
    return {"bad": bad, "n": int(m.sum()), "envelope": float(env.sum())}


# --- independent recomputation of a DISCOM trace --------------------------------


def check_against_oracle(trace: SimTrace, cfg: dict) -> tuple[list[str], int]:
    """Rebuild every learner's sample sets from the trace and re-derive each decision.

    Works for plain DISCOM networks with no forced exploits. Returns the list of
    mismatches and the number of exploit decisions checked.
    """
    M = trace.n_cas
    nets = cfg["network"]["contents"]
    own_costs = cfg["network"].get("own_costs") or [[0.0] * len(n) for n in nets]
    peer_costs = cfg["network"].get("peer_costs") or [[0.0] * M for _ in range(M)]
    meta = trace.meta
    # rewards[i][cell][("own", c) | ("peer", j)] -> list of observed rewards
    rewards = [defaultdict(lambda: defaultdict(list)) for _ in range(M)]
    trained = [defaultdict(lambda: defaultdict(int)) for _ in range(M)]
    problems: list[str] = []
    n_exploit = 0

    def H(i: int, t: int) -> tuple[float, float, float]:
        mt = meta[i]
        h = t ** mt["z"] * math.log(t) / mt["divisor"]
        return h, mt["c_max"] * h, h

    def cell_of(i: int, x) -> tuple:
        m = meta[i]["m"]
        return tuple(min(int(v * m), m - 1) for v in x)

    def n_p(i: int, cell) -> int:
        return sum(len(v) for v in rewards[i][cell].values())

    def mean(v: list) -> float:
        return sum(v) / len(v) if v else 0.0

    for rec in trace.records():
        i, t = rec.ca, rec.t
        where = f"t={t} ca={i}"
        cell = cell_of(i, rec.context)
        if cell != rec.cell:
            problems.append(f"{where}: cell {rec.cell} != {cell}")
        h1, h2, h3 = H(i, t)
        R, tr = rewards[i][cell], trained[i][cell]
        peers = [j for j in range(M) if j != i]
        ue = [c for c in range(len(nets[i])) if len(R[("own", c)]) <= h1]
        a = rec.action
        if ue:
            expected, allowed = Phase.EXPLORE_OWN, {("own", c) for c in ue}
        else:
            ct = [j for j in peers if tr[j] <= h2]
            reports = [(j, n_p(j, cell_of(j, rec.context))) for j in ct]
            if list(rec.queries) != reports:
                problems.append(f"{where}: queries {rec.queries} != {reports}")
            for j, nj in reports:
                tr[j] = nj - len(R[("peer", j)])
            ut = [j for j in ct if tr[j] <= h2]
            ue_peer = [j for j in peers if len(R[("peer", j)]) <= h3]
            if ut:
                expected, allowed = Phase.TRAIN, {("peer", j) for j in ut}
            elif ue_peer:
                expected, allowed = Phase.EXPLORE_PEER, {("peer", j) for j in ue_peer}
            else:
                expected = Phase.EXPLOIT
                values = {("own", c): mean(R[("own", c)]) - own_costs[i][c] for c in range(len(nets[i]))}
                values.update({("peer", j): mean(R[("peer", j)]) - peer_costs[i][j] for j in peers})
                best = max(values.values())
                allowed = {k for k, v in values.items() if v >= best - 1e-12}
                n_exploit += 1
        key = ("peer" if a.kind is ActionKind.PEER else "own", a.index)
        if rec.phase is not expected:
            problems.append(f"{where}: phase {rec.phase.value}, oracle says {expected.value}")
        elif key not in allowed:
            problems.append(f"{where}: action {key} not in {sorted(allowed)}")

        r = rec.reward if rec.observed else None
        if a.kind is ActionKind.PEER:
            j = a.index
            cj = cell_of(j, rec.context)
            Rj = rewards[j][cj]
            hj = H(j, t)[0]
            ue_j = [c for c in range(len(nets[j])) if len(Rj[("own", c)]) <= hj]
            if ue_j:
                ok_j = rec.peer_content in ue_j
            else:
                means = [mean(Rj[("own", c)]) for c in range(len(nets[j]))]
                ok_j = means[rec.peer_content] >= max(means) - 1e-12
            if not ok_j:
                problems.append(f"{where}: peer {j} served content {rec.peer_content} out of rule")
            if r is not None:
                Rj[("own", rec.peer_content)].append(r)
        if r is not None:
            if rec.phase is Phase.TRAIN:
                tr[a.index] += 1
            else:
                R[key].append(r)

    # final states must match the oracle's sets
    for i, state in enumerate(trace.final_states()):
        for cell, st in state.items():
            R = rewards[i][cell]
            if st["n"] != n_p(i, cell):
                problems.append(f"final ca={i} cell={cell}: N_p {st['n']} != {n_p(i, cell)}")
            for c in range(len(nets[i])):
                v = R[("own", c)]
                if st["own_n"][c] != len(v) or abs(st["own_mean"][c] - mean(v)) > 1e-12:
                    problems.append(f"final ca={i} cell={cell} own {c}: state differs from oracle")
            for j in range(M):
                if j == i:
                    continue
                v = R[("peer", j)]
                if st["peer_n"][j] != len(v) or abs(st["peer_mean"][j] - mean(v)) > 1e-12:
                    problems.append(f"final ca={i} cell={cell} peer {j}: state differs from oracle")
                if st["peer_tr"][j] != trained[i][cell][j]:
                    problems.append(f"final ca={i} cell={cell} peer {j}: training count differs")
    return problems, n_exploit
