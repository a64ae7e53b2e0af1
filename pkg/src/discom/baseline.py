"""Comparison policies: Hybrid-ε (per-cell sample means with decaying uniform
exploration) and a uniform-random policy used for replay sanity checks."""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .core import Action, ActionKind, CellId, ConfigError, Partition, Phase
from .learner import CellStats, Decision, _fold


def epsilon(t: int, c_eps: float) -> float:
    """Exploration probability min(1, c_eps / t)."""
    return min(1.0, c_eps / t)


class HybridEps:
    """ε-greedy over per-cell sample means of net reward.

    When called by a peer it runs the same ε-greedy rule over its own contents
    using raw sample means.
    """

    kind = "hybrid-eps"

    def __init__(
        self,
        ca: int,
        n_own: int,
        n_cas: int,
        partition: Partition,
        own_costs: Sequence[float],
        peer_costs: Sequence[float],
        rng: random.Random,
        c_eps: float = 1.0,
    ) -> None:
        if c_eps <= 0:
            raise ConfigError(f"algorithm.c_eps must be positive, got {c_eps}")
        self.ca = ca
        self.n_own = n_own
        self.n_cas = n_cas
        self.partition = partition
        self.own_costs = list(own_costs)
        self.peer_costs = list(peer_costs)
        self.peers = [j for j in range(n_cas) if j != ca]
        self.actions = [Action.own(c) for c in range(n_own)] + [Action.peer(j) for j in self.peers]
        self.rng = rng
        self.c_eps = c_eps
        self.cells: dict[CellId, CellStats] = {}

    def _stats(self, cell: CellId) -> CellStats:
        st = self.cells.get(cell)
        if st is None:
            if not self.partition.contains(cell):
                raise ConfigError(f"cell {cell} outside the partition")
            st = self.cells[cell] = CellStats(self.n_own, self.n_cas)
        return st

    def _greedy_set(self, st: CellStats) -> list[Action]:
        values = [st.own_mean[c] - self.own_costs[c] for c in range(self.n_own)]
        values += [st.peer_mean[j] - self.peer_costs[j] for j in self.peers]
        best = max(values)
        return [a for a, v in zip(self.actions, values) if v == best]

    def action_probabilities(self, cell: CellId, t: int) -> dict[Action, float]:
        eps = epsilon(t, self.c_eps)
        greedy = self._greedy_set(self._stats(cell))
        probs = {a: eps / len(self.actions) for a in self.actions}
        for a in greedy:
            probs[a] += (1.0 - eps) / len(greedy)
        return probs

    def select(self, cell: CellId, t: int, report=None, *, force_exploit: bool = False, commit: bool = True) -> Decision:
        st = self._stats(cell)
        if not force_exploit and self.rng.random() < epsilon(t, self.c_eps):
            a = self.rng.choice(self.actions)
            return Decision(a, Phase.EXPLORE_PEER if a.kind is ActionKind.PEER else Phase.EXPLORE_OWN, cell)
        return Decision(self.rng.choice(self._greedy_set(st)), Phase.EXPLOIT, cell)

    def apply_reports(self, decision: Decision) -> None:
        pass

    def record_outcome(self, decision: Decision, reward: Optional[int]) -> None:
        if reward is None:
            return
        st = self._stats(decision.cell)
        a = decision.action
        if a.kind is ActionKind.OWN:
            st.own_mean[a.index] = _fold(st.own_mean[a.index], st.own_n[a.index], reward)
            st.own_n[a.index] += 1
        else:
            st.peer_mean[a.index] = _fold(st.peer_mean[a.index], st.peer_n[a.index], reward)
            st.peer_n[a.index] += 1
        st.n += 1

    def cooperate_select(self, cell: CellId, t: int) -> int:
        st = self._stats(cell)
        if self.rng.random() < epsilon(t, self.c_eps):
            return self.rng.randrange(self.n_own)
        best = max(st.own_mean)
        return self.rng.choice([c for c in range(self.n_own) if st.own_mean[c] == best])

    def record_cooperation_outcome(self, content: int, cell: CellId, reward: Optional[int]) -> None:
        if reward is None:
            return
        st = self._stats(cell)
        st.own_mean[content] = _fold(st.own_mean[content], st.own_n[content], reward)
        st.own_n[content] += 1
        st.n += 1

    def report_cell_count(self, cell: CellId) -> int:
        st = self.cells.get(cell)
        return 0 if st is None else st.n

    def state_dict(self) -> dict:
        return {cell: self.cells[cell].as_dict() for cell in sorted(self.cells)}


class UniformRandom:
    """Picks every action uniformly at random and never learns."""

    kind = "uniform"

    def __init__(self, ca: int, n_own: int, n_cas: int, partition: Partition, rng: random.Random) -> None:
        self.ca = ca
        self.n_own = n_own
        self.partition = partition
        self.actions = [Action.own(c) for c in range(n_own)] + [Action.peer(j) for j in range(n_cas) if j != ca]
        self.rng = rng

    def select(self, cell: CellId, t: int, report=None, *, force_exploit: bool = False, commit: bool = True) -> Decision:
        a = self.rng.choice(self.actions)
        return Decision(a, Phase.EXPLORE_PEER if a.kind is ActionKind.PEER else Phase.EXPLORE_OWN, cell)

    def apply_reports(self, decision: Decision) -> None:
        pass

    def record_outcome(self, decision: Decision, reward: Optional[int]) -> None:
        pass

    def cooperate_select(self, cell: CellId, t: int) -> int:
        return self.rng.randrange(self.n_own)

    def record_cooperation_outcome(self, content: int, cell: CellId, reward: Optional[int]) -> None:
        pass

    def report_cell_count(self, cell: CellId) -> int:
        return 0

    def state_dict(self) -> dict:
        return {}
