"""One CA's DISCOM learner: per-cell counters, sample means, phase selection,
cooperative content selection and the update rules.

State mutates only through :meth:`DiscomLearner.select` (counter refresh
after a query exchange, unless ``commit=False``), :meth:`record_outcome` and
:meth:`record_cooperation_outcome`.
"""

from __future__ import annotations

import random
from typing import Callable, NamedTuple, Optional, Sequence

from .core import Action, ActionKind, CellId, ConfigError, ControlParams, Partition, Phase, control_values

Thresholds = Callable[[int], "tuple[float, float, float]"]

_EXPLORE_OWN = Phase.EXPLORE_OWN
_EXPLORE_PEER = Phase.EXPLORE_PEER
_TRAIN = Phase.TRAIN
_EXPLOIT = Phase.EXPLOIT
_OWN = ActionKind.OWN


class Decision(NamedTuple):
    action: Action
    phase: Phase
    cell: CellId
    # (peer, reported N^j_p) pairs from this slot's counter-query exchange
    reports: tuple[tuple[int, int], ...] = ()


class CellStats:
    """Counters and sample means of one learner in one cell.

    Peer-indexed lists have one slot per CA; the learner's own slot stays unused.
    """

    __slots__ = ("n", "own_n", "own_mean", "peer_n", "peer_mean", "peer_tr")

    def __init__(self, n_own: int, n_cas: int) -> None:
        self.n = 0
        self.own_n = [0] * n_own
        self.own_mean = [0.0] * n_own
        self.peer_n = [0] * n_cas
        self.peer_mean = [0.0] * n_cas
        self.peer_tr = [0] * n_cas

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "own_n": list(self.own_n),
            "own_mean": list(self.own_mean),
            "peer_n": list(self.peer_n),
            "peer_mean": list(self.peer_mean),
            "peer_tr": list(self.peer_tr),
        }


def _fold(mean: float, n: int, r: int) -> float:
    return (mean * n + r) / (n + 1)


class DiscomLearner:
    """DISCOM state and decision rules for CA ``ca``.

    ``own_costs[k]`` is the cost of the k-th own content, ``peer_costs[j]`` the
    cost of calling CA j. ``thresholds`` maps a slot to (H1, H2, H3); it
    defaults to the plain control functions of ``control``.
    """

    kind = "discom"

    def __init__(
        self,
        ca: int,
        n_own: int,
        n_cas: int,
        partition: Partition,
        control: ControlParams,
        own_costs: Sequence[float],
        peer_costs: Sequence[float],
        rng: random.Random,
        thresholds: Optional[Thresholds] = None,
    ) -> None:
        if n_own < 1:
            raise ConfigError(f"CA {ca} needs at least one own content")
        if len(own_costs) != n_own or len(peer_costs) != n_cas:
            raise ConfigError(f"cost vectors for CA {ca} have the wrong length")
        self.ca = ca
        self.n_own = n_own
        self.n_cas = n_cas
        self.partition = partition
        self.control = control
        self.own_costs = list(own_costs)
        self.peer_costs = list(peer_costs)
        self.peers = [j for j in range(n_cas) if j != ca]
        self.rng = rng
        self.thresholds: Thresholds = thresholds or (lambda t: control_values(t, control))
        self.cells: dict[CellId, CellStats] = {}
        self._own_range = range(n_own)
        self._h_slot = 0
        self._h = (0.0, 0.0, 0.0)

    # -- helpers ------------------------------------------------------------

    def _stats(self, cell: CellId) -> CellStats:
        st = self.cells.get(cell)
        if st is None:
            if not self.partition.contains(cell):
                raise ConfigError(f"cell {cell} outside the partition (d={self.partition.d}, m={self.partition.m})")
            st = self.cells[cell] = CellStats(self.n_own, self.n_cas)
        return st

    def _controls(self, t: int) -> tuple[float, float, float]:
        if t != self._h_slot:
            self._h = self.thresholds(t)
            self._h_slot = t
        return self._h

    def _pick(self, items: list):
        return items[0] if len(items) == 1 else self.rng.choice(items)

    def estimated_net_rewards(self, cell: CellId) -> dict[Action, float]:
        st = self._stats(cell)
        est = {Action.own(c): st.own_mean[c] - self.own_costs[c] for c in self._own_range}
        for j in self.peers:
            est[Action.peer(j)] = st.peer_mean[j] - self.peer_costs[j]
        return est

    # -- maximisation part --------------------------------------------------

    def training_candidates(self, cell: CellId, t: int) -> list[int]:
        """Peers whose stored training estimate is at most H2(t); empty while own content is under-explored."""
        st = self._stats(cell)
        h1, h2, _ = self._controls(t)
        if any(n <= h1 for n in st.own_n):
            return []
        return [j for j in self.peers if st.peer_tr[j] <= h2]

    def select(
        self,
        cell: CellId,
        t: int,
        report: Optional[Callable[[int], int]] = None,
        *,
        force_exploit: bool = False,
        commit: bool = True,
    ) -> Decision:
        """Choose phase and action for this CA's user in ``cell`` at slot ``t``.

        ``report(j)`` returns peer j's N_p for this cell; it is called only for
        training candidates. With ``commit=False`` the refreshed training
        estimates are not written back (see :meth:`apply_reports`).
        """
        st = self._stats(cell)
        rng_pick = self._pick
        if not force_exploit:
            h1, h2, h3 = self._controls(t)
            own_n = st.own_n
            ue = [c for c in self._own_range if own_n[c] <= h1]
            if ue:
                return Decision(Action(_OWN, rng_pick(ue)), _EXPLORE_OWN, cell)
            tr = st.peer_tr
            peer_n = st.peer_n
            ct = [j for j in self.peers if tr[j] <= h2]
            reports: tuple[tuple[int, int], ...] = ()
            if ct:
                if report is None:
                    raise ValueError(f"CA {self.ca} needs counter reports from peers {ct}")
                reports = tuple((j, int(report(j))) for j in ct)
                ut = []
                for j, n_j in reports:
                    refreshed = n_j - peer_n[j]
                    if commit:
                        tr[j] = refreshed
                    if refreshed <= h2:
                        ut.append(j)
                if ut:
                    return Decision(Action(ActionKind.PEER, rng_pick(ut)), _TRAIN, cell, reports)
            ue_peer = [j for j in self.peers if peer_n[j] <= h3]
            if ue_peer:
                return Decision(Action(ActionKind.PEER, rng_pick(ue_peer)), _EXPLORE_PEER, cell, reports)
        else:
            reports = ()
        best = -2.0
        ties: list[Action] = []
        own_mean, own_costs = st.own_mean, self.own_costs
        for c in self._own_range:
            v = own_mean[c] - own_costs[c]
            if v > best:
                best, ties = v, [Action(_OWN, c)]
            elif v == best:
                ties.append(Action(_OWN, c))
        peer_mean, peer_costs = st.peer_mean, self.peer_costs
        for j in self.peers:
            v = peer_mean[j] - peer_costs[j]
            if v > best:
                best, ties = v, [Action(ActionKind.PEER, j)]
            elif v == best:
                ties.append(Action(ActionKind.PEER, j))
        return Decision(rng_pick(ties), _EXPLOIT, cell, reports)

    def apply_reports(self, decision: Decision) -> None:
        """Write back the training-estimate refresh carried by ``decision``."""
        st = self._stats(decision.cell)
        for j, n_j in decision.reports:
            st.peer_tr[j] = n_j - st.peer_n[j]

    def record_outcome(self, decision: Decision, reward: Optional[int]) -> None:
        """Apply the feedback for this CA's own user; ``None`` means no feedback."""
        if reward is None:
            return
        st = self._stats(decision.cell)
        a = decision.action
        if decision.phase is _TRAIN:
            st.peer_tr[a.index] += 1
            return
        if a.kind is _OWN:
            n = st.own_n[a.index]
            st.own_mean[a.index] = _fold(st.own_mean[a.index], n, reward)
            st.own_n[a.index] = n + 1
        else:
            n = st.peer_n[a.index]
            st.peer_mean[a.index] = _fold(st.peer_mean[a.index], n, reward)
            st.peer_n[a.index] = n + 1
        st.n += 1

    # -- cooperation part ---------------------------------------------------

    def cooperate_select(self, cell: CellId, t: int) -> int:
        """Own content to show a requesting peer's user in ``cell``.

        Under-explored content first; otherwise the highest raw sample mean (costs are not subtracted).
        """
        st = self._stats(cell)
        h1 = self._controls(t)[0]
        own_n = st.own_n
        ue = [c for c in self._own_range if own_n[c] <= h1]
        if ue:
            return self._pick(ue)
        means = st.own_mean
        best = max(means)
        return self._pick([c for c in self._own_range if means[c] == best])

    def record_cooperation_outcome(self, content: int, cell: CellId, reward: Optional[int]) -> None:
        if reward is None:
            return
        st = self._stats(cell)
        n = st.own_n[content]
        st.own_mean[content] = _fold(st.own_mean[content], n, reward)
        st.own_n[content] = n + 1
        st.n += 1

    def report_cell_count(self, cell: CellId) -> int:
        st = self.cells.get(cell)
        return 0 if st is None else st.n

    def state_dict(self) -> dict:
        return {cell: self.cells[cell].as_dict() for cell in sorted(self.cells)}
